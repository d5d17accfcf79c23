//! File formats: binary snapshots, the diagnostics CSV and JSON summaries.
//! Every writer goes through [`write_atomic`] so no partial file is ever
//! visible under its final name.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::DiagnosticsRecord;
use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::field::TorusField;

pub use crate::operator::write_atomic;

pub const SNAPSHOT_MAGIC: &[u8; 6] = b"EASNP1";

pub const CSV_HEADER: &str =
    "t,min_rho,max_rho,max_abs_rhox,f_sup,q_sup,momentum,g_residual,tail_fraction,k0_beta25,k0_beta50,k0_beta75";

/// Snapshot record: magic, n (u32 LE), t, κ, ν, P₀ (f64 LE), then ρ, G, u.
pub fn encode_snapshot(state: &SimState) -> Vec<u8> {
    let n = state.rho.n();
    let mut out = Vec::with_capacity(6 + 4 + 32 + 24 * n);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in [state.t, state.kappa, state.nu, state.p0] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for field in [&state.rho, &state.g, &state.u] {
        for v in field.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_snapshot`]; the step counter is not stored and reads
/// back as zero.
pub fn decode_snapshot(bytes: &[u8], path: &Path) -> Result<SimState> {
    let bad = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut r = bytes;
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)
        .map_err(|_| bad("truncated header"))?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(bad("bad snapshot magic"));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4).map_err(|_| bad("truncated header"))?;
    let n = u32::from_le_bytes(b4) as usize;
    if r.len() != 32 + 24 * n {
        return Err(bad(&format!(
            "expected {} payload bytes for n = {n}, found {}",
            32 + 24 * n,
            r.len()
        )));
    }
    let floats: Vec<f64> = r
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let field = |k: usize| {
        TorusField::new(floats[4 + k * n..4 + (k + 1) * n].to_vec())
            .map_err(|_| bad("non-finite field value"))
    };
    Ok(SimState {
        t: floats[0],
        kappa: floats[1],
        nu: floats[2],
        p0: floats[3],
        rho: field(0)?,
        g: field(1)?,
        u: field(2)?,
        steps: 0,
    })
}

pub fn write_snapshot(path: &Path, state: &SimState) -> Result<()> {
    write_atomic(path, &encode_snapshot(state))
}

pub fn read_snapshot(path: &Path) -> Result<SimState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes, path)
}

/// Diagnostics time series as CSV text, floats in shortest round-trip form.
pub fn diagnostics_csv(record: &DiagnosticsRecord) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &record.rows {
        let cells = [
            r.t,
            r.min_rho,
            r.max_rho,
            r.max_abs_rhox,
            r.f_sup,
            r.q_sup,
            r.momentum,
            r.g_residual,
            r.tail_fraction,
            r.k0[0],
            r.k0[1],
            r.k0[2],
        ];
        let line: Vec<String> = cells.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn write_diagnostics_csv(path: &Path, record: &DiagnosticsRecord) -> Result<()> {
    write_atomic(path, diagnostics_csv(record).as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::DiagnosticsRow;

    fn state() -> SimState {
        let f = |s: f64| TorusField::new((0..32).map(|j| s + j as f64 * 0.125).collect()).unwrap();
        SimState {
            t: 0.75,
            rho: f(1.0),
            g: f(-2.0),
            kappa: 1.5,
            nu: 0.0,
            p0: -0.25,
            u: f(0.3),
            steps: 9,
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let s = state();
        let bytes = encode_snapshot(&s);
        assert_eq!(&bytes[..6], b"EASNP1");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 32);
        assert_eq!(bytes.len(), 10 + 32 + 24 * 32);
        let back = decode_snapshot(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, SimState { steps: 0, ..s });
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let mut bytes = encode_snapshot(&state());
        bytes.pop();
        assert!(matches!(
            decode_snapshot(&bytes, Path::new("x")),
            Err(Error::Format { .. })
        ));
        bytes = encode_snapshot(&state());
        bytes[0] = b'X';
        assert!(matches!(
            decode_snapshot(&bytes, Path::new("x")),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn csv_layout() {
        let mut rec = DiagnosticsRecord::default();
        rec.push(DiagnosticsRow {
            t: 0.1,
            min_rho: 0.5,
            max_rho: 1.5,
            max_abs_rhox: 0.5,
            f_sup: 1.0,
            q_sup: 1.0,
            momentum: 0.0,
            g_residual: 1e-15,
            tail_fraction: 0.0,
            k0: [0.25, 0.5, 0.75],
            m_lipschitz: Some(1.0),
            kappa: 1.0,
            nu: 0.0,
        });
        let text = diagnostics_csv(&rec);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "0.1,0.5,1.5,0.5,1,1,0,0.000000000000001,0,0.25,0.5,0.75"
        );
    }
}
