//! The nonlocal operator 𝓛f(x) = ∫ ψ(x−y)(f(x) − f(y)) dy on the 2π-torus.
//!
//! Two independent routes are provided: the Fourier multiplier
//! λ_k = 2∫₀^∞ ψ(z)(1 − cos kz) dz applied by FFT ([`apply_spectral`]) and a
//! real-space quadrature against the periodized kernel ([`apply_direct`]).

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::{Grid, TorusField};
use crate::kernels::Kernel;
use crate::quadrature;

pub const SYMBOL_MAGIC: &[u8; 6] = b"EASYM1";

/// Number of explicit periodic images on each side in [`apply_direct`];
/// the remainder is summed by a midpoint Euler–Maclaurin correction.
const IMAGES: usize = 64;

/// Smoothness limit (spectral tail fraction) accepted by [`apply_direct`].
pub const DIRECT_TAIL_LIMIT: f64 = 0.1;

const PANEL_BUDGET: usize = 200;
const DECADE_STEPS: usize = 400;

/// Fourier multiplier of 𝓛 on an n-point grid, indexed by |k| = 0..=n/2.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSymbol {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub kernel_id: String,
    pub tol: f64,
}

impl SpectralSymbol {
    pub fn at(&self, k: i64) -> f64 {
        self.lambda[k.unsigned_abs() as usize]
    }

    /// Binary record: magic, n as u32 LE, then n/2 + 1 f64 LE values.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(SYMBOL_MAGIC)?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        for v in &self.lambda {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read, kernel_id: &str, tol: f64) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != SYMBOL_MAGIC {
            return Err(bad("bad symbol magic"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        if n < 2 || !n.is_power_of_two() {
            return Err(bad("symbol size is not a power of two"));
        }
        let mut lambda = Vec::with_capacity(n / 2 + 1);
        let mut b8 = [0u8; 8];
        for _ in 0..=n / 2 {
            r.read_exact(&mut b8)?;
            lambda.push(f64::from_le_bytes(b8));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes after symbol record"));
        }
        Ok(SpectralSymbol {
            n,
            lambda,
            kernel_id: kernel_id.to_string(),
            tol,
        })
    }
}

/// λ_k for k = 0..=n/2, parallel over k.
pub fn compute_symbol<K: Kernel + ?Sized>(
    kernel: &K,
    n: usize,
    tol: f64,
) -> Result<SpectralSymbol> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Argument(format!(
            "symbol size must be a power of two, got {n}"
        )));
    }
    if !(1e-14..=1e-6).contains(&tol) {
        return Err(Error::Argument(format!(
            "symbol tolerance must be in [1e-14, 1e-6], got {tol}"
        )));
    }
    let lambda = if kernel.total_mass() == Some(0.0) {
        vec![0.0; n / 2 + 1]
    } else {
        let mut lambda = vec![0.0];
        let rest: Result<Vec<f64>> = (1..=n / 2)
            .into_par_iter()
            .map(|k| symbol_mode(kernel, k as f64, tol))
            .collect();
        lambda.extend(rest?);
        lambda
    };
    Ok(SpectralSymbol {
        n,
        lambda,
        kernel_id: kernel.identity(),
        tol,
    })
}

/// 2∫₀^∞ ψ(z)(1 − cos kz) dz for one wavenumber k ≥ 1.
///
/// The near cell [0, π/k] is integrated in log-radius, adding decades toward
/// the origin until the geometric remainder is negligible; (1 − cos kz) ≤
/// k²z²/2 makes the integrand decay there. Between π/k and Z the domain is
/// split at the zeros mπ/k. Beyond Z = mπ/k the tail is
/// M(Z) − ∫_Z^∞ ψ cos kz, where two integrations by parts give
/// ∫_Z^∞ ψ cos kz = −(−1)^m ψ'(Z)/k² + R with |R| ≤ 2|ψ''(Z)|/k³.
pub fn symbol_mode<K: Kernel + ?Sized>(kernel: &K, k: f64, tol: f64) -> Result<f64> {
    let one_minus_cos = |z: f64| {
        let s = (0.5 * k * z).sin();
        2.0 * s * s
    };

    // near cell
    let near_integrand = |y: f64| {
        let z = y.exp();
        kernel.psi(z) * one_minus_cos(z) * z
    };
    let decade = 3.0 * std::f64::consts::LN_10;
    let mut hi = (PI / k).ln();
    let mut lo = hi - decade;
    let mut near =
        quadrature::integrate(near_integrand, lo, hi, 0.0, 1e-2 * tol, PANEL_BUDGET)?.value;
    let mut previous = near;
    let mut converged = false;
    for _ in 0..DECADE_STEPS {
        hi = lo;
        lo -= decade;
        let piece =
            quadrature::integrate(near_integrand, lo, hi, 0.0, 1e-2 * tol, PANEL_BUDGET)?.value;
        near += piece;
        if piece == 0.0 {
            converged = true;
            break;
        }
        let q = piece / previous;
        if q < 1.0 && piece * q / (1.0 - q) <= 1e-2 * tol * near {
            converged = true;
            break;
        }
        previous = piece;
    }
    if !converged {
        return Err(Error::Numerical {
            what: format!("near-origin cell of lambda_{k} did not converge"),
            achieved: previous / near,
        });
    }

    // oscillation panels
    let panel_integrand = |z: f64| kernel.psi(z) * one_minus_cos(z);
    let mut middle = 0.0;
    let mut m: u64 = 1;
    let far_start = 3.0_f64.max(2.0 * PI / k);
    loop {
        let a = m as f64 * PI / k;
        let b = (m + 1) as f64 * PI / k;
        let floor = 1e-3 * tol * (near + middle);
        middle +=
            quadrature::integrate(panel_integrand, a, b, floor, 1e-2 * tol, PANEL_BUDGET)?.value;
        m += 1;
        if b >= far_start {
            let h = 1e-3 * b;
            let d2 = (kernel.dpsi(b + h) - kernel.dpsi(b - h)) / (2.0 * h);
            // factor 2 on the remainder bound covers the difference quotient
            let remainder = 4.0 * d2.abs() / (k * k * k);
            if remainder <= 0.1 * tol * (near + middle) {
                break;
            }
        }
        if m > 50_000_000 {
            return Err(Error::Numerical {
                what: format!("far field of lambda_{k} did not converge"),
                achieved: f64::INFINITY,
            });
        }
    }
    let z = m as f64 * PI / k;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let tail = kernel.tail_mass(z)? + sign * kernel.dpsi(z) / (k * k);
    Ok(2.0 * (near + middle + tail))
}

fn check_sizes(symbol: &SpectralSymbol, grid: &Grid, f: &TorusField) -> Result<()> {
    if symbol.n != f.n() || grid.n() != f.n() {
        return Err(Error::Argument(format!(
            "size mismatch: symbol n = {}, grid n = {}, field n = {}",
            symbol.n,
            grid.n(),
            f.n()
        )));
    }
    Ok(())
}

/// 𝓛f by multiplying the k-th Fourier coefficient by λ_|k|.
pub fn apply_spectral(symbol: &SpectralSymbol, grid: &Grid, f: &TorusField) -> Result<TorusField> {
    check_sizes(symbol, grid, f)?;
    grid.apply_multiplier(f, |k| Complex64::new(symbol.at(k), 0.0))
}

/// Periodized kernel Σ_j ψ(|z + 2πj|) for 0 < z ≤ π.
///
/// Images with |j| ≤ [`IMAGES`] are summed explicitly; each far tail is the
/// midpoint Euler–Maclaurin estimate M(s)/(2π) + (2π/24) ψ'(s) at the first
/// omitted half-image s.
pub fn periodized_kernel<K: Kernel + ?Sized>(kernel: &K, z: f64) -> Result<f64> {
    let two_pi = 2.0 * PI;
    let mut sum = kernel.psi(z);
    for j in 1..=IMAGES {
        let shift = two_pi * j as f64;
        sum += kernel.psi(z + shift) + kernel.psi(shift - z);
    }
    let edge = two_pi * (IMAGES as f64 + 0.5);
    for s in [edge + z, edge - z] {
        sum += kernel.tail_mass(s)? / two_pi + two_pi / 24.0 * kernel.dpsi(s);
    }
    Ok(sum)
}

/// ∫₀^h z² ψ_per(z) dz, the weight of the innermost cell.
fn inner_cell_weight<K: Kernel + ?Sized>(kernel: &K, h: f64) -> Result<f64> {
    let tol = kernel.quad_tol();
    let g = |y: f64| {
        let z = y.exp();
        z * z * z * kernel.psi(z)
    };
    let decade = 3.0 * std::f64::consts::LN_10;
    let mut hi = h.ln();
    let mut total = 0.0;
    let mut previous = f64::INFINITY;
    for _ in 0..DECADE_STEPS {
        let piece = quadrature::integrate(g, hi - decade, hi, 0.0, 1e-2 * tol, PANEL_BUDGET)?.value;
        total += piece;
        let q = piece / previous;
        if piece == 0.0 || (q < 1.0 && piece * q / (1.0 - q) <= 1e-3 * tol * total) {
            break;
        }
        previous = piece;
        hi -= decade;
    }
    // images are smooth on [0, h]
    let images = quadrature::composite_gauss_legendre(
        |z| {
            let z = z.max(f64::MIN_POSITIVE);
            let per = periodized_kernel(kernel, z).unwrap_or(f64::NAN);
            z * z * (per - kernel.psi(z))
        },
        &[0.0, h],
        8,
    );
    if !images.is_finite() {
        return Err(Error::Numerical {
            what: "periodized kernel evaluation failed in the inner cell".into(),
            achieved: f64::INFINITY,
        });
    }
    Ok(total + images)
}

/// Real-space oracle for 𝓛f:
/// (𝓛f)(x_i) = ∫₀^π ψ_per(z)(2f(x_i) − f(x_i − z) − f(x_i + z)) dz.
///
/// The innermost cell [0, h), h = π/(refinement·n), uses
/// 2f(x) − f(x−z) − f(x+z) ≈ −f''(x) z²; the rest is composite
/// Gauss–Legendre on panels graded geometrically from h up to width Δx.
/// Off-grid values come from trigonometric interpolation.
pub fn apply_direct<K: Kernel + ?Sized>(
    kernel: &K,
    grid: &Grid,
    f: &TorusField,
    refinement: usize,
) -> Result<TorusField> {
    if f.n() != grid.n() {
        return Err(Error::Argument(format!(
            "size mismatch: grid n = {}, field n = {}",
            grid.n(),
            f.n()
        )));
    }
    if refinement < 4 {
        return Err(Error::Argument(format!(
            "refinement must be at least 4, got {refinement}"
        )));
    }
    let coeffs = grid.coefficients(f);
    let tail = grid.tail_fraction_of(&coeffs);
    if tail >= DIRECT_TAIL_LIMIT {
        return Err(Error::Argument(format!(
            "field is not smooth enough for the real-space quadrature (spectral tail fraction {tail:.3} >= {DIRECT_TAIL_LIMIT})"
        )));
    }
    let n = grid.n();
    if kernel.total_mass() == Some(0.0) {
        return Ok(grid.constant(0.0));
    }

    let h = PI / (refinement * n) as f64;
    let dx = grid.dx();
    let mut edges = vec![h];
    let mut e = h;
    while e < PI {
        e = (e + e.min(dx)).min(PI);
        edges.push(e);
    }
    let (gx, gw) = quadrature::gauss_legendre(16);
    let mut nodes = Vec::with_capacity(edges.len() * gx.len());
    for w in edges.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let half = 0.5 * (w[1] - w[0]);
        for (&x, &wt) in gx.iter().zip(&gw) {
            nodes.push((c + half * x, half * wt));
        }
    }
    let weighted: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&(z, w)| Ok((z, w * periodized_kernel(kernel, z)?)))
        .collect::<Result<_>>()?;

    let values = f.values();
    let partials: Vec<Vec<f64>> = weighted
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut shifted = vec![Complex64::new(0.0, 0.0); n];
            for &(z, w) in chunk {
                for (i, (s, c)) in shifted.iter_mut().zip(&coeffs).enumerate() {
                    let k = grid.wavenumber(i) as f64;
                    *s = c * (2.0 * (k * z).cos());
                }
                // f(x_i - z) + f(x_i + z) at every grid point
                let pair = grid.synthesize(&shifted);
                for ((a, &fi), &p) in acc.iter_mut().zip(values).zip(pair.values()) {
                    *a += w * (2.0 * fi - p);
                }
            }
            acc
        })
        .collect();

    let mut out = vec![0.0; n];
    for part in &partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    let inner = inner_cell_weight(kernel, h)?;
    let f2 = grid.second_derivative(f)?;
    for (o, d2) in out.iter_mut().zip(f2.values()) {
        *o -= d2 * inner;
    }
    Ok(TorusField::from_vec(out))
}

/// On-disk cache of symbols keyed by (kernel identity hash, n, tol).
#[derive(Clone, Debug)]
pub struct SymbolCache {
    dir: PathBuf,
}

impl SymbolCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SymbolCache { dir: dir.into() }
    }

    pub fn path_for<K: Kernel + ?Sized>(&self, kernel: &K, n: usize, tol: f64) -> PathBuf {
        let digest = Sha256::digest(kernel.identity().as_bytes());
        let hash: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
        self.dir.join(format!("{hash}_n{n}_tol{tol:e}.sym"))
    }

    pub fn get_or_compute<K: Kernel + ?Sized>(
        &self,
        kernel: &K,
        n: usize,
        tol: f64,
    ) -> Result<SpectralSymbol> {
        let path = self.path_for(kernel, n, tol);
        if let Ok(file) = fs::File::open(&path) {
            match SpectralSymbol::read_from(std::io::BufReader::new(file), &kernel.identity(), tol)
            {
                Ok(sym) if sym.n == n => return Ok(sym),
                _ => log::warn!("ignoring unreadable symbol cache entry {}", path.display()),
            }
        }
        let symbol = compute_symbol(kernel, n, tol)?;
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut bytes = Vec::new();
        symbol
            .write_to(&mut bytes)
            .map_err(|e| Error::io(&path, e))?;
        write_atomic(&path, &bytes)?;
        Ok(symbol)
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let seq = SEQ.fetch_add(1, Ordering::Relaxed);
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}.{seq}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn lambda_zero_and_nonnegative() {
        for spec in [
            KernelSpec::inverse_linear(),
            KernelSpec::log_damped(),
            KernelSpec::power(1.2),
        ] {
            let sym = compute_symbol(&spec, 64, 1e-10).unwrap();
            assert_eq!(sym.lambda[0], 0.0);
            assert!(sym.lambda.iter().all(|&l| l >= 0.0));
            assert_eq!(sym.lambda.len(), 33);
        }
    }

    #[test]
    fn gaussian_symbol_has_closed_form() {
        // 2∫₀^∞ e^{-z²/2}(1 - cos kz) dz = √(2π)(1 - e^{-k²/2})
        let spec = KernelSpec::lipschitz_gaussian();
        let sym = compute_symbol(&spec, 64, 1e-12).unwrap();
        for k in 1..=32 {
            let exact = (2.0 * PI).sqrt() * (1.0 - (-((k * k) as f64) / 2.0).exp());
            assert!((sym.lambda[k] - exact).abs() < 1e-11 * exact, "k={k}");
        }
    }

    #[test]
    fn symbol_rejects_bad_arguments() {
        let spec = KernelSpec::inverse_linear();
        assert!(compute_symbol(&spec, 100, 1e-10).is_err());
        assert!(compute_symbol(&spec, 64, 1e-3).is_err());
        assert!(compute_symbol(&spec, 64, 1e-16).is_err());
    }

    #[test]
    fn zero_kernel_symbol_vanishes() {
        let sym = compute_symbol(&KernelSpec::zero(), 32, 1e-10).unwrap();
        assert!(sym.lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn spectral_application_on_eigenfunctions() {
        let grid = Grid::new(64).unwrap();
        let spec = KernelSpec::inverse_linear();
        let sym = compute_symbol(&spec, 64, 1e-10).unwrap();
        let c = apply_spectral(&sym, &grid, &grid.constant(3.0)).unwrap();
        assert!(c.max_abs() < 1e-14);
        let f = grid.sample(|x| (3.0 * x).cos());
        let lf = apply_spectral(&sym, &grid, &f).unwrap();
        let expect = f.map(|v| v * sym.lambda[3]);
        assert!(lf.combine(1.0, &expect, -1.0).max_abs() < 1e-13);
        let other = Grid::new(32).unwrap();
        assert!(apply_spectral(&sym, &other, &other.constant(1.0)).is_err());
    }

    #[test]
    fn direct_rejects_rough_fields_and_low_refinement() {
        let grid = Grid::new(64).unwrap();
        let spec = KernelSpec::inverse_linear();
        let rough = grid.sample(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let rough = rough.combine(1.0, &grid.sample(|x| (30.0 * x).cos()), 1.0);
        assert!(matches!(
            apply_direct(&spec, &grid, &rough, 4),
            Err(Error::Argument(_))
        ));
        let smooth = grid.sample(|x| x.cos());
        assert!(apply_direct(&spec, &grid, &smooth, 2).is_err());
    }

    #[test]
    fn direct_constant_field_is_zero() {
        let grid = Grid::new(32).unwrap();
        let out =
            apply_direct(&KernelSpec::inverse_linear(), &grid, &grid.constant(2.5), 4).unwrap();
        assert!(out.max_abs() < 1e-13);
    }

    #[test]
    fn symbol_round_trips_through_binary_record() {
        let sym = compute_symbol(&KernelSpec::inverse_linear(), 32, 1e-10).unwrap();
        let mut bytes = Vec::new();
        sym.write_to(&mut bytes).unwrap();
        assert_eq!(&bytes[..6], b"EASYM1");
        assert_eq!(bytes.len(), 6 + 4 + 17 * 8);
        let back = SpectralSymbol::read_from(&bytes[..], &sym.kernel_id, sym.tol).unwrap();
        assert_eq!(back, sym);
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(SpectralSymbol::read_from(&corrupt[..], "", 0.0).is_err());
        assert!(SpectralSymbol::read_from(&bytes[..20], "", 0.0).is_err());
    }

    #[test]
    fn cache_reuses_stored_symbol() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SymbolCache::new(dir.path());
        let spec = KernelSpec::inverse_linear();
        let a = cache.get_or_compute(&spec, 32, 1e-10).unwrap();
        assert!(cache.path_for(&spec, 32, 1e-10).exists());
        let b = cache.get_or_compute(&spec, 32, 1e-10).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            cache.path_for(&spec, 32, 1e-10),
            cache.path_for(&spec, 64, 1e-10)
        );
    }
}
