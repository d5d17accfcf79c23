//! Runtime measurements of the quantities the regularity theory controls:
//! density bounds, the F = G/ρ and Q = ∂ₓF/ρ maximum principles, M-Hölder
//! constants of ρ, the M-Lipschitz constant of u, the critical threshold for
//! integrable kernels, and blow-up tripwires.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dynamics::{ICSpec, RunConfig, RunOutcome, SimState, Solver};
use crate::error::{Error, Result};
use crate::field::{Grid, TorusField};
use crate::kernels::{Kernel, KernelSpec};
use crate::operator::compute_symbol;

/// Hölder exponents reported in every diagnostics row.
pub const HOLDER_BETAS: [f64; 3] = [0.25, 0.5, 0.75];

/// Blow-up fires when the spectral tail fraction of ρ exceeds this.
pub const TAIL_LIMIT: f64 = 0.1;

/// Blow-up fires when max|ρₓ| exceeds this factor times (initial max|ρₓ| + 1).
pub const GRADIENT_FACTOR: f64 = 1e3;

/// Blow-up fires when the CFL step drops below this.
pub const DT_FLOOR: f64 = 1e-12;

/// Largest pair distance in the M-Lipschitz velocity estimate.
pub const LIPSCHITZ_RADIUS: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum BlowupReason {
    TailFraction(f64),
    Gradient(f64),
    TimeStepUnderflow(f64),
}

/// One row of the diagnostics time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub max_abs_rhox: f64,
    pub f_sup: f64,
    pub q_sup: f64,
    pub momentum: f64,
    pub g_residual: f64,
    pub tail_fraction: f64,
    /// K₀(β) for β in [`HOLDER_BETAS`].
    pub k0: [f64; 3],
    /// `None` for the zero kernel, where M ≡ 0.
    pub m_lipschitz: Option<f64>,
    pub kappa: f64,
    pub nu: f64,
}

/// Time series of [`DiagnosticsRow`], strictly increasing in t.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
}

impl DiagnosticsRecord {
    /// Appends a row; rows not strictly later than the last are dropped.
    pub fn push(&mut self, row: DiagnosticsRow) {
        if self.rows.last().is_none_or(|last| row.t > last.t) {
            self.rows.push(row);
        }
    }

    pub fn last_t(&self) -> f64 {
        self.rows.last().map_or(f64::NEG_INFINITY, |r| r.t)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row_at(&self, t: f64) -> Option<&DiagnosticsRow> {
        self.rows
            .iter()
            .find(|r| (r.t - t).abs() <= 1e-12 * t.abs().max(1.0))
    }
}

/// Pair offsets m·Δx with their precomputed tail masses.
#[derive(Clone, Debug)]
pub struct PairWindow {
    offsets: Vec<(usize, f64, f64)>,
}

impl PairWindow {
    /// Offsets m ≥ `m_min` with r_min ≤ mΔx ≤ r_max.
    pub fn new(kernel: &impl Kernel, dx: f64, m_min: usize, r_max: f64) -> Result<Self> {
        let m_max = (r_max / dx * (1.0 + 1e-12)).floor() as usize;
        if m_max < m_min {
            return Err(Error::Argument(format!(
                "pair window [{}, {r_max}] lies below the grid resolution {dx}",
                m_min as f64 * dx
            )));
        }
        let offsets = (m_min..=m_max)
            .map(|m| {
                let d = m as f64 * dx;
                Ok((m, d, kernel.tail_mass(d)?))
            })
            .collect::<Result<_>>()?;
        Ok(PairWindow { offsets })
    }

    /// max over i of |f_i − f_{i+m}| for each offset, periodic.
    fn max_differences(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        self.offsets
            .iter()
            .map(|&(m, _, _)| {
                (0..n)
                    .map(|i| (f[i] - f[(i + m) % n]).abs())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// t^β · max |ρ(x) − ρ(y)| · M(|x − y|)^β over the window, per β.
    pub fn holder_constants(&self, t: f64, rho: &TorusField, betas: &[f64]) -> Vec<f64> {
        let diffs = self.max_differences(rho.values());
        betas
            .iter()
            .map(|&b| {
                let sup = diffs
                    .iter()
                    .zip(&self.offsets)
                    .map(|(d, &(_, _, m))| d * m.powf(b))
                    .fold(0.0, f64::max);
                t.powf(b) * sup
            })
            .collect()
    }

    /// max |u(x) − u(y)| / (|x − y| M(|x − y|)) over the window.
    pub fn lipschitz_constant(&self, u: &TorusField) -> f64 {
        self.max_differences(u.values())
            .iter()
            .zip(&self.offsets)
            .map(|(d, &(_, r, m))| d / (r * m))
            .fold(0.0, f64::max)
    }
}

/// Everything needed to measure a state of one run.
#[derive(Clone, Debug)]
pub struct DiagnosticsContext {
    solver: Solver,
    holder: PairWindow,
    lipschitz: Option<PairWindow>,
}

impl DiagnosticsContext {
    /// `holder_r_max` is the upper end of the Hölder pair window; if it is
    /// below 2Δx the window is widened to the single offset 2Δx.
    pub fn new(kernel: &KernelSpec, solver: Solver, holder_r_max: f64) -> Result<Self> {
        let dx = solver.grid().dx();
        let r_max = if holder_r_max < 2.0 * dx {
            log::warn!(
                "Hölder window upper end {holder_r_max} is below 2dx = {}; using 2dx",
                2.0 * dx
            );
            2.0 * dx
        } else {
            holder_r_max
        };
        let holder = PairWindow::new(kernel, dx, 2, r_max)?;
        let lipschitz = if kernel.total_mass() == Some(0.0) {
            None
        } else {
            Some(PairWindow::new(kernel, dx, 1, LIPSCHITZ_RADIUS)?)
        };
        Ok(DiagnosticsContext {
            solver,
            holder,
            lipschitz,
        })
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }

    pub fn measure(&self, state: &SimState) -> Result<DiagnosticsRow> {
        let grid = self.solver.grid();
        let (min_rho, max_rho) = bounds_monitor(state);
        let rho_hat = grid.coefficients(&state.rho);
        let f = f_field(state);
        let q = q_field(grid, state)?;
        let k0 = self
            .holder
            .holder_constants(state.t, &state.rho, &HOLDER_BETAS);
        Ok(DiagnosticsRow {
            t: state.t,
            min_rho,
            max_rho,
            max_abs_rhox: max_abs_derivative(grid, &rho_hat),
            f_sup: f.max_abs(),
            q_sup: q.max_abs(),
            momentum: momentum(state),
            g_residual: g_residual(&self.solver, state)?,
            tail_fraction: grid.tail_fraction_of(&rho_hat),
            k0: [k0[0], k0[1], k0[2]],
            m_lipschitz: self
                .lipschitz
                .as_ref()
                .map(|w| w.lipschitz_constant(&state.u)),
            kappa: state.rho.mean(),
            nu: state.g.mean(),
        })
    }
}

fn max_abs_derivative(grid: &Grid, coeffs: &[num_complex::Complex64]) -> f64 {
    let mut c = coeffs.to_vec();
    grid.differentiate_coefficients(&mut c);
    grid.synthesize(&c).max_abs()
}

/// (min ρ, max ρ) over the grid.
pub fn bounds_monitor(state: &SimState) -> (f64, f64) {
    (state.rho.min(), state.rho.max())
}

/// F = G/ρ pointwise.
pub fn f_field(state: &SimState) -> TorusField {
    state.g.zip_map(&state.rho, |g, r| g / r)
}

/// Q = ∂ₓF/ρ with the spectral derivative of the pointwise F.
pub fn q_field(grid: &Grid, state: &SimState) -> Result<TorusField> {
    Ok(grid
        .derivative(&f_field(state))?
        .zip_map(&state.rho, |d, r| d / r))
}

/// ∫ρu dx.
pub fn momentum(state: &SimState) -> f64 {
    2.0 * PI * state.rho.zip_map(&state.u, |r, u| r * u).mean()
}

/// max|∂ₓu − 𝓛ρ − G|, the defining identity of G.
pub fn g_residual(solver: &Solver, state: &SimState) -> Result<f64> {
    let ux = solver.grid().derivative(&state.u)?;
    let lrho = solver.apply_operator(&state.rho);
    Ok(ux
        .zip_map(&lrho, |a, b| a - b)
        .zip_map(&state.g, |a, b| a - b)
        .max_abs())
}

/// K₀(β) for each β over pairs with 2Δx ≤ |x − y| ≤ r_max.
pub fn holder_report(
    state: &SimState,
    kernel: &KernelSpec,
    betas: &[f64],
    r_max: f64,
) -> Result<Vec<f64>> {
    if state.t <= 0.0 {
        return Err(Error::Argument("Hölder report needs t > 0".into()));
    }
    if r_max > kernel.r0.min(PI / 2.0) * (1.0 + 1e-12) {
        return Err(Error::Argument(format!(
            "Hölder window end {r_max} exceeds min(r0, pi/2) = {}",
            kernel.r0.min(PI / 2.0)
        )));
    }
    let dx = 2.0 * PI / state.rho.n() as f64;
    Ok(PairWindow::new(kernel, dx, 2, r_max)?.holder_constants(state.t, &state.rho, betas))
}

/// max |u(x) − u(y)| / (|x − y| M(|x − y|)) over pairs with |x − y| ≤ 1.
pub fn m_lipschitz_velocity(state: &SimState, kernel: &KernelSpec) -> Result<f64> {
    if kernel.total_mass() == Some(0.0) {
        return Err(Error::Domain(
            "M-Lipschitz constant is undefined for the zero kernel".into(),
        ));
    }
    let dx = 2.0 * PI / state.u.n() as f64;
    Ok(PairWindow::new(kernel, dx, 1, LIPSCHITZ_RADIUS)?.lipschitz_constant(&state.u))
}

/// Outcome of a maximum-principle audit over a record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrincipleVerdict {
    pub pass: bool,
    pub initial: f64,
    pub worst: f64,
    pub tolerance: f64,
    /// Smallest (tolerance − overshoot) over the ticks; negative on failure.
    pub margin: f64,
    pub first_violation: Option<f64>,
}

impl PrincipleVerdict {
    fn audit(record: &DiagnosticsRecord, value: impl Fn(&DiagnosticsRow) -> f64) -> Result<Self> {
        let first = record
            .rows
            .first()
            .ok_or_else(|| Error::Argument("empty diagnostics record".into()))?;
        let initial = value(first);
        let tolerance = 1e-4 * initial + 1e-8;
        let mut worst: f64 = initial;
        let mut margin = f64::INFINITY;
        let mut first_violation = None;
        for row in &record.rows {
            let v = value(row);
            worst = worst.max(v);
            let m = initial + tolerance - v;
            margin = margin.min(m);
            if (m.is_nan() || m < 0.0) && first_violation.is_none() {
                first_violation = Some(row.t);
            }
        }
        Ok(PrincipleVerdict {
            pass: first_violation.is_none(),
            initial,
            worst,
            tolerance,
            margin,
            first_violation,
        })
    }
}

/// sup|F(t)| ≤ sup|F(0)| + 1e-4·sup|F(0)| + 1e-8 at every tick.
pub fn maximum_principle_f(record: &DiagnosticsRecord) -> Result<PrincipleVerdict> {
    PrincipleVerdict::audit(record, |r| r.f_sup)
}

/// The same bound for sup|Q|.
pub fn transport_q(record: &DiagnosticsRecord) -> Result<PrincipleVerdict> {
    PrincipleVerdict::audit(record, |r| r.q_sup)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdVerdict {
    pub min_sigma: f64,
    pub predicts_global: bool,
}

/// σ₀ = ∂ₓu₀ + ψ⋆ρ₀ on an n-point grid, with ψ̂_k = 2M(0⁺) − λ_k.
/// Global regularity is predicted iff min σ₀ ≥ 0.
pub fn critical_threshold(ic: &ICSpec, kernel: &KernelSpec, n: usize) -> Result<ThresholdVerdict> {
    let mass = match kernel.total_mass() {
        Some(m) if m > 0.0 => m,
        _ => {
            return Err(Error::Domain(format!(
                "the critical threshold needs an integrable non-zero kernel, got {}",
                kernel.family.tag()
            )))
        }
    };
    ic.validate()?;
    let grid = Grid::new(n)?;
    let symbol = compute_symbol(kernel, n, kernel.quad_tol.clamp(1e-14, 1e-6))?;
    let rho0 = grid.sample(|x| ic.rho0.eval(x));
    let u0 = grid.sample(|x| ic.u0.eval(x));
    let conv = grid.apply_multiplier(&rho0, |k| {
        num_complex::Complex64::new(2.0 * mass - symbol.at(k), 0.0)
    })?;
    let sigma = grid.derivative(&u0)?.combine(1.0, &conv, 1.0);
    let min_sigma = sigma.min();
    Ok(ThresholdVerdict {
        min_sigma,
        predicts_global: min_sigma >= 0.0,
    })
}

/// Bisection for the parameter s at which `family(s)` crosses from a
/// predicted-global to a predicted-blow-up datum. Requires the prediction
/// to be global at `lo` and not at `hi`.
pub fn critical_parameter(
    kernel: &KernelSpec,
    n: usize,
    family: impl Fn(f64) -> ICSpec,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let global = |s: f64| critical_threshold(&family(s), kernel, n).map(|v| v.predicts_global);
    if !global(lo)? || global(hi)? {
        return Err(Error::Argument(format!(
            "bisection bracket [{lo}, {hi}] does not straddle the threshold"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if global(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Instantaneous blow-up readout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupIndicator {
    pub max_abs_rhox: f64,
    pub tail_fraction: f64,
    pub fired: Option<BlowupReason>,
}

/// Evaluates the tail-fraction and gradient tripwires against the initial
/// gradient; the time-step floor is checked by the integrator.
pub fn blowup_indicator(grid: &Grid, state: &SimState, initial_max_rhox: f64) -> BlowupIndicator {
    let c = grid.coefficients(&state.rho);
    let tail_fraction = grid.tail_fraction_of(&c);
    let max_abs_rhox = max_abs_derivative(grid, &c);
    let fired = if tail_fraction > TAIL_LIMIT {
        Some(BlowupReason::TailFraction(tail_fraction))
    } else if max_abs_rhox > GRADIENT_FACTOR * (initial_max_rhox + 1.0) {
        Some(BlowupReason::Gradient(max_abs_rhox))
    } else {
        None
    };
    BlowupIndicator {
        max_abs_rhox,
        tail_fraction,
        fired,
    }
}

/// Blow-up tripwires bound to the initial gradient of one run.
#[derive(Clone, Copy, Debug)]
pub struct BlowupMonitor {
    initial_max_rhox: f64,
}

impl BlowupMonitor {
    pub fn new(ctx: &DiagnosticsContext, initial: &SimState) -> Self {
        let grid = ctx.solver().grid();
        BlowupMonitor {
            initial_max_rhox: max_abs_derivative(grid, &grid.coefficients(&initial.rho)),
        }
    }

    pub fn check(&self, ctx: &DiagnosticsContext, state: &SimState) -> Option<BlowupReason> {
        blowup_indicator(ctx.solver().grid(), state, self.initial_max_rhox).fired
    }
}

/// Residual of ρ_t + uρ_x + ρ𝓛ρ + Gρ = 0 between three equally spaced
/// snapshots: |ρ(t₂) − ρ(t₀) + ∫ (uρ_x + ρ𝓛ρ + Gρ) dt| / (t₂ − t₀), the
/// time integral by Simpson's rule. Returns the grid maximum.
pub fn density_equation_residual(
    solver: &Solver,
    s0: &SimState,
    s1: &SimState,
    s2: &SimState,
) -> Result<f64> {
    let h = s1.t - s0.t;
    if h.is_nan() || h <= 0.0 || ((s2.t - s1.t) - h).abs() > 1e-9 * h {
        return Err(Error::Argument(
            "snapshots must be equally spaced in time".into(),
        ));
    }
    let forcing = |s: &SimState| -> Result<TorusField> {
        let rx = solver.grid().derivative(&s.rho)?;
        let lr = solver.apply_operator(&s.rho);
        let a = s.u.zip_map(&rx, |u, r| u * r);
        let b = s.rho.zip_map(&lr, |r, l| r * l);
        let c = s.g.zip_map(&s.rho, |g, r| g * r);
        Ok(a.combine(1.0, &b, 1.0).combine(1.0, &c, 1.0))
    };
    let (f0, f1, f2) = (forcing(s0)?, forcing(s1)?, forcing(s2)?);
    let integral = f0
        .combine(1.0, &f1, 4.0)
        .combine(1.0, &f2, 1.0)
        .map(|v| v * h / 3.0);
    let change = s2.rho.combine(1.0, &s0.rho, -1.0);
    Ok(change.combine(1.0, &integral, 1.0).max_abs() / (2.0 * h))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Envelopes {
    pub min_rho: f64,
    pub max_rho: f64,
    pub max_abs_rhox: f64,
    pub f_sup: f64,
    pub q_sup: f64,
    pub g_residual: f64,
    pub tail_fraction: f64,
    /// Largest K₀(β) over ticks with t > 0, per β in [`HOLDER_BETAS`].
    pub k0: [f64; 3],
    pub m_lipschitz: Option<f64>,
    pub kappa_drift: f64,
    pub nu_drift: f64,
    pub momentum_drift: f64,
}

impl Envelopes {
    pub fn of(record: &DiagnosticsRecord, initial: &SimState) -> Option<Self> {
        let rows = &record.rows;
        if rows.is_empty() {
            return None;
        }
        let max = |f: &dyn Fn(&DiagnosticsRow) -> f64| {
            rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max)
        };
        let min =
            |f: &dyn Fn(&DiagnosticsRow) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
        let lip = rows
            .iter()
            .map(|r| r.m_lipschitz)
            .try_fold(0.0_f64, |acc, v| v.map(|v| acc.max(v)));
        Some(Envelopes {
            min_rho: min(&|r| r.min_rho),
            max_rho: max(&|r| r.max_rho),
            max_abs_rhox: max(&|r| r.max_abs_rhox),
            f_sup: max(&|r| r.f_sup),
            q_sup: max(&|r| r.q_sup),
            g_residual: max(&|r| r.g_residual),
            tail_fraction: max(&|r| r.tail_fraction),
            k0: [0, 1, 2].map(|i| max(&|r| r.k0[i])),
            m_lipschitz: lip,
            kappa_drift: max(&|r| (r.kappa - initial.kappa).abs()),
            nu_drift: max(&|r| (r.nu - initial.nu).abs()),
            momentum_drift: max(&|r| (r.momentum - initial.p0).abs()),
        })
    }
}

/// Per-run summary written next to the time series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub status: String,
    pub kernel: String,
    pub ic: String,
    pub n: usize,
    pub t_end: f64,
    pub t_final: f64,
    pub steps: u64,
    pub min_dt: f64,
    pub max_dt: f64,
    pub blowup: Option<crate::dynamics::BlowupEvent>,
    pub envelopes: Option<Envelopes>,
    pub maximum_principle_f: Option<PrincipleVerdict>,
    pub transport_q: Option<PrincipleVerdict>,
    /// Only for integrable kernels.
    pub threshold: Option<ThresholdVerdict>,
}

impl RunSummary {
    pub fn new(config: &RunConfig, outcome: &RunOutcome) -> Self {
        let threshold = critical_threshold(&config.ic, &config.kernel, config.n).ok();
        RunSummary {
            status: outcome.status.as_str().to_string(),
            kernel: config.kernel.identity(),
            ic: config.ic.label.clone(),
            n: config.n,
            t_end: config.t_end,
            t_final: outcome.last.t,
            steps: outcome.last.steps,
            min_dt: outcome.min_dt,
            max_dt: outcome.max_dt,
            blowup: outcome.blowup,
            envelopes: Envelopes::of(&outcome.record, &outcome.initial),
            maximum_principle_f: maximum_principle_f(&outcome.record).ok(),
            transport_q: transport_q(&outcome.record).ok(),
            threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Preset;

    fn context(kernel: &KernelSpec, n: usize) -> DiagnosticsContext {
        let symbol = compute_symbol(kernel, n, 1e-12).unwrap();
        let solver = Solver::new(Grid::new(n).unwrap(), symbol, 2.0 / 3.0).unwrap();
        DiagnosticsContext::new(kernel, solver, kernel.r0.min(PI / 2.0)).unwrap()
    }

    #[test]
    fn flat_and_bump_bounds() {
        let ctx = context(&KernelSpec::inverse_linear(), 64);
        let flat = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Flat))
            .unwrap();
        assert_eq!(bounds_monitor(&flat), (1.0, 1.0));
        let bump = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Bump))
            .unwrap();
        let (lo, hi) = bounds_monitor(&bump);
        assert!((lo - 0.5).abs() < 1e-15 && (hi - 1.5).abs() < 1e-15);
    }

    #[test]
    fn shear_f_and_q_suprema_are_one() {
        let ctx = context(&KernelSpec::inverse_linear(), 64);
        let s = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Shear))
            .unwrap();
        let row = ctx.measure(&s).unwrap();
        assert!((row.f_sup - 1.0).abs() < 1e-14);
        // grid contains x = π/2 where sin x = 1
        assert!((row.q_sup - 1.0).abs() < 1e-13);
        assert!(row.g_residual < 1e-12);
    }

    #[test]
    fn holder_constant_vanishes_on_constant_density() {
        let ctx = context(&KernelSpec::inverse_linear(), 128);
        let mut s = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Flat))
            .unwrap();
        s.t = 0.5;
        let k0 = holder_report(&s, &KernelSpec::inverse_linear(), &HOLDER_BETAS, 0.1).unwrap();
        assert_eq!(k0, vec![0.0; 3]);
    }

    #[test]
    fn holder_window_must_be_resolved() {
        let ctx = context(&KernelSpec::inverse_linear(), 64);
        let mut s = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Bump))
            .unwrap();
        s.t = 1.0;
        let err = holder_report(&s, &KernelSpec::inverse_linear(), &HOLDER_BETAS, 0.1).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }

    #[test]
    fn m_lipschitz_ignores_constant_shifts() {
        let ctx = context(&KernelSpec::inverse_linear(), 128);
        let mut s = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Flat))
            .unwrap();
        let k = KernelSpec::inverse_linear();
        assert_eq!(m_lipschitz_velocity(&s, &k).unwrap(), 0.0);
        s.u = ctx.solver().grid().sample(f64::sin);
        let a = m_lipschitz_velocity(&s, &k).unwrap();
        s.u = s.u.map(|v| v + 3.0);
        let b = m_lipschitz_velocity(&s, &k).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn threshold_for_flat_data_is_twice_the_mass() {
        let k = KernelSpec::lipschitz_gaussian();
        let v = critical_threshold(&ICSpec::preset(Preset::Flat), &k, 64).unwrap();
        assert!((v.min_sigma - (2.0 * PI).sqrt()).abs() < 1e-10);
        assert!(v.predicts_global);
    }

    #[test]
    fn threshold_rejects_singular_kernels() {
        let err = critical_threshold(
            &ICSpec::preset(Preset::Flat),
            &KernelSpec::inverse_linear(),
            64,
        );
        assert!(matches!(err, Err(Error::Domain(_))));
        let err = critical_threshold(&ICSpec::preset(Preset::Flat), &KernelSpec::zero(), 64);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn threshold_bisection_finds_root_two_pi() {
        let k = KernelSpec::lipschitz_gaussian();
        let s = critical_parameter(
            &k,
            64,
            |s| ICSpec::preset(Preset::Supercritical(s)),
            0.0,
            10.0,
            1e-10,
        )
        .unwrap();
        assert!((s - (2.0 * PI).sqrt()).abs() < 1e-8, "{s}");
    }

    #[test]
    fn flat_state_never_fires_blowup() {
        let ctx = context(&KernelSpec::inverse_linear(), 64);
        let s = ctx
            .solver()
            .init_state(&ICSpec::preset(Preset::Flat))
            .unwrap();
        let ind = blowup_indicator(ctx.solver().grid(), &s, 0.0);
        assert_eq!(ind.fired, None);
        assert_eq!(ind.tail_fraction, 0.0);
    }

    #[test]
    fn principle_audit_reports_first_violation() {
        let row = |t: f64, f: f64| DiagnosticsRow {
            t,
            min_rho: 1.0,
            max_rho: 1.0,
            max_abs_rhox: 0.0,
            f_sup: f,
            q_sup: 0.0,
            momentum: 0.0,
            g_residual: 0.0,
            tail_fraction: 0.0,
            k0: [0.0; 3],
            m_lipschitz: None,
            kappa: 1.0,
            nu: 0.0,
        };
        let mut rec = DiagnosticsRecord::default();
        rec.push(row(0.0, 1.0));
        rec.push(row(0.1, 1.00005));
        rec.push(row(0.2, 1.01));
        rec.push(row(0.2, 5.0));
        assert_eq!(rec.len(), 3);
        let v = maximum_principle_f(&rec).unwrap();
        assert!(!v.pass);
        assert_eq!(v.first_violation, Some(0.2));
        assert!(transport_q(&rec).unwrap().pass);
    }
}
