//! Time integration of the conservative density/G system
//!
//!   ρ_t + (ρu)_x = 0,   G_t + (Gu)_x = 0,   G = u_x − 𝓛ρ,
//!
//! with the velocity rebuilt from (ρ, G) at every Runge–Kutta stage:
//! u = 𝓛Φ + Ψ + I₀, where Φ and Ψ are the mean-zero primitives of ρ − κ and
//! G − ν and I₀ = (P₀ − ∫ρΨ)/(2πκ) pins the momentum.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::diagnostics::{self, BlowupReason, DiagnosticsContext, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::field::{Grid, TorusField};
use crate::kernels::KernelSpec;
use crate::operator::SpectralSymbol;

/// Added to max|u| in the CFL denominator.
pub const CFL_FLOOR: f64 = 1e-12;

/// Tolerance of the initial velocity round trip in [`Solver::init_state`].
const ROUND_TRIP_TOL: f64 = 1e-10;

/// A finite Fourier series a₀ + Σ_k (c_k cos kx + s_k sin kx), k = 1, 2, ...
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FourierSeries {
    pub mean: f64,
    /// `cos[k - 1]` multiplies cos(kx).
    pub cos: Vec<f64>,
    /// `sin[k - 1]` multiplies sin(kx).
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn constant(mean: f64) -> Self {
        FourierSeries {
            mean,
            ..Default::default()
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let c: f64 = self
            .cos
            .iter()
            .enumerate()
            .map(|(i, a)| a * ((i + 1) as f64 * x).cos())
            .sum();
        let s: f64 = self
            .sin
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64 * x).sin())
            .sum();
        self.mean + c + s
    }

    /// Σ|c_k| + Σ|s_k|, an upper bound on the oscillation about the mean.
    pub fn amplitude_bound(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|v| v.abs()).sum()
    }

    /// Highest wavenumber carrying a non-zero coefficient.
    pub fn max_mode(&self) -> usize {
        let last = |v: &[f64]| v.iter().rposition(|&a| a != 0.0).map_or(0, |i| i + 1);
        last(&self.cos).max(last(&self.sin))
    }

    fn is_finite(&self) -> bool {
        self.mean.is_finite() && self.cos.iter().chain(&self.sin).all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Preset {
    /// ρ₀ ≡ 1, u₀ ≡ 0.
    Flat,
    /// ρ₀ ≡ 1, u₀ = −sin x.
    Shear,
    /// ρ₀ = 1 + ½cos x, u₀ ≡ 0.
    Bump,
    /// ρ₀ ≡ 1, u₀ = −s·sin x.
    Supercritical(f64),
}

/// Initial density and velocity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ICSpec {
    pub label: String,
    pub rho0: FourierSeries,
    pub u0: FourierSeries,
}

impl ICSpec {
    pub fn preset(p: Preset) -> Self {
        let one = FourierSeries::constant(1.0);
        let sine = |s: f64| FourierSeries {
            mean: 0.0,
            cos: vec![],
            sin: vec![-s],
        };
        match p {
            Preset::Flat => ICSpec::fourier("flat", one, FourierSeries::constant(0.0)),
            Preset::Shear => ICSpec::fourier("shear", one, sine(1.0)),
            Preset::Bump => ICSpec::fourier(
                "bump",
                FourierSeries {
                    mean: 1.0,
                    cos: vec![0.5],
                    sin: vec![],
                },
                FourierSeries::constant(0.0),
            ),
            Preset::Supercritical(s) => {
                ICSpec::fourier(&format!("supercritical({s})"), one, sine(s))
            }
        }
    }

    pub fn fourier(label: &str, rho0: FourierSeries, u0: FourierSeries) -> Self {
        ICSpec {
            label: label.to_string(),
            rho0,
            u0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rho0.is_finite() || !self.u0.is_finite() {
            return Err(Error::Argument(
                "initial condition coefficients must be finite".into(),
            ));
        }
        if self.rho0.mean <= self.rho0.amplitude_bound() {
            return Err(Error::Domain(format!(
                "positivity of initial density required: mean {} must exceed the coefficient magnitude sum {}",
                self.rho0.mean,
                self.rho0.amplitude_bound()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub n: usize,
    pub t_end: f64,
    pub cfl: f64,
    /// Fraction of the resolved modes kept before forming products.
    pub dealias: f64,
    pub snapshot_every: f64,
    pub diagnostics_every: f64,
    pub kernel: KernelSpec,
    pub ic: ICSpec,
    pub symbol_tol: f64,
    /// Constant step instead of the CFL rule (still clamped to event times).
    pub fixed_dt: Option<f64>,
    /// Upper end of the Hölder pair window; defaults to min(r₀, π/2).
    pub holder_r_max: Option<f64>,
    pub max_steps: u64,
}

impl RunConfig {
    pub fn new(kernel: KernelSpec, ic: ICSpec) -> Self {
        RunConfig {
            n: 256,
            t_end: 1.0,
            cfl: 0.4,
            dealias: 2.0 / 3.0,
            snapshot_every: 0.5,
            diagnostics_every: 0.05,
            kernel,
            ic,
            symbol_tol: 1e-10,
            fixed_dt: None,
            holder_r_max: None,
            max_steps: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Grid::new(self.n)?;
        self.kernel.validate()?;
        self.ic.validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Argument(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        positive("t_end", self.t_end)?;
        positive("snapshot_every", self.snapshot_every)?;
        positive("diagnostics_every", self.diagnostics_every)?;
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Argument(format!(
                "cfl must be in (0, 1], got {}",
                self.cfl
            )));
        }
        if !(self.dealias > 0.0 && self.dealias <= 1.0) {
            return Err(Error::Argument(format!(
                "dealias must be in (0, 1], got {}",
                self.dealias
            )));
        }
        if let Some(dt) = self.fixed_dt {
            positive("fixed_dt", dt)?;
        }
        if let Some(r) = self.holder_r_max {
            positive("holder_r_max", r)?;
        }
        if self.ic.rho0.max_mode().max(self.ic.u0.max_mode()) >= self.n / 2 {
            return Err(Error::Argument(format!(
                "initial condition has modes at or above the Nyquist wavenumber {}",
                self.n / 2
            )));
        }
        Ok(())
    }

    pub fn holder_window_max(&self) -> f64 {
        self.holder_r_max
            .unwrap_or_else(|| self.kernel.r0.min(PI / 2.0))
    }
}

/// Full solver state at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub rho: TorusField,
    pub g: TorusField,
    pub kappa: f64,
    pub nu: f64,
    pub p0: f64,
    /// Velocity recovered from (ρ, G); refreshed after every update.
    pub u: TorusField,
    pub steps: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    BlowupDetected,
    PositivityLost,
    NumericalInstability,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::BlowupDetected => "blowup_detected",
            RunStatus::PositivityLost => "positivity_lost",
            RunStatus::NumericalInstability => "numerical_instability",
        }
    }
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlowupEvent {
    pub t: f64,
    pub reason: BlowupReason,
}

/// Result of a single Runge–Kutta step.
#[derive(Debug)]
pub enum StepOutcome {
    Advanced(SimState),
    PositivityLost(SimState),
    NonFinite,
}

/// Per-run solver context: grid, operator symbol and dealiasing fraction.
#[derive(Clone, Debug)]
pub struct Solver {
    grid: Grid,
    symbol: SpectralSymbol,
    dealias: f64,
}

impl Solver {
    pub fn new(grid: Grid, symbol: SpectralSymbol, dealias: f64) -> Result<Self> {
        if symbol.n != grid.n() {
            return Err(Error::Argument(format!(
                "symbol size {} does not match grid size {}",
                symbol.n,
                grid.n()
            )));
        }
        if !(dealias > 0.0 && dealias <= 1.0) {
            return Err(Error::Argument(format!(
                "dealias must be in (0, 1], got {dealias}"
            )));
        }
        Ok(Solver {
            grid,
            symbol,
            dealias,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn symbol(&self) -> &SpectralSymbol {
        &self.symbol
    }

    /// Samples the initial data, forms G₀ = ∂ₓu₀ − 𝓛ρ₀ and checks that
    /// velocity recovery returns u₀.
    pub fn init_state(&self, ic: &ICSpec) -> Result<SimState> {
        ic.validate()?;
        if ic.rho0.max_mode().max(ic.u0.max_mode()) >= self.grid.n() / 2 {
            return Err(Error::Argument(format!(
                "initial condition has modes at or above the Nyquist wavenumber {}",
                self.grid.n() / 2
            )));
        }
        let rho = self.grid.sample(|x| ic.rho0.eval(x));
        let u0 = self.grid.sample(|x| ic.u0.eval(x));
        if rho.min() <= 0.0 {
            return Err(Error::Domain(
                "positivity of initial density required".into(),
            ));
        }
        let lrho = self.apply_operator(&rho);
        let g = self.grid.derivative(&u0)?.combine(1.0, &lrho, -1.0);
        let kappa = rho.mean();
        let nu = g.mean();
        let p0 = 2.0 * PI * rho.zip_map(&u0, |r, v| r * v).mean();
        let u = self.velocity(&rho, &g, kappa, p0)?;
        let gap = u.combine(1.0, &u0, -1.0).max_abs();
        if gap > ROUND_TRIP_TOL * (1.0 + u0.max_abs()) {
            return Err(Error::Numerical {
                what: format!("initial velocity round trip failed by {gap:.3e}"),
                achieved: gap,
            });
        }
        Ok(SimState {
            t: 0.0,
            rho,
            g,
            kappa,
            nu,
            p0,
            u,
            steps: 0,
        })
    }

    pub fn apply_operator(&self, f: &TorusField) -> TorusField {
        let mut c = self.grid.coefficients(f);
        for (i, ck) in c.iter_mut().enumerate() {
            *ck *= self.symbol.at(self.grid.wavenumber(i));
        }
        self.grid.synthesize(&c)
    }

    /// u = 𝓛Φ + Ψ + I₀ for the given (ρ, G) and conserved quantities.
    ///
    /// Φ and Ψ are built mode by mode; the k = 0 modes of ρ and G (κ and ν)
    /// never enter, which is the subtraction of the means.
    pub fn velocity(
        &self,
        rho: &TorusField,
        g: &TorusField,
        kappa: f64,
        p0: f64,
    ) -> Result<TorusField> {
        if kappa == 0.0 {
            return Err(Error::Domain("average density is zero".into()));
        }
        let n = self.grid.n();
        let rho_hat = self.grid.coefficients(rho);
        let g_hat = self.grid.coefficients(g);
        let zero = Complex64::new(0.0, 0.0);
        let mut u_hat = vec![zero; n];
        let mut rho_psi = 0.0;
        for i in 1..n {
            if i == n / 2 {
                continue;
            }
            let k = self.grid.wavenumber(i);
            let ik = Complex64::new(0.0, k as f64);
            let phi = rho_hat[i] / ik;
            let psi = g_hat[i] / ik;
            u_hat[i] = phi * self.symbol.at(k) + psi;
            rho_psi += (rho_hat[i] * psi.conj()).re;
        }
        // ∫ρΨ dx = 2π · mean(ρΨ), the mean taken through Parseval.
        let i0 = (p0 - 2.0 * PI * rho_psi) / (2.0 * PI * kappa);
        u_hat[0] = Complex64::new(i0, 0.0);
        Ok(self.grid.synthesize(&u_hat))
    }

    pub fn recover_velocity(&self, state: &SimState) -> Result<TorusField> {
        self.velocity(&state.rho, &state.g, state.kappa, state.p0)
    }

    /// (−∂ₓ(ρu), −∂ₓ(Gu)) with both factors of each product dealiased.
    pub fn rhs(
        &self,
        rho: &TorusField,
        g: &TorusField,
        u: &TorusField,
    ) -> (TorusField, TorusField) {
        let cutoff = self.grid.dealias_cutoff(self.dealias);
        let filtered = |f: &TorusField| {
            if self.dealias >= 1.0 {
                return f.clone();
            }
            let mut c = self.grid.coefficients(f);
            self.grid.truncate_coefficients(&mut c, cutoff);
            self.grid.synthesize(&c)
        };
        let uf = filtered(u);
        let flux_derivative = |q: &TorusField| {
            let flux = filtered(q).zip_map(&uf, |a, b| a * b);
            let mut c = self.grid.coefficients(&flux);
            self.grid.differentiate_coefficients(&mut c);
            self.grid.synthesize(&c).map(|v| -v)
        };
        (flux_derivative(rho), flux_derivative(g))
    }

    fn stage(
        &self,
        rho: TorusField,
        g: TorusField,
        base: &SimState,
    ) -> Option<(TorusField, TorusField, TorusField)> {
        if !rho.is_finite() || !g.is_finite() {
            return None;
        }
        let u = self
            .velocity(&rho, &g, base.kappa, base.p0)
            .ok()
            .filter(TorusField::is_finite)?;
        Some((rho, g, u))
    }

    /// One three-stage strong-stability-preserving Runge–Kutta step
    /// (Shu–Osher form), recovering the velocity at every stage.
    pub fn step(&self, state: &SimState, dt: f64) -> StepOutcome {
        let (r0, g0) = (&state.rho, &state.g);
        let (dr, dg) = self.rhs(r0, g0, &state.u);
        let Some((r1, g1, u1)) =
            self.stage(r0.combine(1.0, &dr, dt), g0.combine(1.0, &dg, dt), state)
        else {
            return StepOutcome::NonFinite;
        };

        let (dr, dg) = self.rhs(&r1, &g1, &u1);
        let r2 = r0.combine(0.75, &r1.combine(1.0, &dr, dt), 0.25);
        let g2 = g0.combine(0.75, &g1.combine(1.0, &dg, dt), 0.25);
        let Some((r2, g2, u2)) = self.stage(r2, g2, state) else {
            return StepOutcome::NonFinite;
        };

        let (dr, dg) = self.rhs(&r2, &g2, &u2);
        let r3 = r0.combine(1.0 / 3.0, &r2.combine(1.0, &dr, dt), 2.0 / 3.0);
        let g3 = g0.combine(1.0 / 3.0, &g2.combine(1.0, &dg, dt), 2.0 / 3.0);
        let Some((rho, g, u)) = self.stage(r3, g3, state) else {
            return StepOutcome::NonFinite;
        };

        let next = SimState {
            t: state.t + dt,
            rho,
            g,
            u,
            steps: state.steps + 1,
            ..*state
        };
        if next.rho.min() <= 0.0 {
            StepOutcome::PositivityLost(next)
        } else {
            StepOutcome::Advanced(next)
        }
    }

    /// Takes `steps` steps of constant size `dt`.
    pub fn integrate_fixed(&self, state: &SimState, dt: f64, steps: usize) -> Result<SimState> {
        let mut s = state.clone();
        for _ in 0..steps {
            s = match self.step(&s, dt) {
                StepOutcome::Advanced(next) => next,
                StepOutcome::PositivityLost(next) => {
                    return Err(Error::Numerical {
                        what: format!("density lost positivity at t = {}", next.t),
                        achieved: next.rho.min(),
                    })
                }
                StepOutcome::NonFinite => {
                    return Err(Error::Numerical {
                        what: format!("non-finite state after t = {}", s.t),
                        achieved: f64::INFINITY,
                    })
                }
            };
        }
        Ok(s)
    }
}

/// Real-axis stability interval of the three-stage SSP Runge–Kutta scheme,
/// rounded down.
pub const RK3_REAL_STABILITY: f64 = 2.5;

/// min(cfl·Δx/(max|u| + ε), cfl·2.5/(max ρ·λ_max), cap).
///
/// The second bound is the dissipative limit: u_x contains 𝓛ρ, so the
/// density equation carries −ρ𝓛ρ with stiffness up to max ρ·λ_max.
pub fn adaptive_dt(state: &SimState, cfl: f64, cap: f64, lambda_max: f64) -> f64 {
    let dx = 2.0 * PI / state.u.n() as f64;
    let advective = cfl * dx / (state.u.max_abs() + CFL_FLOOR);
    let stiffness = state.rho.max() * lambda_max;
    let dissipative = if stiffness > 0.0 {
        cfl * RK3_REAL_STABILITY / stiffness
    } else {
        f64::INFINITY
    };
    advective.min(dissipative).min(cap)
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub initial: SimState,
    /// Last finite state reached.
    pub last: SimState,
    pub snapshots: Vec<SimState>,
    pub record: DiagnosticsRecord,
    pub blowup: Option<BlowupEvent>,
    pub min_dt: f64,
    pub max_dt: f64,
}

/// Integrates `config` from t = 0 to `t_end` or until a terminal condition.
///
/// Snapshots are taken at multiples of `snapshot_every`, diagnostics rows at
/// multiples of `diagnostics_every` (both including t = 0 and the final
/// time); steps are shortened to land exactly on those times. The blow-up
/// indicator is evaluated after every step.
pub fn run(config: &RunConfig, symbol: SpectralSymbol) -> Result<RunOutcome> {
    config.validate()?;
    let grid = Grid::new(config.n)?;
    let solver = Solver::new(grid.clone(), symbol, config.dealias)?;
    let initial = solver.init_state(&config.ic)?;
    let ctx = DiagnosticsContext::new(&config.kernel, solver.clone(), config.holder_window_max())?;
    let monitor = diagnostics::BlowupMonitor::new(&ctx, &initial);
    let lambda_max = solver.symbol().lambda.iter().copied().fold(0.0, f64::max);

    let mut record = DiagnosticsRecord::default();
    record.push(ctx.measure(&initial)?);
    let mut snapshots = vec![initial.clone()];

    let events = EventClock::new(
        config.t_end,
        config.snapshot_every,
        config.diagnostics_every,
    );
    let mut state = initial.clone();
    let mut min_dt = f64::INFINITY;
    let mut max_dt: f64 = 0.0;
    let mut blowup = None;
    let mut status = RunStatus::Completed;

    while state.t < config.t_end {
        if state.steps >= config.max_steps {
            return Err(Error::Numerical {
                what: format!(
                    "step budget {} exhausted at t = {}",
                    config.max_steps, state.t
                ),
                achieved: state.t,
            });
        }
        let natural = match config.fixed_dt {
            Some(dt) => dt,
            None => adaptive_dt(&state, config.cfl, config.snapshot_every, lambda_max),
        };
        if natural < diagnostics::DT_FLOOR {
            blowup = Some(BlowupEvent {
                t: state.t,
                reason: BlowupReason::TimeStepUnderflow(natural),
            });
            status = RunStatus::BlowupDetected;
            break;
        }
        let target = events.next_after(state.t);
        let (dt, lands) = if state.t + natural >= target - 1e-12 * target.abs().max(1.0) {
            (target - state.t, true)
        } else {
            (natural, false)
        };
        min_dt = min_dt.min(dt);
        max_dt = max_dt.max(dt);

        let next = match solver.step(&state, dt) {
            StepOutcome::Advanced(next) => next,
            StepOutcome::PositivityLost(_) => {
                status = RunStatus::PositivityLost;
                break;
            }
            StepOutcome::NonFinite => {
                status = RunStatus::NumericalInstability;
                break;
            }
        };
        state = next;
        if lands {
            state.t = target;
        }

        if let Some(reason) = monitor.check(&ctx, &state) {
            blowup = Some(BlowupEvent { t: state.t, reason });
            status = RunStatus::BlowupDetected;
            break;
        }
        if lands {
            if events.is_diagnostics_time(target) {
                record.push(ctx.measure(&state)?);
            }
            if events.is_snapshot_time(target) {
                snapshots.push(state.clone());
            }
        }
    }

    if status != RunStatus::Completed && record.last_t() < state.t {
        if let Ok(row) = ctx.measure(&state) {
            record.push(row);
        }
    }
    if min_dt == f64::INFINITY {
        min_dt = 0.0;
    }
    Ok(RunOutcome {
        status,
        initial,
        last: state,
        snapshots,
        record,
        blowup,
        min_dt,
        max_dt,
    })
}

/// Generates the merged sequence of snapshot and diagnostics times.
struct EventClock {
    t_end: f64,
    snapshot_every: f64,
    diagnostics_every: f64,
}

impl EventClock {
    fn new(t_end: f64, snapshot_every: f64, diagnostics_every: f64) -> Self {
        EventClock {
            t_end,
            snapshot_every,
            diagnostics_every,
        }
    }

    fn next_multiple(t: f64, every: f64) -> f64 {
        let mut k = (t / every).floor() + 1.0;
        // guard against t sitting a rounding error below a multiple
        if k * every <= t * (1.0 + 1e-14) + 1e-300 {
            k += 1.0;
        }
        k * every
    }

    fn next_after(&self, t: f64) -> f64 {
        Self::next_multiple(t, self.snapshot_every)
            .min(Self::next_multiple(t, self.diagnostics_every))
            .min(self.t_end)
    }

    fn on_multiple(t: f64, every: f64) -> bool {
        let k = (t / every).round();
        k >= 1.0 && (k * every - t).abs() <= 1e-12 * t.max(1.0)
    }

    fn is_snapshot_time(&self, t: f64) -> bool {
        t == self.t_end || Self::on_multiple(t, self.snapshot_every)
    }

    fn is_diagnostics_time(&self, t: f64) -> bool {
        t == self.t_end || Self::on_multiple(t, self.diagnostics_every)
    }
}
