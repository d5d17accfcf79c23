//! Interaction kernels ψ(r), their tail masses M(r) = ∫_r^∞ ψ, and numerical
//! audits of the structural assumptions the regularity theory places on ψ.
//!
//! Every built-in family is even, positive and strictly decreasing on
//! (0, ∞), and decays at least like r⁻³ (or like a Gaussian) at infinity so
//! that M(r) is finite for r > 0.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature;

/// Monotonicity slack: relative changes below this are treated as roundoff.
pub const MONOTONE_SLACK: f64 = 1e-10;

/// Probe exponents used as a finite stand-in for "for any α > 0" in the
/// power sandwich condition.
pub const SANDWICH_PROBES: [f64; 4] = [0.1, 0.25, 0.5, 1.0];

/// Probe exponents for the r^β M(r) → 0 decay check.
pub const DECAY_PROBES: [f64; 3] = [0.1, 0.3, 0.5];

/// Largest admissible growth of a probe quantity toward r → 0 (max over
/// r_i < r_j of q(r_i)/q(r_j)) before the quantity is declared unbounded.
pub const GROWTH_LIMIT: f64 = 100.0;

const QUAD_BUDGET: usize = 4000;

/// Everything the solver needs from an interaction kernel.
pub trait Kernel: Send + Sync {
    /// ψ(r) for r > 0. Callers guarantee the domain.
    fn psi(&self, r: f64) -> f64;
    /// ψ'(r) for r > 0.
    fn dpsi(&self, r: f64) -> f64;
    /// M(r) = ∫_r^∞ ψ(s) ds for r > 0.
    fn tail_mass(&self, r: f64) -> Result<f64>;
    /// M(0⁺) when ψ is integrable, `None` otherwise.
    fn total_mass(&self) -> Option<f64>;
    /// Relative tolerance used for every quadrature involving this kernel.
    fn quad_tol(&self) -> f64;
    /// Stable textual identity, used for cache keys.
    fn identity(&self) -> String;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum KernelFamily {
    Power,
    InverseLinear,
    LogBoosted,
    LogDamped,
    LipschitzGaussian,
    Tabulated(TabulatedKernel),
    /// ψ ≡ 0. Pure Burgers transport; a test fixture outside the kernel class.
    Zero,
}

impl KernelFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            KernelFamily::Power => "power",
            KernelFamily::InverseLinear => "inverse_linear",
            KernelFamily::LogBoosted => "log_boosted",
            KernelFamily::LogDamped => "log_damped",
            KernelFamily::LipschitzGaussian => "lipschitz_gaussian",
            KernelFamily::Tabulated(_) => "tabulated",
            KernelFamily::Zero => "zero",
        }
    }

    /// Radius below which the monotonicity assumptions hold with γ = 1/2.
    /// Certified by `check_assumptions` in the test suite.
    pub fn default_r0(&self) -> f64 {
        match self {
            KernelFamily::InverseLinear => 0.1,
            KernelFamily::LogBoosted => 0.04,
            KernelFamily::LogDamped => 0.2,
            _ => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Exponent of the power family, in (0, 2).
    pub alpha: f64,
    pub r0: f64,
    pub gamma: f64,
    pub quad_tol: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        let r0 = family.default_r0();
        KernelSpec {
            family,
            alpha: 0.5,
            r0,
            gamma: 0.5,
            quad_tol: 1e-10,
        }
    }

    pub fn power(alpha: f64) -> Self {
        KernelSpec {
            alpha,
            ..KernelSpec::new(KernelFamily::Power)
        }
    }

    pub fn inverse_linear() -> Self {
        KernelSpec::new(KernelFamily::InverseLinear)
    }

    pub fn log_boosted() -> Self {
        KernelSpec::new(KernelFamily::LogBoosted)
    }

    pub fn log_damped() -> Self {
        KernelSpec::new(KernelFamily::LogDamped)
    }

    pub fn lipschitz_gaussian() -> Self {
        KernelSpec::new(KernelFamily::LipschitzGaussian)
    }

    pub fn zero() -> Self {
        KernelSpec::new(KernelFamily::Zero)
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let KernelFamily::Power = self.family {
            if !(self.alpha > 0.0 && self.alpha < 2.0) {
                return Err(Error::Argument(format!(
                    "power family requires alpha in (0, 2), got {}",
                    self.alpha
                )));
            }
        }
        if !(self.r0 > 0.0 && self.r0 <= 1.0) {
            return Err(Error::Argument(format!(
                "r0 must be in (0, 1], got {}",
                self.r0
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 0.5) {
            return Err(Error::Argument(format!(
                "gamma must be in (0, 1/2], got {}",
                self.gamma
            )));
        }
        if !(self.quad_tol >= 1e-15 && self.quad_tol <= 1e-3) {
            return Err(Error::Argument(format!(
                "quad_tol must be in [1e-15, 1e-3], got {}",
                self.quad_tol
            )));
        }
        Ok(())
    }

    /// ψ is not integrable at the origin.
    pub fn is_singular(&self) -> bool {
        self.total_mass().is_none()
    }

    /// Upper bound for ∫_s^∞ ψ valid for s ≥ 1, used to truncate the far field.
    fn far_tail_bound(&self, s: f64) -> f64 {
        debug_assert!(s >= 1.0);
        match &self.family {
            KernelFamily::LogBoosted => (E + 1.0).ln() / (2.0 * s * s),
            KernelFamily::LogDamped => 1.0 / (2.0 * s * s),
            // Closed forms exist for the rest; a bound is never needed.
            _ => 0.0,
        }
    }

    /// ∫_r^∞ ψ by quadrature in log-radius, with the far field cut where the
    /// analytic tail bound falls below a hundredth of the tolerance.
    fn tail_mass_by_quadrature(&self, r: f64) -> Result<f64> {
        let tol = self.quad_tol;
        // ψ decreasing gives M(r) ≥ r ψ(2r).
        let lower = r * self.psi(2.0 * r);
        let mut s_max = r.max(1.0) * 2.0;
        while self.far_tail_bound(s_max) > 1e-2 * tol * lower {
            s_max *= 4.0;
            if !s_max.is_finite() {
                return Err(Error::Numerical {
                    what: "tail truncation radius overflowed".into(),
                    achieved: f64::INFINITY,
                });
            }
        }
        let g = |y: f64| {
            let s = y.exp();
            self.psi(s) * s
        };
        let (y0, y1) = (r.ln(), s_max.ln());
        // Split at s = 1 where the integrand changes character.
        let mut total = 0.0;
        if y0 < 0.0 && y1 > 0.0 {
            total += quadrature::integrate(g, y0, 0.0, 0.0, 0.1 * tol, QUAD_BUDGET)?.value;
            total += quadrature::integrate(g, 0.0, y1, 0.0, 0.1 * tol, QUAD_BUDGET)?.value;
        } else {
            total += quadrature::integrate(g, y0, y1, 0.0, 0.1 * tol, QUAD_BUDGET)?.value;
        }
        Ok(total)
    }
}

impl Kernel for KernelSpec {
    fn psi(&self, r: f64) -> f64 {
        match &self.family {
            KernelFamily::Power => r.powf(-1.0 - self.alpha),
            KernelFamily::InverseLinear => 1.0 / (r * (1.0 + r * r)),
            KernelFamily::LogBoosted => (E + 1.0 / r).ln() / (r * (1.0 + r * r)),
            KernelFamily::LogDamped => 1.0 / (r * (E + 1.0 / r).ln() * (1.0 + r * r)),
            KernelFamily::LipschitzGaussian => (-0.5 * r * r).exp(),
            KernelFamily::Tabulated(t) => t.psi(r),
            KernelFamily::Zero => 0.0,
        }
    }

    fn dpsi(&self, r: f64) -> f64 {
        match &self.family {
            KernelFamily::Power => -(1.0 + self.alpha) * r.powf(-2.0 - self.alpha),
            KernelFamily::InverseLinear => {
                let d = r + r * r * r;
                -(1.0 + 3.0 * r * r) / (d * d)
            }
            KernelFamily::LogBoosted => {
                let d = r + r * r * r;
                let l = (E + 1.0 / r).ln();
                let dl = -1.0 / (r * (E * r + 1.0));
                dl / d - l * (1.0 + 3.0 * r * r) / (d * d)
            }
            KernelFamily::LogDamped => {
                let d = r + r * r * r;
                let l = (E + 1.0 / r).ln();
                let dl = -1.0 / (r * (E * r + 1.0));
                let q = l * d;
                -(dl * d + l * (1.0 + 3.0 * r * r)) / (q * q)
            }
            KernelFamily::LipschitzGaussian => -r * (-0.5 * r * r).exp(),
            KernelFamily::Tabulated(t) => {
                let h = 1e-6 * r;
                (t.psi(r + h) - t.psi(r - h)) / (2.0 * h)
            }
            KernelFamily::Zero => 0.0,
        }
    }

    fn tail_mass(&self, r: f64) -> Result<f64> {
        match &self.family {
            KernelFamily::Power => Ok(r.powf(-self.alpha) / self.alpha),
            // ln(1 + r⁻²)/2, written to stay accurate for large r.
            KernelFamily::InverseLinear => Ok(0.5 * (1.0 / (r * r)).ln_1p()),
            KernelFamily::LipschitzGaussian => Ok((PI / 2.0).sqrt() * libm::erfc(r / 2f64.sqrt())),
            KernelFamily::Tabulated(t) => t.tail_mass(r, self.quad_tol),
            KernelFamily::Zero => Ok(0.0),
            KernelFamily::LogBoosted | KernelFamily::LogDamped => self.tail_mass_by_quadrature(r),
        }
    }

    fn total_mass(&self) -> Option<f64> {
        match &self.family {
            KernelFamily::LipschitzGaussian => Some((PI / 2.0).sqrt()),
            KernelFamily::Zero => Some(0.0),
            KernelFamily::Tabulated(t) => t.total_mass(),
            _ => None,
        }
    }

    fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    fn identity(&self) -> String {
        let mut id = format!(
            "{}:alpha={:e}:r0={:e}:gamma={:e}:tol={:e}",
            self.family.tag(),
            self.alpha,
            self.r0,
            self.gamma,
            self.quad_tol
        );
        if let KernelFamily::Tabulated(t) = &self.family {
            for (r, p) in t.radii.iter().zip(&t.values) {
                id.push_str(&format!(":{r:e}/{p:e}"));
            }
        }
        id
    }
}

/// A kernel given by samples (r_i, ψ_i), interpolated by a monotone cubic in
/// log-log coordinates and continued as power laws beyond the table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TabulatedKernel {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(skip)]
    log_r: Vec<f64>,
    #[serde(skip)]
    log_psi: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl TabulatedKernel {
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii.len() != values.len() {
            return Err(Error::Argument(
                "tabulated kernel needs at least two (r, psi) pairs of equal length".into(),
            ));
        }
        if radii
            .iter()
            .chain(&values)
            .any(|v| !v.is_finite() || *v <= 0.0)
        {
            return Err(Error::Argument(
                "tabulated radii and values must be finite and positive".into(),
            ));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument(
                "tabulated radii must be strictly increasing".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Argument(
                "tabulated psi values must be strictly decreasing".into(),
            ));
        }
        let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let log_psi: Vec<f64> = values.iter().map(|p| p.ln()).collect();
        let slopes = pchip_slopes(&log_r, &log_psi);
        if *slopes.last().unwrap() >= -1.0 {
            return Err(Error::Argument(
                "tabulated kernel must decay faster than 1/r beyond its last radius".into(),
            ));
        }
        Ok(TabulatedKernel {
            radii,
            values,
            log_r,
            log_psi,
            slopes,
        })
    }

    fn log_psi_at(&self, x: f64) -> f64 {
        let n = self.log_r.len();
        if x <= self.log_r[0] {
            return self.log_psi[0] + self.slopes[0] * (x - self.log_r[0]);
        }
        if x >= self.log_r[n - 1] {
            return self.log_psi[n - 1] + self.slopes[n - 1] * (x - self.log_r[n - 1]);
        }
        let i = self.log_r.partition_point(|&v| v <= x) - 1;
        let h = self.log_r[i + 1] - self.log_r[i];
        let t = (x - self.log_r[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.log_psi[i]
            + h10 * h * self.slopes[i]
            + h01 * self.log_psi[i + 1]
            + h11 * h * self.slopes[i + 1]
    }

    pub fn psi(&self, r: f64) -> f64 {
        self.log_psi_at(r.ln()).exp()
    }

    // ∫_a^b of c·s^p, with p the log-log slope.
    fn power_segment(psi_a: f64, a: f64, p: f64, b: f64) -> f64 {
        if b.is_infinite() {
            return -psi_a * a / (p + 1.0);
        }
        psi_a * a / (p + 1.0) * ((b / a).powf(p + 1.0) - 1.0)
    }

    fn tail_mass(&self, r: f64, tol: f64) -> Result<f64> {
        let n = self.radii.len();
        let (r_first, r_last) = (self.radii[0], self.radii[n - 1]);
        let far = Self::power_segment(
            self.psi(r_last.max(r)),
            r_last.max(r),
            self.slopes[n - 1],
            f64::INFINITY,
        );
        if r >= r_last {
            return Ok(far);
        }
        let mut total = far;
        let start = r.max(r_first);
        let g = |y: f64| {
            let s = y.exp();
            self.psi(s) * s
        };
        // Segment-wise so that the cubic pieces are integrated separately.
        let mut a = start.ln();
        for &b in self.log_r.iter().filter(|&&b| b > start.ln()) {
            total += quadrature::integrate(g, a, b, 0.0, 0.1 * tol, QUAD_BUDGET)?.value;
            a = b;
        }
        if r < r_first {
            let p = self.slopes[0];
            if (p + 1.0).abs() < 1e-14 {
                total += self.values[0] * r_first * (r_first / r).ln();
            } else {
                total += Self::power_segment(self.psi(r), r, p, r_first);
            }
        }
        Ok(total)
    }

    fn total_mass(&self) -> Option<f64> {
        let p = self.slopes[0];
        if p <= -1.0 {
            return None;
        }
        let r_first = self.radii[0];
        let near = self.values[0] * r_first / (p + 1.0);
        self.tail_mass(r_first, 1e-12).ok().map(|m| m + near)
    }
}

// Fritsch–Carlson monotone slopes.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            d[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s * d0 <= 0.0 {
            0.0
        } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    // The end slopes double as power-law exponents beyond the table.
    if d[0] == 0.0 {
        d[0] = delta[0];
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = delta[n - 2];
    }
    d
}

/// ψ(|r|), rejecting the singular point and non-finite input.
pub fn eval_psi(kernel: &impl Kernel, r: f64) -> Result<f64> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!(
            "psi is singular or undefined at r = {r}"
        )));
    }
    Ok(kernel.psi(r.abs()))
}

/// M(r) = ∫_r^∞ ψ for r > 0.
pub fn eval_m(kernel: &impl Kernel, r: f64) -> Result<f64> {
    if r <= 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!(
            "tail mass requires finite r > 0, got {r}"
        )));
    }
    kernel.tail_mass(r)
}

/// `count` log-spaced radii from `r_min` to `r_max` inclusive.
pub fn log_grid(r_min: f64, r_max: f64, count: usize) -> Vec<f64> {
    let (a, b) = (r_min.ln(), r_max.ln());
    (0..count)
        .map(|i| {
            if i + 1 == count {
                r_max
            } else {
                (a + (b - a) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

fn validate_grid(r_grid: &[f64], r0: f64) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::Argument("radius grid is empty".into()));
    }
    if r_grid.len() < 64 {
        return Err(Error::Argument(format!(
            "radius grid needs at least 64 points, got {}",
            r_grid.len()
        )));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument(
            "radius grid must be sorted strictly ascending".into(),
        ));
    }
    if r_grid[0] <= 0.0 || *r_grid.last().unwrap() > r0 * (1.0 + 1e-12) {
        return Err(Error::Argument(format!(
            "radius grid must lie in (0, r0 = {r0}]"
        )));
    }
    Ok(())
}

/// Largest growth toward the origin: max over i < j of q_i / q_j.
fn growth_toward_origin(q: &[f64]) -> f64 {
    let mut suffix_min = f64::INFINITY;
    let mut worst: f64 = 1.0;
    for &v in q.iter().rev() {
        if suffix_min.is_finite() {
            worst = worst.max(v / suffix_min);
        }
        suffix_min = suffix_min.min(v);
    }
    worst
}

fn count_decreases(q: &[f64]) -> usize {
    q.windows(2)
        .filter(|w| w[1] < w[0] * (1.0 - MONOTONE_SLACK))
        .count()
}

#[derive(Clone, Debug, Serialize)]
pub struct GridRow {
    pub r: f64,
    pub psi: f64,
    pub m: f64,
    pub hm_ratio: f64,
    pub doubling_psi: f64,
    pub doubling_m: f64,
    pub ratio_m_over_m: f64,
    pub r_gamma_m: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SandwichProbe {
    pub beta: f64,
    /// max over the grid of max(r^{1+β} ψ, 1/(r^{1-β} ψ)) restricted to r ≤ 1.
    pub constant: f64,
    pub upper_growth: f64,
    pub lower_growth: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayProbe {
    pub beta: f64,
    pub growth: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionFlags {
    pub sandwich: bool,
    pub non_integrable: bool,
    pub tail_decay: bool,
    pub decreasing: bool,
    pub hormander_mikhlin: bool,
    pub doubling_psi: bool,
    pub doubling_m: bool,
    pub ratio_monotone: bool,
    pub r_gamma_monotone: bool,
}

impl AssumptionFlags {
    pub fn entries(&self) -> [(&'static str, bool); 9] {
        [
            ("sandwich", self.sandwich),
            ("non_integrable", self.non_integrable),
            ("tail_decay", self.tail_decay),
            ("decreasing", self.decreasing),
            ("hormander_mikhlin", self.hormander_mikhlin),
            ("doubling_psi", self.doubling_psi),
            ("doubling_m", self.doubling_m),
            ("ratio_monotone", self.ratio_monotone),
            ("r_gamma_monotone", self.r_gamma_monotone),
        ]
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.entries()
            .into_iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name)
            .collect()
    }

    pub fn all_pass(&self) -> bool {
        self.failed().is_empty()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelAssessment {
    pub family: String,
    pub gamma: f64,
    pub r0: f64,
    pub flags: AssumptionFlags,
    pub sandwich: Vec<SandwichProbe>,
    pub decay: Vec<DecayProbe>,
    /// M(0⁺) for integrable kernels.
    pub total_mass: Option<f64>,
    pub hm_constant: f64,
    pub doubling_psi_constant: f64,
    pub doubling_m_constant: f64,
    pub decreasing_violations: usize,
    pub ratio_violations: usize,
    pub r_gamma_violations: usize,
    pub rows: Vec<GridRow>,
}

/// Evaluates assumptions (i)–(iii) of the kernel class on a log-spaced grid.
pub fn check_assumptions(spec: &KernelSpec, r_grid: &[f64]) -> Result<KernelAssessment> {
    spec.validate()?;
    validate_grid(r_grid, spec.r0)?;

    let mut rows = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        let psi = spec.psi(r);
        let m = spec.tail_mass(r)?;
        let m2 = spec.tail_mass(2.0 * r)?;
        rows.push(GridRow {
            r,
            psi,
            m,
            hm_ratio: (r * spec.dpsi(r)).abs() / psi,
            doubling_psi: psi / spec.psi(2.0 * r),
            doubling_m: m / m2,
            ratio_m_over_m: r * psi / m,
            r_gamma_m: r.powf(spec.gamma) * m,
        });
    }

    let finite_positive = |v: f64| v.is_finite() && v > 0.0;
    let sup = |f: &dyn Fn(&GridRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);

    let sandwich: Vec<SandwichProbe> = SANDWICH_PROBES
        .iter()
        .map(|&beta| {
            let upper: Vec<f64> = rows.iter().map(|w| w.r.powf(1.0 + beta) * w.psi).collect();
            let lower: Vec<f64> = rows
                .iter()
                .map(|w| 1.0 / (w.r.powf(1.0 - beta) * w.psi))
                .collect();
            let constant = rows
                .iter()
                .zip(upper.iter().zip(&lower))
                .filter(|(w, _)| w.r <= 1.0)
                .map(|(_, (u, l))| u.max(*l))
                .fold(0.0, f64::max);
            let upper_growth = growth_toward_origin(&upper);
            let lower_growth = growth_toward_origin(&lower);
            SandwichProbe {
                beta,
                constant,
                upper_growth,
                lower_growth,
                pass: finite_positive(constant)
                    && upper_growth <= GROWTH_LIMIT
                    && lower_growth <= GROWTH_LIMIT,
            }
        })
        .collect();

    let decay: Vec<DecayProbe> = DECAY_PROBES
        .iter()
        .map(|&beta| {
            let q: Vec<f64> = rows.iter().map(|w| w.r.powf(beta) * w.m).collect();
            let growth = growth_toward_origin(&q);
            DecayProbe {
                beta,
                growth,
                pass: growth.is_finite() && growth <= GROWTH_LIMIT,
            }
        })
        .collect();

    let psi_values: Vec<f64> = rows.iter().map(|w| w.psi).collect();
    let decreasing_violations = psi_values
        .windows(2)
        .filter(|w| w[1] > w[0] * (1.0 + MONOTONE_SLACK))
        .count();
    let ratio: Vec<f64> = rows.iter().map(|w| w.ratio_m_over_m).collect();
    let r_gamma: Vec<f64> = rows.iter().map(|w| w.r_gamma_m).collect();
    let ratio_violations = count_decreases(&ratio);
    let r_gamma_violations = count_decreases(&r_gamma);

    let hm_constant = sup(&|w| w.hm_ratio);
    let doubling_psi_constant = sup(&|w| w.doubling_psi);
    let doubling_m_constant = sup(&|w| w.doubling_m);
    let total_mass = spec.total_mass();

    let flags = AssumptionFlags {
        sandwich: sandwich.iter().all(|p| p.pass),
        non_integrable: total_mass.is_none(),
        tail_decay: decay.iter().all(|p| p.pass),
        decreasing: decreasing_violations == 0,
        hormander_mikhlin: finite_positive(hm_constant) || hm_constant == 0.0,
        doubling_psi: finite_positive(doubling_psi_constant),
        doubling_m: finite_positive(doubling_m_constant),
        ratio_monotone: ratio_violations == 0,
        r_gamma_monotone: r_gamma_violations == 0,
    };

    Ok(KernelAssessment {
        family: spec.family.tag().to_string(),
        gamma: spec.gamma,
        r0: spec.r0,
        flags,
        sandwich,
        decay,
        total_mass,
        hm_constant,
        doubling_psi_constant,
        doubling_m_constant,
        decreasing_violations,
        ratio_violations,
        r_gamma_violations,
        rows,
    })
}

/// sup over the grid of M(r)/M(2r).
pub fn doubling_constant_m(spec: &KernelSpec, r_grid: &[f64]) -> Result<f64> {
    validate_grid(r_grid, spec.r0)?;
    let mut sup: f64 = 0.0;
    for &r in r_grid {
        let m = spec.tail_mass(r)?;
        let m2 = spec.tail_mass(2.0 * r)?;
        let q = m / m2;
        if !q.is_finite() {
            return Err(Error::Numerical {
                what: format!("M(r)/M(2r) is not finite at r = {r:e}"),
                achieved: f64::INFINITY,
            });
        }
        sup = sup.max(q);
    }
    Ok(sup)
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerInequality {
    pub k: f64,
    pub c1: f64,
    pub c2: f64,
    /// sup over the grid of M(r^k) / M(r)^k.
    pub sup_ratio_k: f64,
    /// Same for the exponent 2k.
    pub sup_ratio_2k: f64,
    /// Grid points dropped because r^{2k} underflowed.
    pub dropped: usize,
    pub pass: bool,
}

/// Smallest (C1, C2) with M(r^j) ≤ C1 C2^j M(r)^j on the grid for j ∈ {k, 2k}.
pub fn power_inequality_check(
    spec: &KernelSpec,
    k: f64,
    r_grid: &[f64],
) -> Result<PowerInequality> {
    if k < 1.0 || !k.is_finite() {
        return Err(Error::Argument(format!("exponent k must be >= 1, got {k}")));
    }
    if r_grid.is_empty() || r_grid.windows(2).any(|w| w[1] <= w[0]) || r_grid[0] <= 0.0 {
        return Err(Error::Argument(
            "radius grid must be non-empty, positive and ascending".into(),
        ));
    }
    let usable: Vec<f64> = r_grid
        .iter()
        .copied()
        .filter(|&r| r.powf(2.0 * k) > 1e3 * f64::MIN_POSITIVE)
        .collect();
    let dropped = r_grid.len() - usable.len();
    if dropped > 0 {
        log::warn!(
            "power inequality: dropped {dropped} radii where r^{} underflows",
            2.0 * k
        );
    }
    if usable.is_empty() {
        return Err(Error::Numerical {
            what: "every grid radius underflows under r^k".into(),
            achieved: f64::INFINITY,
        });
    }
    let ratio = |r: f64, j: f64| -> Result<f64> {
        let m = spec.tail_mass(r)?;
        Ok(spec.tail_mass(r.powf(j))? / m.powf(j))
    };
    let mut ratios_k = Vec::with_capacity(usable.len());
    let mut ratios_2k = Vec::with_capacity(usable.len());
    for &r in &usable {
        ratios_k.push(ratio(r, k)?);
        ratios_2k.push(ratio(r, 2.0 * k)?);
    }
    let a = ratios_k.iter().copied().fold(0.0, f64::max);
    let b = ratios_2k.iter().copied().fold(0.0, f64::max);
    let c2 = (b / a).powf(1.0 / k);
    let c1 = a * a / b;
    let holds = |rs: &[f64], j: f64| {
        let bound = c1 * c2.powf(j);
        rs.iter().all(|&q| q <= bound * (1.0 + 1e-9))
    };
    let finite = [a, b, c1, c2].iter().all(|v| v.is_finite() && *v > 0.0);
    Ok(PowerInequality {
        k,
        c1,
        c2,
        sup_ratio_k: a,
        sup_ratio_2k: b,
        dropped,
        pass: finite && holds(&ratios_k, k) && holds(&ratios_2k, 2.0 * k),
    })
}
