//! Self-convergence studies: the same initial data at three step sizes
//! (temporal order) or three grid sizes (spatial decay).

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{RunConfig, SimState, Solver};
use crate::error::{Error, Result};
use crate::field::Grid;
use crate::operator::compute_symbol;

/// Discrepancies below this (relative to 1 + field scale) are roundoff.
pub const ROUNDOFF_LEVEL: f64 = 1e-12;

/// A study is not asymptotic when the finest solution has more spectral
/// tail than this.
pub const SMOOTHNESS_LIMIT: f64 = 1e-6;

pub const TEMPORAL_ORDER_RANGE: (f64, f64) = (2.7, 3.3);

pub const SPATIAL_RATIO_MIN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Discrepancies are measurable and the solution is smooth.
    Asymptotic,
    /// Every discrepancy is at roundoff level; nothing to measure.
    Roundoff,
    /// The finest solution is under-resolved.
    NotSmooth,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemporalStudy {
    pub t_end: f64,
    pub dts: [f64; 3],
    /// ‖q_dt − q_dt/2‖ and ‖q_dt/2 − q_dt/4‖.
    pub discrepancies: [f64; 2],
    pub order: Option<f64>,
    pub regime: Regime,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpatialStudy {
    pub t_end: f64,
    pub dt: f64,
    pub ns: [usize; 3],
    /// Discrepancies between n and 2n, and between 2n and 4n, on the modes
    /// of the coarser grid.
    pub discrepancies: [f64; 2],
    pub ratio: Option<f64>,
    pub tail_fraction: f64,
    pub regime: Regime,
    pub pass: bool,
}

/// `None` when the run breaks down (positivity loss or non-finite values),
/// which marks the study as not asymptotic.
fn evolve(
    config: &RunConfig,
    n: usize,
    dt: f64,
    steps: usize,
) -> Result<Option<(Solver, SimState)>> {
    let grid = Grid::new(n)?;
    let symbol = compute_symbol(&config.kernel, n, config.symbol_tol)?;
    let solver = Solver::new(grid, symbol, config.dealias)?;
    let start = solver.init_state(&config.ic)?;
    match solver.integrate_fixed(&start, dt, steps) {
        Ok(end) => Ok(Some((solver, end))),
        Err(Error::Numerical { what, .. }) => {
            log::warn!("convergence run at n = {n}, dt = {dt} broke down: {what}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    let steps = (t_end / dt).round();
    if steps < 1.0 || ((steps * dt - t_end).abs() > 1e-9 * t_end) {
        return Err(Error::Argument(format!(
            "t_end = {t_end} is not a whole number of steps of size {dt}"
        )));
    }
    Ok(steps as usize)
}

fn max_diff(a: &SimState, b: &SimState) -> f64 {
    let r = a.rho.combine(1.0, &b.rho, -1.0).max_abs();
    let g = a.g.combine(1.0, &b.g, -1.0).max_abs();
    r.max(g)
}

fn scale(s: &SimState) -> f64 {
    s.rho.max_abs().max(s.g.max_abs())
}

/// Runs `config` to `t_end` with constant steps dt, dt/2 and dt/4 at grid
/// size `config.n`. The observed order is log₂ of the ratio of successive
/// discrepancies.
pub fn temporal_study(config: &RunConfig, t_end: f64, dt: f64) -> Result<TemporalStudy> {
    config.validate()?;
    let dts = [dt, dt / 2.0, dt / 4.0];
    let steps = step_count(t_end, dt)?;
    let runs = (
        evolve(config, config.n, dts[0], steps)?,
        evolve(config, config.n, dts[1], 2 * steps)?,
        evolve(config, config.n, dts[2], 4 * steps)?,
    );
    let (Some((solver, a)), Some((_, b)), Some((_, c))) = runs else {
        return Ok(TemporalStudy {
            t_end,
            dts,
            discrepancies: [f64::NAN; 2],
            order: None,
            regime: Regime::NotSmooth,
            pass: false,
        });
    };
    let discrepancies = [max_diff(&a, &b), max_diff(&b, &c)];
    let tail = solver.grid().tail_fraction(&c.rho)?;
    let roundoff = ROUNDOFF_LEVEL * (1.0 + scale(&c));
    let (regime, order) = if tail > SMOOTHNESS_LIMIT {
        (Regime::NotSmooth, None)
    } else if discrepancies.iter().all(|&d| d < roundoff) {
        (Regime::Roundoff, None)
    } else {
        (
            Regime::Asymptotic,
            Some((discrepancies[0] / discrepancies[1]).log2()),
        )
    };
    let pass = match regime {
        Regime::Roundoff => true,
        Regime::NotSmooth => false,
        Regime::Asymptotic => {
            order.is_some_and(|p| (TEMPORAL_ORDER_RANGE.0..=TEMPORAL_ORDER_RANGE.1).contains(&p))
        }
    };
    Ok(TemporalStudy {
        t_end,
        dts,
        discrepancies,
        order,
        regime,
        pass,
    })
}

/// Σ over the coarse grid's modes (Nyquist excluded) of |ĉ_fine − ĉ_coarse|,
/// an upper bound for the sup-norm gap of the two band-limited projections.
fn common_mode_gap(coarse: &[Complex64], fine: &[Complex64]) -> f64 {
    let nc = coarse.len();
    let nf = fine.len();
    let mut sum = 0.0;
    for k in 0..nc / 2 {
        sum += (coarse[k] - fine[k]).norm();
        if k > 0 {
            sum += (coarse[nc - k] - fine[nf - k]).norm();
        }
    }
    sum
}

fn state_gap(coarse: (&Solver, &SimState), fine: (&Solver, &SimState)) -> f64 {
    let (gc, sc) = (coarse.0.grid(), coarse.1);
    let (gf, sf) = (fine.0.grid(), fine.1);
    let r = common_mode_gap(&gc.coefficients(&sc.rho), &gf.coefficients(&sf.rho));
    let g = common_mode_gap(&gc.coefficients(&sc.g), &gf.coefficients(&sf.g));
    r.max(g)
}

/// Runs `config` to `t_end` at n, 2n and 4n (n = `config.n`) with the same
/// constant step and compares the solutions on their common modes.
pub fn spatial_study(config: &RunConfig, t_end: f64, dt: f64) -> Result<SpatialStudy> {
    config.validate()?;
    let n = config.n;
    let ns = [n, 2 * n, 4 * n];
    let steps = step_count(t_end, dt)?;
    let runs = ns
        .iter()
        .map(|&m| evolve(config, m, dt, steps))
        .collect::<Result<Option<Vec<_>>>>()?;
    let Some(runs) = runs else {
        return Ok(SpatialStudy {
            t_end,
            dt,
            ns,
            discrepancies: [f64::NAN; 2],
            ratio: None,
            tail_fraction: f64::NAN,
            regime: Regime::NotSmooth,
            pass: false,
        });
    };
    let pair = |i: usize| state_gap((&runs[i].0, &runs[i].1), (&runs[i + 1].0, &runs[i + 1].1));
    let discrepancies = [pair(0), pair(1)];
    let tail_fraction = runs
        .iter()
        .map(|(s, st)| s.grid().tail_fraction(&st.rho))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let roundoff = ROUNDOFF_LEVEL * (1.0 + scale(&runs[2].1));
    let (regime, ratio) = if tail_fraction > SMOOTHNESS_LIMIT {
        (Regime::NotSmooth, None)
    } else if discrepancies.iter().all(|&d| d < roundoff) {
        (Regime::Roundoff, None)
    } else {
        (
            Regime::Asymptotic,
            Some(discrepancies[0] / discrepancies[1]),
        )
    };
    let pass = match regime {
        Regime::Roundoff => true,
        Regime::NotSmooth => false,
        // the finer pair may already sit at roundoff, which only helps
        Regime::Asymptotic => {
            discrepancies[1] < roundoff || ratio.is_some_and(|r| r > SPATIAL_RATIO_MIN)
        }
    };
    Ok(SpatialStudy {
        t_end,
        dt,
        ns,
        discrepancies,
        ratio,
        tail_fraction,
        regime,
        pass,
    })
}
