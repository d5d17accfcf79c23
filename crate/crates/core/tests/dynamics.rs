use alignlab_core::diagnostics::{density_equation_residual, g_residual, momentum};
use alignlab_core::dynamics::{
    run, FourierSeries, ICSpec, Preset, RunConfig, RunStatus, SimState, Solver,
};
use alignlab_core::operator::compute_symbol;
use alignlab_core::{Grid, KernelSpec};
use proptest::prelude::*;

fn solver(kernel: &KernelSpec, n: usize) -> Solver {
    let symbol = compute_symbol(kernel, n, 1e-11).unwrap();
    Solver::new(Grid::new(n).unwrap(), symbol, 2.0 / 3.0).unwrap()
}

fn gap(a: &SimState, b: &SimState) -> f64 {
    a.rho
        .combine(1.0, &b.rho, -1.0)
        .max_abs()
        .max(a.g.combine(1.0, &b.g, -1.0).max_abs())
}

/// ρ₀ = 1 + Σ small modes, u₀ = Σ modes, all below n/8.
fn smooth_ic() -> impl Strategy<Value = ICSpec> {
    let modes = || prop::collection::vec(-0.15..0.15f64, 0..4);
    (modes(), modes(), modes(), modes(), -1.0..1.0f64).prop_map(|(rc, rs, uc, us, um)| {
        ICSpec::fourier(
            "random",
            FourierSeries {
                mean: 1.0,
                cos: rc,
                sin: rs,
            },
            FourierSeries {
                mean: um,
                cos: uc,
                sin: us,
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rhs_has_zero_mean_and_velocity_satisfies_identity(ic in smooth_ic()) {
        let s = solver(&KernelSpec::inverse_linear(), 64);
        let state = s.init_state(&ic).unwrap();
        let (dr, dg) = s.rhs(&state.rho, &state.g, &state.u);
        prop_assert!(dr.mean().abs() <= 1e-14 * (1.0 + dr.max_abs()));
        prop_assert!(dg.mean().abs() <= 1e-14 * (1.0 + dg.max_abs()));
        prop_assert!(g_residual(&s, &state).unwrap() <= 1e-10 * (1.0 + state.g.max_abs()));
    }

    #[test]
    fn means_drift_at_most_roundoff_per_step(ic in smooth_ic()) {
        let s = solver(&KernelSpec::log_damped(), 64);
        let mut state = s.init_state(&ic).unwrap();
        for _ in 0..5 {
            let next = s.integrate_fixed(&state, 1e-3, 1).unwrap();
            prop_assert!((next.rho.mean() - state.rho.mean()).abs() <= 1e-13);
            prop_assert!((next.g.mean() - state.g.mean()).abs() <= 1e-13);
            prop_assert!(g_residual(&s, &next).unwrap() <= 1e-10 * (1.0 + next.g.max_abs()));
            state = next;
        }
    }
}

#[test]
fn shear_flow_richardson_ratios() {
    let s = solver(&KernelSpec::inverse_linear(), 64);
    let start = s.init_state(&ICSpec::preset(Preset::Shear)).unwrap();

    // one step of dt against two of dt/2: local error, O(dt⁴)
    let local = |dt: f64| {
        gap(
            &s.integrate_fixed(&start, dt, 1).unwrap(),
            &s.integrate_fixed(&start, dt / 2.0, 2).unwrap(),
        )
    };
    let r_local = local(0.04) / local(0.02);
    assert!((12.0..=20.0).contains(&r_local), "{r_local}");

    // the same comparison at fixed final time: global error, O(dt³)
    let global = |dt: f64| {
        let steps = (0.8 / dt).round() as usize;
        gap(
            &s.integrate_fixed(&start, dt, steps).unwrap(),
            &s.integrate_fixed(&start, dt / 2.0, 2 * steps).unwrap(),
        )
    };
    let r_global = global(0.04) / global(0.02);
    assert!((6.0..=10.0).contains(&r_global), "{r_global}");
}

#[test]
fn bump_preset_is_a_steady_state() {
    let s = solver(&KernelSpec::inverse_linear(), 64);
    let start = s.init_state(&ICSpec::preset(Preset::Bump)).unwrap();
    assert!(start.u.max_abs() < 1e-14);
    let end = s.integrate_fixed(&start, 0.05, 20).unwrap();
    assert!(gap(&start, &end) < 1e-13);
}

#[test]
fn density_equation_residual_vanishes_at_high_order() {
    let s = solver(&KernelSpec::inverse_linear(), 64);
    let start = s
        .integrate_fixed(
            &s.init_state(&ICSpec::preset(Preset::Shear)).unwrap(),
            1e-3,
            200,
        )
        .unwrap();
    let residual = |h: f64| {
        let steps = (h / 1e-3).round() as usize;
        let s1 = s.integrate_fixed(&start, 1e-3, steps).unwrap();
        let s2 = s.integrate_fixed(&s1, 1e-3, steps).unwrap();
        density_equation_residual(&s, &start, &s1, &s2).unwrap()
    };
    let (a, b) = (residual(0.128), residual(0.064));
    let order = (a / b).log2();
    assert!(order >= 2.7, "{a} {b} order {order}");
}

#[test]
fn bump_time_steps_stay_in_range() {
    let mut c = RunConfig::new(KernelSpec::inverse_linear(), ICSpec::preset(Preset::Bump));
    c.n = 256;
    let out = run(&c, compute_symbol(&c.kernel, 256, 1e-10).unwrap()).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    assert!(
        out.min_dt >= 1e-5 && out.max_dt <= 1e-1,
        "{} {}",
        out.min_dt,
        out.max_dt
    );
}

#[test]
fn flat_runs_have_constant_diagnostics() {
    for kernel in [
        KernelSpec::inverse_linear(),
        KernelSpec::lipschitz_gaussian(),
        KernelSpec::power(0.5),
    ] {
        let mut c = RunConfig::new(kernel, ICSpec::preset(Preset::Flat));
        c.n = 64;
        let out = run(&c, compute_symbol(&c.kernel, 64, 1e-10).unwrap()).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.last.t, 1.0);
        let first = &out.record.rows[0];
        for r in &out.record.rows {
            for (a, b) in [
                (r.min_rho, first.min_rho),
                (r.max_rho, first.max_rho),
                (r.max_abs_rhox, first.max_abs_rhox),
                (r.f_sup, first.f_sup),
                (r.q_sup, first.q_sup),
                (r.momentum, first.momentum),
            ] {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn shear_run_conserves_momentum() {
    let mut c = RunConfig::new(KernelSpec::log_boosted(), ICSpec::preset(Preset::Shear));
    c.n = 128;
    let out = run(&c, compute_symbol(&c.kernel, 128, 1e-10).unwrap()).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    for s in &out.snapshots {
        assert!((momentum(s) - out.initial.p0).abs() <= 1e-8 * (1.0 + out.initial.p0.abs()));
        assert!((s.rho.mean() - out.initial.kappa).abs() <= 1e-10);
        assert!((s.g.mean() - out.initial.nu).abs() <= 1e-10);
    }
}

#[test]
fn runs_are_deterministic() {
    let mut c = RunConfig::new(
        KernelSpec::inverse_linear(),
        ICSpec::preset(Preset::Supercritical(2.0)),
    );
    c.n = 64;
    c.t_end = 0.5;
    let a = run(&c, compute_symbol(&c.kernel, 64, 1e-10).unwrap()).unwrap();
    let b = run(&c, compute_symbol(&c.kernel, 64, 1e-10).unwrap()).unwrap();
    assert_eq!(a.record, b.record);
    assert!(a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .all(|(x, y)| x.rho == y.rho && x.g == y.g));
}
