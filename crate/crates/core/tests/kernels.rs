use std::f64::consts::{E, PI};

use alignlab_core::kernels::{
    check_assumptions, doubling_constant_m, eval_m, eval_psi, log_grid, power_inequality_check,
    Kernel,
};
use alignlab_core::KernelSpec;
use proptest::prelude::*;

fn builtin() -> Vec<KernelSpec> {
    vec![
        KernelSpec::power(0.5),
        KernelSpec::power(1.5),
        KernelSpec::inverse_linear(),
        KernelSpec::log_boosted(),
        KernelSpec::log_damped(),
        KernelSpec::lipschitz_gaussian(),
    ]
}

/// Composite Simpson in t = ln s on [ln r, ln 1e8]; beyond 1e8 the tail is
/// below 1e-16 for every (1 + s²)-damped family.
fn simpson_log_oracle(psi: impl Fn(f64) -> f64, r: f64, nodes: usize) -> f64 {
    let (a, b) = (r.ln(), 1e8f64.ln());
    let h = (b - a) / nodes as f64;
    let g = |t: f64| {
        let s = t.exp();
        psi(s) * s
    };
    let mut sum = g(a) + g(b);
    for i in 1..nodes {
        sum += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

#[test]
fn log_damped_tail_mass_matches_independent_quadrature() {
    let spec = KernelSpec::log_damped();
    let psi = |s: f64| 1.0 / (s * (E + 1.0 / s).ln() * (1.0 + s * s));
    let coarse = simpson_log_oracle(psi, 0.01, 20_000);
    let fine = simpson_log_oracle(psi, 0.01, 200_000);
    assert!((coarse - fine).abs() < 1e-12 * fine);
    let m = eval_m(&spec, 0.01).unwrap();
    assert!((m - fine).abs() <= 1e-9 * fine, "{m} vs {fine}");
    // mpmath at 30 digits gives 2.03804058783963054783
    assert!((fine - 2.038_040_587_839_630_5).abs() < 1e-12);
}

#[test]
fn numerical_and_closed_form_tail_masses_agree() {
    for spec in [
        KernelSpec::inverse_linear(),
        KernelSpec::lipschitz_gaussian(),
    ] {
        for r in [1e-3, 0.1, 0.7, 3.0] {
            let oracle = simpson_log_oracle(|s| spec.psi(s), r, 100_000);
            let m = eval_m(&spec, r).unwrap();
            assert!(
                (m - oracle).abs() <= 1e-9 * m.max(1e-300) + 1e-15,
                "{} r = {r}",
                spec.family.tag()
            );
        }
    }
}

#[test]
fn gaussian_is_integrable_with_known_mass() {
    let g = KernelSpec::lipschitz_gaussian();
    let m0 = g.total_mass().unwrap();
    assert!((m0 - (PI / 2.0).sqrt()).abs() < 1e-10);
    assert!((eval_m(&g, 1e-12).unwrap() - m0).abs() < 1e-10);
    for spec in [
        KernelSpec::inverse_linear(),
        KernelSpec::log_boosted(),
        KernelSpec::log_damped(),
    ] {
        assert!(spec.total_mass().is_none());
        // log_damped diverges slowest, like ln ln(1/r)
        assert!(eval_m(&spec, 1e-12).unwrap() - eval_m(&spec, 1e-6).unwrap() > 0.5);
    }
}

proptest! {
    #[test]
    fn psi_is_even_positive_and_decreasing(r in 1e-6..20.0f64, f in 1.0001..3.0f64) {
        for spec in builtin() {
            let p = eval_psi(&spec, r).unwrap();
            prop_assert!(p > 0.0);
            prop_assert_eq!(p, eval_psi(&spec, -r).unwrap());
            prop_assert!(eval_psi(&spec, f * r).unwrap() < p);
        }
    }

    #[test]
    fn tail_mass_halves_the_radius_monotonically(r in 1e-8..1.0f64) {
        for spec in builtin() {
            let m = eval_m(&spec, r).unwrap();
            let m2 = eval_m(&spec, 2.0 * r).unwrap();
            prop_assert!(m > m2 && m2 > 0.0, "{} at {}", spec.family.tag(), r);
        }
    }
}

#[test]
fn singular_families_pass_and_comparisons_are_flagged() {
    let grid = |spec: &KernelSpec| log_grid(1e-14, spec.r0, 4096);
    for spec in [
        KernelSpec::inverse_linear(),
        KernelSpec::log_boosted(),
        KernelSpec::log_damped(),
    ] {
        let a = check_assumptions(&spec, &grid(&spec)).unwrap();
        assert!(
            a.flags.all_pass(),
            "{}: {:?}",
            spec.family.tag(),
            a.flags.failed()
        );
        assert!(a.hm_constant.is_finite() && a.hm_constant > 0.0);
        assert!(
            power_inequality_check(&spec, 2.0, &grid(&spec))
                .unwrap()
                .pass
        );
    }
    let power = KernelSpec::power(0.5);
    let a = check_assumptions(&power, &grid(&power)).unwrap();
    assert!(!a.flags.sandwich);
    assert!(!a.sandwich.iter().find(|p| p.beta == 0.25).unwrap().pass);
    let g = KernelSpec::lipschitz_gaussian();
    let a = check_assumptions(&g, &grid(&g)).unwrap();
    assert!(!a.flags.non_integrable);
}

#[test]
fn assessment_is_deterministic() {
    let spec = KernelSpec::log_boosted();
    let r = log_grid(1e-10, spec.r0, 256);
    let a = check_assumptions(&spec, &r).unwrap();
    let b = check_assumptions(&spec, &r).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn enlarging_the_grid_never_clears_a_failure() {
    for spec in builtin() {
        let small = check_assumptions(&spec, &log_grid(1e-4, spec.r0, 200)).unwrap();
        let mut big_grid = log_grid(1e-12, spec.r0, 2000);
        big_grid.extend(log_grid(1e-4, spec.r0, 200));
        big_grid.sort_by(f64::total_cmp);
        big_grid.dedup();
        let big = check_assumptions(&spec, &big_grid).unwrap();
        for ((name, s), (_, b)) in small.flags.entries().iter().zip(big.flags.entries()) {
            assert!(*s || !b, "{}: {name} flipped to pass", spec.family.tag());
        }
    }
}

#[test]
fn inverse_linear_doubling_constant_is_stable_under_refinement() {
    let spec = KernelSpec {
        r0: 0.5,
        ..KernelSpec::inverse_linear()
    };
    let coarse_grid = log_grid(1e-6, 0.5, 1024);
    let fine_grid = log_grid(1e-6, 0.5, 4096);
    let coarse = doubling_constant_m(&spec, &coarse_grid).unwrap();
    let fine = doubling_constant_m(&spec, &fine_grid).unwrap();
    assert!((coarse - fine).abs() <= 0.01 * fine);
    let at_end = eval_m(&spec, 0.5).unwrap() / eval_m(&spec, 1.0).unwrap();
    assert!((coarse - at_end).abs() <= 1e-12 * at_end);
    assert!(coarse >= 1.0);
}

#[test]
fn inverse_linear_power_inequality_constants_are_stable() {
    let spec = KernelSpec::inverse_linear();
    let a = power_inequality_check(&spec, 2.0, &log_grid(1e-4, 0.1, 512)).unwrap();
    let b = power_inequality_check(&spec, 2.0, &log_grid(1e-4, 0.1, 2048)).unwrap();
    assert!(a.pass && b.pass);
    assert!((a.c1 - b.c1).abs() <= 0.05 * b.c1);
    assert!((a.c2 - b.c2).abs() <= 0.05 * b.c2);
}
