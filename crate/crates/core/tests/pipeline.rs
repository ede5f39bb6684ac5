use std::sync::Arc;

use heatlab::diagnostics::{invariance_check, negativity_gap_check, verdict, Verdict};
use heatlab::evolution::{energy_identity_residual, integrate, mass_identity_residual, IntegratorConfig};
use heatlab::semigroup::{apply_semigroup, free_heat_kernel, heat_kernel_column};
use heatlab::variational::{
    classify, energy, ground_state, mountain_pass_level, EquationMode, GroundStateConfig, LevelMethod, Membership,
};
use heatlab::{assemble, build_grid, lp_norm, DomainSpec, Field, Grid, OperatorSpec, SpectralOperator};
use proptest::prelude::*;

fn line(lo: f64, hi: f64, n: usize) -> (Arc<Grid>, SpectralOperator) {
    let g = build_grid(DomainSpec::interval(lo, hi), n).unwrap();
    let op = assemble(&OperatorSpec::dirichlet_laplacian(1), &g).unwrap();
    (g, op)
}

// −φ'' + φ = φ³ on the line has the solution √2·sech(x), with energy 4/3.
#[test]
fn ground_state_matches_the_sech_profile() {
    let (g, op) = line(-20.0, 20.0, 800);
    let mode = EquationMode::subcritical(3.0, 1).unwrap();
    let phi = ground_state(&op, &mode, &GroundStateConfig::default()).unwrap();
    let sign = phi.values()[g.center_node()].signum();
    let exact = Field::from_fn(&g, |x| 2f64.sqrt() / x[0].cosh()).unwrap();
    let diff = phi.scaled(sign).try_sub(&exact).unwrap();
    let rel = lp_norm(&diff, 2.0).unwrap() / lp_norm(&exact, 2.0).unwrap();
    assert!(rel < 1e-2, "relative L2 distance {rel}");

    let e = energy(&exact, &op, &mode).unwrap();
    assert!((e.energy - 4.0 / 3.0).abs() < 1e-2, "{e:?}");

    for method in [LevelMethod::NehariInf, LevelMethod::SobolevFormula] {
        let c = mountain_pass_level(&op, &mode, method).unwrap();
        assert!((c.l - 4.0 / 3.0).abs() < 1e-2 * 4.0 / 3.0, "{method:?}: {}", c.l);
    }
}

#[test]
fn scaled_ground_state_splits_at_one() {
    let (_, op) = line(-20.0, 20.0, 400);
    let mode = EquationMode::subcritical(3.0, 1).unwrap();
    let consts = mountain_pass_level(&op, &mode, LevelMethod::NehariInf).unwrap();
    let phi = consts.ground_state.clone().unwrap();
    let cfg = IntegratorConfig { t_max: 10.0, store_states: true, ..Default::default() };

    for (lambda, expected, member) in [(0.8, "Dissipates", Membership::Mplus), (1.3, "BlowsUp", Membership::Mminus)] {
        let u0 = phi.scaled(lambda);
        assert_eq!(classify(&u0, &op, &mode, &consts).unwrap().membership, member);
        let traj = integrate(&u0, &op, &mode, &cfg).unwrap();
        let v = verdict(&traj);
        assert_eq!(v.label(), expected, "lambda {lambda}: {v:?}");
        assert!(invariance_check(&traj, &consts).unwrap());
        assert!(mass_identity_residual(&traj).unwrap() < 1e-2);
        match v {
            Verdict::Dissipates { rate_stat } => {
                assert!(rate_stat < 1.0);
                assert!(energy_identity_residual(&traj).unwrap() < 1e-3);
            }
            _ => assert!(negativity_gap_check(&traj, &consts).unwrap()),
        }
    }
}

#[test]
fn kernel_on_a_wide_box_is_the_free_kernel() {
    let (g, op) = line(-30.0, 30.0, 600);
    let c = g.center_node();
    let t = 2.0;
    let k = heat_kernel_column(&op, t, c).unwrap();
    let x0 = g.point(c)[0];
    for (i, v) in k.values().iter().enumerate().step_by(25) {
        let d = (g.point(i)[0] - x0).abs();
        let oracle = (-d * d / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
        assert!((v - oracle).abs() < 1e-3, "node {i}: {v} vs {oracle}");
        assert!((free_heat_kernel(1, t, d) - oracle).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_is_a_contraction_with_the_group_law(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 4),
        s in 0.01f64..2.0,
        t in 0.01f64..2.0,
    ) {
        let (g, op) = line(-5.0, 5.0, 120);
        let f = Field::from_fn(&g, |x| {
            coeffs.iter().enumerate().map(|(k, a)| a * ((k as f64 + 1.0) * x[0]).sin()).sum::<f64>()
        }).unwrap();
        let ts = apply_semigroup(&op, s, &f, false).unwrap();
        let tts = apply_semigroup(&op, t, &ts, false).unwrap();
        let direct = apply_semigroup(&op, s + t, &f, false).unwrap();
        let scale = lp_norm(&f, 2.0).unwrap().max(1e-12);
        prop_assert!(lp_norm(&tts.try_sub(&direct).unwrap(), 2.0).unwrap() <= 1e-10 * scale);
        prop_assert!(lp_norm(&ts, 2.0).unwrap() <= scale * (1.0 + 1e-12));
        prop_assert!(ts.sup_norm() <= f.sup_norm() * (1.0 + 1e-9) + 1e-12);
    }
}
