//! Property tests for the structural invariants: exact translation
//! invariance under a shared stream, scaling composition, clock
//! monotonicity, dual involution and mass conservation of weighted clouds.

use proptest::prelude::*;
use ssmp::dual::build_dual;
use ssmp::lamperti::{additive_clock, lamperti_kiu, scale_path};
use ssmp::rng::rng_fork;
use ssmp::simulate::simulate_map;
use ssmp::spec::{stationary_pi, validate_spec, JumpComponent, JumpLaw, MapSpec};
use ssmp::stats::EmpiricalDist;

fn small_spec(q01: f64, q10: f64, a0: f64, a1: f64, s0: f64, s1: f64, rate: f64) -> MapSpec {
    validate_spec(MapSpec {
        n_states: 2,
        q: vec![vec![-q01, q01], vec![q10, -q10]],
        drift: vec![a0, a1],
        sigma: vec![s0, s1],
        jumps: vec![
            JumpComponent {
                rate,
                law: JumpLaw::TwoSidedExponential {
                    beta_up: 1.5,
                    beta_down: 0.8,
                    p_up: 0.4,
                },
            },
            JumpComponent::none(),
        ],
        switch_jumps: None,
        kill_rate: 0.0,
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translation_shifts_ordinates_exactly(
        seed in 0u64..1000,
        c in -5.0f64..5.0,
        q01 in 0.3f64..2.0,
        q10 in 0.3f64..2.0,
        a0 in -1.0f64..1.0,
        s0 in 0.0f64..1.0,
    ) {
        let spec = small_spec(q01, q10, a0, -a0, s0, 0.5, 0.7);
        let p0 = simulate_map(&spec, 0.0, 0, 0.5, 1e-2, rng_fork(seed, 0)).unwrap();
        let p1 = simulate_map(&spec, c, 0, 0.5, 1e-2, rng_fork(seed, 0)).unwrap();
        prop_assert_eq!(&p0.times, &p1.times);
        prop_assert_eq!(&p0.theta, &p1.theta);
        for (a, b) in p0.xi.iter().zip(&p1.xi) {
            prop_assert!((b - a - c).abs() < 1e-10);
        }
    }

    #[test]
    fn additive_clock_is_strictly_monotone(
        seed in 0u64..1000,
        alpha in 0.2f64..3.0,
        a0 in -1.0f64..1.0,
        s0 in 0.1f64..1.0,
    ) {
        let spec = small_spec(1.0, 1.0, a0, -0.2, s0, 0.3, 0.5);
        let p = simulate_map(&spec, 0.0, 0, 0.5, 1e-2, rng_fork(seed, 1)).unwrap();
        let clock = additive_clock(&p, alpha);
        for w in clock.windows(2) {
            // equal only across zero-width jump records
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert_eq!(clock[0], 0.0);
    }

    #[test]
    fn scaling_composes_and_preserves_angles(
        seed in 0u64..1000,
        c1 in 0.2f64..3.0,
        c2 in 0.2f64..3.0,
        alpha in 0.5f64..2.0,
    ) {
        let spec = small_spec(1.0, 1.5, 0.3, -0.4, 0.5, 0.5, 0.6);
        let p = simulate_map(&spec, 0.0, 0, 0.5, 1e-2, rng_fork(seed, 2)).unwrap();
        let ss = lamperti_kiu(&p, alpha).unwrap();
        let a = scale_path(&scale_path(&ss, c1), c2);
        let b = scale_path(&ss, c1 * c2);
        prop_assert_eq!(&a.theta, &b.theta);
        for i in 0..a.len() {
            prop_assert!((a.r[i] - b.r[i]).abs() <= 1e-9 * b.r[i].abs().max(1.0));
            prop_assert!((a.times[i] - b.times[i]).abs() <= 1e-9 * b.times[i].abs().max(1.0));
        }
    }

    #[test]
    fn dual_is_involutive_for_symmetric_switch_models(
        q01 in 0.3f64..2.0,
        q10 in 0.3f64..2.0,
        a0 in -1.0f64..1.0,
        rate in 0.0f64..1.5,
    ) {
        let spec = small_spec(q01, q10, a0, 0.2, 0.4, 0.6, rate);
        let pi = stationary_pi(&spec.q).unwrap();
        let dd = build_dual(&build_dual(&spec, &pi).unwrap(), &pi).unwrap();
        prop_assert_eq!(&dd.drift, &spec.drift);
        prop_assert_eq!(&dd.jumps, &spec.jumps);
        for j in 0..2 {
            for k in 0..2 {
                prop_assert!((dd.q[j][k] - spec.q[j][k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn weighted_clouds_keep_unit_mass_under_marginals(
        values in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.01f64..1.0), 1..40),
    ) {
        let samples: Vec<Vec<f64>> = values.iter().map(|(a, b, _)| vec![*a, *b]).collect();
        let weights: Vec<f64> = values.iter().map(|(_, _, w)| *w).collect();
        let d = EmpiricalDist::with_weights(samples, weights).unwrap();
        for col in 0..2 {
            let m = d.marginal(col).unwrap();
            let mass: f64 = m.iter().map(|p| p.1).sum();
            prop_assert!((mass - 1.0).abs() < 1e-9);
        }
    }
}
