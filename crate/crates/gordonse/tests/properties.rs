use gordonse::analysis::{d_angle, d_l2};
use gordonse::state_evolution::population;
use gordonse::{AlgorithmKind, SeOperator, StatePoint};
use proptest::prelude::*;

fn alg() -> impl Strategy<Value = AlgorithmKind> {
    prop::sample::select(AlgorithmKind::ALL.to_vec())
}

proptest! {
    #[test]
    fn gordon_maps_reflect_sign(a in 0.01f64..2.0, b in 0.0f64..2.0, sigma in 0.0f64..1.0, kappa in 2.0f64..500.0, k in alg()) {
        let op = SeOperator::gordon(k, sigma, kappa, 0.5);
        let p = op.apply(StatePoint { alpha: a, beta: b }).unwrap();
        let m = op.apply(StatePoint { alpha: -a, beta: b }).unwrap();
        prop_assert!((p.alpha + m.alpha).abs() <= 1e-14 * (1.0 + p.alpha.abs()));
        prop_assert_eq!(p.beta, m.beta);
        prop_assert!(p.beta >= 0.0 && p.beta.is_finite());
    }

    #[test]
    fn finite_samples_only_add_spread(a in 0.01f64..2.0, b in 0.0f64..2.0, sigma in 0.0f64..1.0, kappa in 2.0f64..500.0, k in alg()) {
        let s = StatePoint { alpha: a, beta: b };
        let g = SeOperator::gordon(k, sigma, kappa, 0.5).apply(s).unwrap();
        let p = population(k, s, sigma, 0.5).unwrap();
        prop_assert_eq!(g.alpha, p.alpha);
        prop_assert!(g.beta >= p.beta - 1e-15);
    }

    #[test]
    fn metrics_ignore_global_sign(a in -2.0f64..2.0, b in 0.0f64..2.0) {
        let s = StatePoint { alpha: a, beta: b };
        let r = StatePoint { alpha: -a, beta: b };
        prop_assert_eq!(d_l2(s), d_l2(r));
        prop_assert_eq!(d_angle(s), d_angle(r));
        prop_assert!(d_angle(s) <= std::f64::consts::FRAC_PI_2 + 1e-15);
    }
}
