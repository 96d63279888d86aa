use proptest::prelude::*;

use sdelimit_core::model::{synthetic_model, ParamSchedule, SyntheticKind};
use sdelimit_core::stats::{ks_distance, TrendRule};
use sdelimit_core::transform::{build_f, TransformOptions};

fn small_ints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-1000i32..1000).prop_map(f64::from), 1..60)
}

proptest! {
    #[test]
    fn ks_is_symmetric(a in small_ints(), b in small_ints()) {
        prop_assert_eq!(ks_distance(&a, &b).unwrap(), ks_distance(&b, &a).unwrap());
    }

    #[test]
    fn ks_is_invariant_under_increasing_maps(a in small_ints(), b in small_ints()) {
        // x³ + x is strictly increasing and exact on these integers
        let map = |v: &[f64]| v.iter().map(|x| x * x * x + x).collect::<Vec<_>>();
        prop_assert_eq!(ks_distance(&a, &b).unwrap(), ks_distance(&map(&a), &map(&b)).unwrap());
    }

    #[test]
    fn ks_lies_in_unit_interval(a in small_ints(), b in small_ints()) {
        let d = ks_distance(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn trend_rule_is_scale_free(
        v in prop::collection::vec(1e-6f64..10.0, 2..10),
        k in -20i32..20,
    ) {
        let rule = TrendRule::default();
        let c = 2f64.powi(k);
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        prop_assert_eq!(rule.evaluate(&v), rule.evaluate(&scaled));
    }

    #[test]
    fn schedules_must_increase_strictly(v in prop::collection::vec(0.5f64..100.0, 1..8)) {
        let ok = v.iter().all(|b| *b > 1.0) && v.windows(2).all(|w| w[1] > w[0]);
        prop_assert_eq!(ParamSchedule::new(v).is_ok(), ok);
    }

    #[test]
    fn constant_drift_scale_function(c in -2.0f64..2.0) {
        let model = synthetic_model(SyntheticKind::ConstantDrift(c)).at(4.0);
        let table = build_f(&model, &TransformOptions { x_max: 2.0, ..Default::default() }).unwrap();
        prop_assert!(table.g_strictly_increasing());
        for (x, fp) in table.x.iter().zip(&table.f_prime) {
            let exact = (-2.0 * c * x).exp();
            prop_assert!(((fp - exact) / exact).abs() < 1e-8, "x = {}: {} vs {}", x, fp, exact);
        }
        for (x, f) in table.x.iter().zip(&table.f) {
            let exact = if c == 0.0 { *x } else { (1.0 - (-2.0 * c * x).exp()) / (2.0 * c) };
            prop_assert!((f - exact).abs() <= 1e-7 * exact.abs().max(1e-3), "x = {}: {} vs {}", x, f, exact);
        }
    }
}
