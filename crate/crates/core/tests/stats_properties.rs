mod common;

use common::*;
use kdfair::stats::{regularized_incomplete_beta, spearman, student_t_cdf, student_t_two_tailed_p, welch_t_test};
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..25)
}

/// Rejects samples whose spread is too small for a meaningful relative check.
fn spread(xs: &[f64]) -> f64 {
    xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min)
}

proptest! {
    #[test]
    fn welch_is_antisymmetric(a in sample(), b in sample()) {
        prop_assume!(spread(&a) > 1e-3 && spread(&b) > 1e-3);
        let (ab, ba) = (welch_t_test(&a, &b).unwrap(), welch_t_test(&b, &a).unwrap());
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.df, ba.df);
        prop_assert_eq!(ab.p, ba.p);
    }

    #[test]
    fn welch_ignores_common_affine_maps(a in sample(), b in sample(), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        prop_assume!(spread(&a) > 1e-2 && spread(&b) > 1e-2);
        let map = |xs: &[f64]| xs.iter().map(|x| scale * x + shift).collect::<Vec<_>>();
        let r = welch_t_test(&a, &b).unwrap();
        let m = welch_t_test(&map(&a), &map(&b)).unwrap();
        prop_assert!((r.t - m.t).abs() <= 1e-7 * r.t.abs().max(1.0));
        prop_assert!((r.df - m.df).abs() <= 1e-7 * r.df);
        prop_assert!((r.p - m.p).abs() <= 1e-7);
    }

    #[test]
    fn welch_matches_the_quadrature_oracle(a in sample(), b in sample()) {
        prop_assume!(spread(&a) > 1e-3 && spread(&b) > 1e-3);
        let r = welch_t_test(&a, &b).unwrap();
        let (t, df, p) = ref_welch(&a, &b);
        prop_assert!((r.t - t).abs() <= 1e-9 * t.abs().max(1.0));
        prop_assert!((r.df - df).abs() <= 1e-9 * df);
        prop_assert!((r.p - p).abs() <= 1e-6, "p {} vs oracle {}", r.p, p);
    }

    #[test]
    fn t_cdf_matches_quadrature(t in -30.0f64..30.0, df in 0.5f64..200.0) {
        let ours = student_t_cdf(t, df).unwrap();
        prop_assert!((ours - t_cdf_quadrature(t, df)).abs() <= 1e-9);
        let p = student_t_two_tailed_p(t, df).unwrap();
        prop_assert!((p - t_two_tailed_quadrature(t, df)).abs() <= 1e-9);
    }

    #[test]
    fn incomplete_beta_reflection(a in 0.1f64..40.0, b in 0.1f64..40.0, x in 0.0f64..=1.0) {
        let lhs = regularized_incomplete_beta(a, b, x).unwrap();
        let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10);
        prop_assert!((0.0..=1.0).contains(&lhs));
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps(x in prop::collection::vec(-5.0f64..5.0, 3..30)) {
        prop_assume!(spread(&x) > 0.0);
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        prop_assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        prop_assert!((spearman(&x, &z).unwrap() + 1.0).abs() < 1e-12);
    }
}

#[test]
fn incomplete_beta_closed_forms() {
    for &x in &[0.0, 0.1, 0.37, 0.5, 0.93, 1.0] {
        assert!((regularized_incomplete_beta(1.0, 1.0, x).unwrap() - x).abs() < 1e-14);
        let i = regularized_incomplete_beta(2.0, 1.0, x).unwrap();
        assert!((i - x * x).abs() < 1e-14);
        let j = regularized_incomplete_beta(0.5, 0.5, x).unwrap();
        assert!((j - 2.0 / std::f64::consts::PI * x.sqrt().asin()).abs() < 1e-12);
    }
}

#[test]
fn t_cdf_at_tabulated_critical_values() {
    // one-sided 0.975 quantiles
    for (df, t) in [(1.0, 12.706), (2.0, 4.303), (4.0, 2.776), (10.0, 2.228), (30.0, 2.042)] {
        assert!((student_t_cdf(t, df).unwrap() - 0.975).abs() < 5e-5, "df {df}");
    }
    assert_eq!(student_t_cdf(0.0, 3.0).unwrap(), 0.5);
}

#[test]
fn degenerate_samples() {
    let same = welch_t_test(&[0.7; 4], &[0.7; 3]).unwrap();
    assert_eq!((same.t, same.p), (0.0, 1.0));
    let apart = welch_t_test(&[0.7; 4], &[0.9; 3]).unwrap();
    assert_eq!(apart.t, f64::NEG_INFINITY);
    assert_eq!(apart.p, 0.0);
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
    assert!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
}
