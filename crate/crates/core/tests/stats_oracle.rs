mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use teleop_core::stats::{bin_conditional_stats, cohens_d, levene_test, welch_t, BinSpec};

const X: [f64; 12] = [5.002, 5.597, 4.452, 3.219, 4.091, 3.017, 5.12, 7.68, 4.016, 3.759, 5.98, 5.714];
const Y: [f64; 17] = [
    6.869, 3.243, 6.398, 8.934, 1.795, 4.898, -0.154, 1.987, 0.054, 5.677, 2.064, 7.449, 7.049, 5.846, -2.309, 4.615,
    6.33,
];

#[test]
fn welch_matches_published_reference_values() {
    let r = welch_t(&X, &Y).unwrap();
    assert!((r.t - 0.7538538394888125).abs() < 1e-9, "{}", r.t);
    assert!((r.dof - 22.96110132288591).abs() < 1e-9, "{}", r.dof);
    assert!((r.p - 0.45859851438733934).abs() < 1e-6, "{}", r.p);
}

#[test]
fn levene_matches_published_reference_values() {
    let r = levene_test(&X, &Y).unwrap();
    assert!((r.w - 6.758607742868828).abs() < 1e-9, "{}", r.w);
    assert!((r.p - 0.014942870538903509).abs() < 1e-6, "{}", r.p);
}

#[test]
fn random_datasets_match_textbook_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..100 {
        let (x, y) = random_dataset(&mut rng);
        let (t, dof, p) = textbook_welch(&x, &y);
        let w = welch_t(&x, &y).unwrap();
        assert!((w.t - t).abs() < 1e-6, "dataset {i}: t {} vs {t}", w.t);
        assert!((w.dof - dof).abs() < 1e-6, "dataset {i}: dof {} vs {dof}", w.dof);
        assert!((w.p - p).abs() < 1e-3, "dataset {i}: p {} vs {p}", w.p);

        let d = cohens_d(&x, &y).unwrap();
        assert!((d.d - textbook_cohens_d(&x, &y)).abs() < 1e-3, "dataset {i}: d");
        assert!(d.ci95[0] < d.d && d.d < d.ci95[1], "dataset {i}: ci");

        let (lw, lp) = textbook_levene(&x, &y);
        let l = levene_test(&x, &y).unwrap();
        assert!((l.w - lw).abs() < 1e-6, "dataset {i}: W {} vs {lw}", l.w);
        assert!((l.p - lp).abs() < 1e-3, "dataset {i}: p {} vs {lp}", l.p);
    }
}

#[test]
fn levene_detects_tenfold_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let x: Vec<f64> = (0..100).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let y: Vec<f64> = (0..100).map(|_| 10.0 * rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        assert!(levene_test(&x, &y).unwrap().p < 0.01);
    }
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 3..60)
}

proptest! {
    #[test]
    fn welch_is_antisymmetric(x in sample(), y in sample()) {
        prop_assume!(x.iter().any(|v| *v != x[0]) && y.iter().any(|v| *v != y[0]));
        let a = welch_t(&x, &y).unwrap();
        let b = welch_t(&y, &x).unwrap();
        prop_assert_eq!(a.t, -b.t);
        prop_assert_eq!(a.p, b.p);
        prop_assert_eq!(a.dof, b.dof);
    }

    #[test]
    fn binning_conserves_mass(pairs in prop::collection::vec((0.0..10.0f64, -0.001..0.008f64), 1..500)) {
        let spec = BinSpec::default();
        let stats = bin_conditional_stats(pairs.iter().copied(), &spec).unwrap();
        let binned: usize = stats.bins.iter().map(|b| b.count).sum();
        prop_assert_eq!(binned + stats.out_of_range, pairs.len());
        let in_range: f64 = pairs
            .iter()
            .filter(|(_, b)| spec.index(*b).is_some())
            .map(|(a, _)| a)
            .sum();
        let reassembled: f64 = stats
            .bins
            .iter()
            .map(|b| b.mean.map_or(0.0, |m| m * b.count as f64))
            .sum();
        prop_assert!((reassembled - in_range).abs() < 1e-9 * (1.0 + in_range.abs()));
    }

    #[test]
    fn bins_are_left_closed(i in 0usize..70) {
        let spec = BinSpec::default();
        prop_assert_eq!(spec.index(spec.lower(i)), Some(i));
        prop_assert_eq!(spec.index(spec.b_max), Some(69));
    }
}
