#[path = "support/lof_oracle.rs"]
mod lof_oracle;

use orsa_core::lof::{self, PointSet};
use proptest::prelude::*;

fn scores(p: &[f64], k: usize) -> Vec<f64> {
    lof::lof_scores(&PointSet::new(p).unwrap(), k).unwrap().into_inner()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "point {i}: {x} vs {y}");
    }
}

// Distinct values on a coarse grid, so distances tie without duplicates.
fn grid_points() -> impl Strategy<Value = Vec<f64>> {
    (3usize..40).prop_flat_map(|n| {
        proptest::sample::subsequence((0..200).collect::<Vec<i32>>(), n)
            .prop_shuffle()
            .prop_map(|v| v.into_iter().map(|x| f64::from(x) * 0.25 - 10.0).collect())
    })
}

proptest! {
    #[test]
    fn matches_oracle(p in prop::collection::vec(-50.0f64..50.0, 3..50), k in 1usize..49) {
        let k = 1 + (k - 1) % (p.len() - 1);
        assert_close(&scores(&p, k), &oracle(&p, k), 1e-9);
    }

    #[test]
    fn matches_oracle_with_distance_ties(p in grid_points(), k in 1usize..39) {
        let k = 1 + (k - 1) % (p.len() - 1);
        assert_close(&scores(&p, k), &oracle(&p, k), 1e-9);
    }

    #[test]
    fn translation_and_scale_invariant(
        p in prop::collection::vec(-5.0f64..5.0, 4..30),
        shift in -100.0f64..100.0,
        scale in 0.01f64..100.0,
        k in 1usize..29,
    ) {
        let k = 1 + (k - 1) % (p.len() - 1);
        let moved: Vec<f64> = p.iter().map(|x| x * scale + shift).collect();
        let (a, b) = (scores(&p, k), scores(&moved, k));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-6 * x.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn scores_are_positive_and_finite(p in prop::collection::vec(-1.0f64..1.0, 2..40), k in 1usize..39) {
        let k = 1 + (k - 1) % (p.len() - 1);
        prop_assert!(scores(&p, k).iter().all(|s| s.is_finite() && *s > 0.0));
    }

    #[test]
    fn weights_sum_to_one_and_favor_low_scores(
        p in prop::collection::vec(-1.0f64..1.0, 3..30),
        k in 1usize..29,
    ) {
        let k = 1 + (k - 1) % (p.len() - 1);
        let s = lof::lof_scores(&PointSet::new(&p).unwrap(), k).unwrap();
        let all: Vec<usize> = (0..p.len()).collect();
        let w = lof::lof_weights(&s, &all).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..p.len() {
            for j in 0..p.len() {
                if s[i] < s[j] {
                    prop_assert!(w[i] >= w[j]);
                }
            }
        }
    }
}

fn oracle(p: &[f64], k: usize) -> Vec<f64> {
    lof_oracle::lof(p, k)
}

#[test]
fn far_point_score_grows_with_distance() {
    let cluster = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let mut last = 0.0;
    for far in [2.0, 5.0, 10.0, 50.0] {
        let mut p = cluster.to_vec();
        p.push(far);
        let s = scores(&p, 3);
        assert!(s[6] > last);
        assert_eq!(s.iter().cloned().fold(f64::MIN, f64::max), s[6]);
        last = s[6];
    }
}

#[test]
fn uniform_grid_scores_near_one() {
    let p: Vec<f64> = (0..30).map(f64::from).collect();
    for (i, s) in scores(&p, 2).iter().enumerate().skip(3).take(24) {
        assert!((s - 1.0).abs() < 1e-12, "point {i}: {s}");
    }
    assert_close(&scores(&p, 4), &oracle(&p, 4), 1e-12);
}

#[test]
fn planted_outlier_weight_shrinks() {
    let p = [0.0, 0.02, -0.01, 0.015, 0.005, 1.0];
    let s = lof::lof_scores(&PointSet::new(&p).unwrap(), 3).unwrap();
    let w = lof::lof_weights(&s, &[0, 1, 2, 3, 4, 5]).unwrap();
    assert!(w[5] < 1.0 / 6.0);
    assert!(w[5] < 0.01);
}
