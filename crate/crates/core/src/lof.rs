//! Local Outlier Factor over the scalar member outputs of one sample, and
//! the reciprocal-LOF weights used by the aggregation loss.
//!
//! For a point `A` with neighbor count `k`:
//!
//! - `d_k(A)` is the distance to its `k`-th nearest other point, and the
//!   neighborhood `N_k(A)` holds every other point no farther than `d_k(A)`
//!   (ties included, so `|N_k(A)|` may exceed `k`);
//! - `rd_k(A, B) = max(d_k(B), d(A, B))`;
//! - `lrd_k(A) = 1 / mean_{B in N_k(A)} rd_k(A, B)`, with the mean floored
//!   at [`MEAN_REACH_FLOOR`] so co-located points stay finite;
//! - `LOF_k(A) = mean_{B in N_k(A)} lrd_k(B) / lrd_k(A)`.
//!
//! Scores near 1 mark inliers; outliers score above 1.

use alloc::vec::Vec;
use core::ops::Deref;

use crate::{Error, Result};

/// Floor on the mean reachability distance before it is inverted.
pub const MEAN_REACH_FLOOR: f64 = 1e-12;

/// Metric between two member outputs.
#[inline]
pub fn distance(a: f64, b: f64) -> f64 {
    (a - b).abs()
}

/// Borrowed, validated set of at least two finite points.
#[derive(Debug, Clone, Copy)]
pub struct PointSet<'a> {
    points: &'a [f64],
}

impl<'a> PointSet<'a> {
    pub fn new(points: &'a [f64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints {
                min: 2,
                actual: points.len(),
            });
        }
        if let Some(&bad) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(PointSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [f64] {
        self.points
    }

    fn check_k(&self, k_lof: usize) -> Result<()> {
        LofParams::new(k_lof, self.len()).map(|_| ())
    }

    fn check_idx(&self, idx: usize) -> Result<()> {
        if idx >= self.len() {
            return Err(Error::IndexOutOfBounds {
                index: idx,
                len: self.len(),
            });
        }
        Ok(())
    }
}

/// Neighbor count, valid for a set of `n` points when `1 <= k_lof <= n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LofParams {
    k_lof: usize,
}

impl LofParams {
    pub fn new(k_lof: usize, n: usize) -> Result<Self> {
        Error::check_range("k_lof", k_lof, 1, n.saturating_sub(1))?;
        Ok(LofParams { k_lof })
    }

    pub fn k_lof(&self) -> usize {
        self.k_lof
    }
}

/// One LOF score per point; all positive and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LofScores(Vec<f64>);

impl LofScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(&bad) = scores.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::NonFinite(bad));
        }
        Ok(LofScores(scores))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LofScores {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Non-negative weights over a selection, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Uniform `1/k` weights, the non-robust reference.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptySelection);
        }
        Ok(WeightVector(alloc::vec![1.0 / k as f64; k]))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Distance from `idx` to its `k_lof`-th nearest other point, and the
/// indices of every other point within that distance (ascending).
pub fn k_distance(points: &PointSet<'_>, idx: usize, k_lof: usize) -> Result<(f64, Vec<usize>)> {
    points.check_k(k_lof)?;
    points.check_idx(idx)?;
    let mut scratch = Vec::with_capacity(points.len());
    let d_k = kth_distance(points.points, idx, k_lof, &mut scratch);
    let a = points.points[idx];
    let neighbors = (0..points.len())
        .filter(|&j| j != idx && distance(a, points.points[j]) <= d_k)
        .collect();
    Ok((d_k, neighbors))
}

/// `max(d_k(B), d(A, B))`.
pub fn reachability_distance(d_k_b: f64, d_ab: f64) -> Result<f64> {
    for d in [d_k_b, d_ab] {
        if d < 0.0 {
            return Err(Error::NegativeDistance(d));
        }
        if !d.is_finite() {
            return Err(Error::NonFinite(d));
        }
    }
    Ok(d_k_b.max(d_ab))
}

/// Local reachability density of a single point.
pub fn local_reachability_density(points: &PointSet<'_>, idx: usize, k_lof: usize) -> Result<f64> {
    points.check_k(k_lof)?;
    points.check_idx(idx)?;
    let mut ws = LofWorkspace::default();
    ws.compute(points.points, k_lof);
    Ok(ws.lrd[idx])
}

/// LOF score of every point.
pub fn lof_scores(points: &PointSet<'_>, k_lof: usize) -> Result<LofScores> {
    points.check_k(k_lof)?;
    let mut ws = LofWorkspace::default();
    let mut out = Vec::with_capacity(points.len());
    ws.scores_into(points.points, k_lof, &mut out);
    Ok(LofScores(out))
}

/// `w_i = (1 / LOF_i) / sum_j (1 / LOF_j)` over the selected indices, in
/// selection order.
pub fn lof_weights(scores: &LofScores, selected: &[usize]) -> Result<WeightVector> {
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    let mut weights = Vec::with_capacity(selected.len());
    for &i in selected {
        let s = *scores.get(i).ok_or(Error::IndexOutOfBounds {
            index: i,
            len: scores.len(),
        })?;
        weights.push(1.0 / s);
    }
    normalize_in_place(&mut weights);
    Ok(WeightVector(weights))
}

pub(crate) fn normalize_in_place(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    for w in weights {
        *w /= total;
    }
}

/// Distance to the `k`-th nearest point other than `idx`.
fn kth_distance(points: &[f64], idx: usize, k: usize, scratch: &mut Vec<f64>) -> f64 {
    let a = points[idx];
    scratch.clear();
    scratch.extend(
        points
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != idx)
            .map(|(_, &b)| distance(a, b)),
    );
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// Reusable buffers for evaluating LOF on many small point sets.
///
/// Callers must validate `k_lof` against the point count themselves; the
/// public free functions do this.
#[derive(Debug, Default, Clone)]
pub struct LofWorkspace {
    k_dist: Vec<f64>,
    lrd: Vec<f64>,
    // Neighborhoods in compressed rows: `neighbors[offsets[i]..offsets[i + 1]]`.
    neighbors: Vec<usize>,
    offsets: Vec<usize>,
    scratch: Vec<f64>,
}

impl LofWorkspace {
    fn compute(&mut self, points: &[f64], k: usize) {
        let n = points.len();
        debug_assert!(k >= 1 && k < n);
        self.k_dist.clear();
        self.neighbors.clear();
        self.offsets.clear();
        self.offsets.push(0);
        for i in 0..n {
            let d_k = kth_distance(points, i, k, &mut self.scratch);
            self.k_dist.push(d_k);
            let a = points[i];
            for (j, &b) in points.iter().enumerate() {
                if j != i && distance(a, b) <= d_k {
                    self.neighbors.push(j);
                }
            }
            self.offsets.push(self.neighbors.len());
        }
        self.lrd.clear();
        for i in 0..n {
            let hood = &self.neighbors[self.offsets[i]..self.offsets[i + 1]];
            let a = points[i];
            let total: f64 = hood
                .iter()
                .map(|&j| self.k_dist[j].max(distance(a, points[j])))
                .sum();
            let mean = total / hood.len() as f64;
            self.lrd.push(1.0 / mean.max(MEAN_REACH_FLOOR));
        }
    }

    /// Writes one LOF score per point into `out` (cleared first).
    pub fn scores_into(&mut self, points: &[f64], k_lof: usize, out: &mut Vec<f64>) {
        self.compute(points, k_lof);
        out.clear();
        for i in 0..points.len() {
            let hood = &self.neighbors[self.offsets[i]..self.offsets[i + 1]];
            let ratio_sum: f64 = hood.iter().map(|&j| self.lrd[j] / self.lrd[i]).sum();
            out.push(ratio_sum / hood.len() as f64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(p: &[f64]) -> PointSet<'_> {
        PointSet::new(p).unwrap()
    }

    #[test]
    fn k_distance_examples() {
        let p = [0.0, 1.0, 3.0];
        assert_eq!(k_distance(&set(&p), 0, 1).unwrap(), (1.0, vec![1]));
        assert_eq!(k_distance(&set(&p), 0, 2).unwrap(), (3.0, vec![1, 2]));
    }

    #[test]
    fn k_distance_includes_ties() {
        let p = [0.0, 1.0, 1.0, 5.0];
        assert_eq!(k_distance(&set(&p), 0, 1).unwrap(), (1.0, vec![1, 2]));
    }

    #[test]
    fn k_distance_rejects_bad_params() {
        assert!(PointSet::new(&[1.0]).is_err());
        let p = [0.0, 1.0, 3.0];
        assert!(k_distance(&set(&p), 0, 0).is_err());
        assert!(k_distance(&set(&p), 0, 3).is_err());
        assert!(k_distance(&set(&p), 3, 1).is_err());
    }

    #[test]
    fn reachability_is_max() {
        assert_eq!(reachability_distance(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(reachability_distance(2.0, 3.0).unwrap(), 3.0);
        assert_eq!(reachability_distance(0.0, 0.0).unwrap(), 0.0);
        assert!(reachability_distance(-1.0, 0.0).is_err());
        assert!(reachability_distance(0.0, -1e-9).is_err());
    }

    #[test]
    fn lrd_examples() {
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(local_reachability_density(&set(&grid), 2, 2).unwrap(), 1.0);
        let dup = [5.0, 5.0, 5.0];
        assert_eq!(
            local_reachability_density(&set(&dup), 0, 1).unwrap(),
            1.0 / MEAN_REACH_FLOOR
        );
        let pair = [0.0, 10.0];
        assert_eq!(local_reachability_density(&set(&pair), 0, 1).unwrap(), 0.1);
    }

    #[test]
    fn identical_points_score_one() {
        let p = [2.5; 7];
        for k in 1..7 {
            let s = lof_scores(&set(&p), k).unwrap();
            assert!(s.iter().all(|&x| x == 1.0), "k={k}: {s:?}");
        }
    }

    #[test]
    fn lof_weights_examples() {
        let scores = LofScores::new(vec![1.0, 1.0, 100.0]).unwrap();
        let w = lof_weights(&scores, &[0, 1, 2]).unwrap();
        // 1 / (1 + 1 + 0.01) = 0.497512..., 0.01 / 2.01 = 0.004975...
        assert!((w[0] - 0.497_512_437_810_945_3).abs() < 1e-12);
        assert!((w[1] - 0.497_512_437_810_945_3).abs() < 1e-12);
        assert!((w[2] - 0.004_975_124_378_109_453).abs() < 1e-12);

        let eq = LofScores::new(vec![1.3; 4]).unwrap();
        let w = lof_weights(&eq, &[3, 0, 2]).unwrap();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        let w = lof_weights(&scores, &[2]).unwrap();
        assert_eq!(&*w, &[1.0]);

        assert_eq!(lof_weights(&scores, &[]), Err(Error::EmptySelection));
        assert!(lof_weights(&scores, &[5]).is_err());
    }

    #[test]
    fn scores_reject_nonpositive() {
        assert!(LofScores::new(vec![1.0, 0.0]).is_err());
        assert!(LofScores::new(vec![f64::NAN]).is_err());
    }
}
