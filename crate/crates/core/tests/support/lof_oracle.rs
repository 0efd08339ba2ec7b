//! Brute-force LOF written straight from the definitions, sharing no code
//! with the library: no sorting, no selection, every quantity recomputed by
//! exhaustive scans. Quadratic to cubic in `n`, so only for small sets.

const MEAN_REACH_FLOOR: f64 = 1e-12;

fn dist(p: &[f64], a: usize, b: usize) -> f64 {
    (p[a] - p[b]).abs()
}

/// Smallest distance `t` to another point such that at least `k` other
/// points lie within `t`.
pub fn k_distance(p: &[f64], a: usize, k: usize) -> f64 {
    let mut best = f64::INFINITY;
    for b in (0..p.len()).filter(|&b| b != a) {
        let t = dist(p, a, b);
        let within = (0..p.len()).filter(|&c| c != a && dist(p, a, c) <= t).count();
        if within >= k && t < best {
            best = t;
        }
    }
    best
}

pub fn neighborhood(p: &[f64], a: usize, k_dist: f64) -> Vec<usize> {
    (0..p.len()).filter(|&b| b != a && dist(p, a, b) <= k_dist).collect()
}

pub fn lof(p: &[f64], k: usize) -> Vec<f64> {
    let n = p.len();
    let kd: Vec<f64> = (0..n).map(|a| k_distance(p, a, k)).collect();
    let hoods: Vec<Vec<usize>> = (0..n).map(|a| neighborhood(p, a, kd[a])).collect();
    let lrd: Vec<f64> = (0..n)
        .map(|a| {
            let total: f64 = hoods[a].iter().map(|&b| kd[b].max(dist(p, a, b))).sum();
            1.0 / (total / hoods[a].len() as f64).max(MEAN_REACH_FLOOR)
        })
        .collect();
    (0..n)
        .map(|a| hoods[a].iter().map(|&b| lrd[b] / lrd[a]).sum::<f64>() / hoods[a].len() as f64)
        .collect()
}
