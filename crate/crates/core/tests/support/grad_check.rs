//! Backprop against central finite differences of the full per-sample loss:
//! network forward pass followed by the weighted squared error.

use orsa_core::aggnet::{self, NetConfig, NetParams};
use orsa_core::trainer::{orsa_loss, orsa_loss_grad};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

struct Case {
    params: NetParams,
    x: Vec<f64>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=4);
    let mut cfg = NetConfig::new(dim, seed);
    if seed % 2 == 1 {
        cfg.hidden = vec![rng.random_range(2..=8), rng.random_range(2..=8)];
    }
    let mut params = aggnet::init(&cfg).unwrap();
    // Nonzero biases so every layer's bias gradient is exercised.
    let mut flat = params.to_flat();
    for v in &mut flat {
        *v += rng.random_range(-0.05..0.05);
    }
    params.set_flat(&flat).unwrap();
    let k = rng.random_range(1..=6);
    let mut weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Case {
        params,
        x: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        values: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
        weights,
    }
}

fn loss(c: &Case, params: &NetParams) -> f64 {
    let y = aggnet::forward(params, &c.x).unwrap();
    orsa_loss(y, &c.values, &c.weights).unwrap()
}

/// Largest relative error between analytic and numeric gradients; entries
/// where both are below the absolute floor are compared absolutely.
pub fn max_relative_error(seed: u64) -> f64 {
    let c = case(seed);
    let y = aggnet::forward(&c.params, &c.x).unwrap();
    let upstream = orsa_loss_grad(y, &c.values, &c.weights).unwrap();
    let analytic = aggnet::backward(&c.params, &c.x, upstream).unwrap().to_flat();
    let base = c.params.to_flat();
    let mut probe = c.params.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut flat = base.clone();
        flat[i] = base[i] + H;
        probe.set_flat(&flat).unwrap();
        let up = loss(&c, &probe);
        flat[i] = base[i] - H;
        probe.set_flat(&flat).unwrap();
        let down = loss(&c, &probe);
        let numeric = (up - down) / (2.0 * H);
        let scale = a.abs().max(numeric.abs());
        let err = if scale < ABS_FLOOR {
            0.0
        } else {
            (a - numeric).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}

