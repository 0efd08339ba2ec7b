//! The stacked aggregation network: a small rectifier MLP with a scalar
//! linear output, exact reverse-mode gradients, and an Adam optimizer.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Rectifier,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 32]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init_seed: u64,
}

impl NetConfig {
    /// Two hidden layers of 64 and 32 units.
    pub fn new(input_dim: usize, init_seed: u64) -> Self {
        NetConfig {
            input_dim,
            hidden: default_hidden(),
            activation: Activation::Rectifier,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::config("layer widths must be >= 1"));
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }
}

/// One affine layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

/// Trainable parameters. Hidden layers use the rectifier; the last layer is
/// linear with a single output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

/// Same shapes as [`NetParams`].
pub type Gradients = NetParams;

impl NetParams {
    pub fn zeros(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let widths = config.widths();
        Ok(NetParams {
            layers: widths
                .windows(2)
                .map(|w| Layer::zeros(w[0], w[1]))
                .collect(),
        })
    }

    pub fn zeros_like(&self) -> Self {
        NetParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    /// Checks that layer shapes chain from the input to a single output.
    pub fn validate(&self) -> Result<()> {
        let shape_err = |m: &str| Err(Error::Shape(String::from(m)));
        let Some(last) = self.layers.last() else {
            return shape_err("network has no layers");
        };
        if last.outputs != 1 {
            return shape_err("output layer must have width 1");
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return shape_err("zero-width layer");
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(alloc::format!("layer {i} buffer sizes")));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(Error::Shape(alloc::format!("layer {i} does not chain")));
            }
            if let Some(&bad) = l.weights.iter().chain(&l.bias).find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(bad));
            }
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &NetParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::LengthMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut rest = flat;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn buffers_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }

    fn buffers(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    pub fn fill_zero(&mut self) {
        for b in self.buffers_mut() {
            b.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for b in self.buffers_mut() {
            b.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass recording every layer's post-activation in `ws`.
    pub fn forward_with(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        ws.prepare(self);
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let (done, todo) = ws.acts.split_at_mut(li + 1);
            let input = &done[li];
            let out = &mut todo[0];
            for (o, row) in layer.weights.chunks_exact(layer.inputs).enumerate() {
                let z = layer.bias[o] + dot(row, input);
                out[o] = if li == last { z } else { z.max(0.0) };
            }
        }
        ws.acts[self.layers.len()][0]
    }

    /// Adds `upstream * d y_pred / d theta` into `grads`, using the
    /// activations left in `ws` by the preceding [`forward_with`](Self::forward_with).
    pub fn backward_with(&self, upstream: f64, ws: &mut Workspace, grads: &mut Gradients) {
        let n = self.layers.len();
        ws.delta[n][0] = upstream;
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            let g = &mut grads.layers[li];
            let input = &ws.acts[li];
            let (below, above) = ws.delta.split_at_mut(li + 1);
            let delta_out = &above[0];
            for (o, &d) in delta_out.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let grow = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, &a) in grow.iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if li > 0 {
                let delta_in = &mut below[li];
                delta_in.fill(0.0);
                for (o, &d) in delta_out.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (di, &w) in delta_in.iter_mut().zip(row) {
                        *di += w * d;
                    }
                }
                // Rectifier derivative, read off the stored post-activation.
                for (di, &a) in delta_in.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *di = 0.0;
                    }
                }
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scratch buffers for forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn prepare(&mut self, params: &NetParams) {
        let n = params.layers.len();
        let fits = self.acts.len() == n + 1
            && self.acts[0].len() == params.layers[0].inputs
            && self
                .acts
                .iter()
                .skip(1)
                .zip(&params.layers)
                .all(|(a, l)| a.len() == l.outputs);
        if fits {
            return;
        }
        self.acts.clear();
        self.acts.push(vec![0.0; params.layers[0].inputs]);
        self.acts
            .extend(params.layers.iter().map(|l| vec![0.0; l.outputs]));
        self.delta = self.acts.clone();
    }
}

/// Rectifier-friendly scaled uniform init, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
/// with zero biases.
pub fn init(config: &NetConfig) -> Result<NetParams> {
    let mut params = NetParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
    for layer in &mut params.layers {
        let limit = math::sqrt(6.0 / layer.inputs as f64);
        for w in &mut layer.weights {
            *w = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}

pub fn forward(params: &NetParams, s: &[f64]) -> Result<f64> {
    params.check_input(s)?;
    Ok(params.forward_with(s, &mut Workspace::default()))
}

/// Gradient of `upstream * y_pred` with respect to every parameter.
pub fn backward(params: &NetParams, s: &[f64], upstream: f64) -> Result<Gradients> {
    params.check_input(s)?;
    let mut ws = Workspace::default();
    let mut grads = params.zeros_like();
    params.forward_with(s, &mut ws);
    params.backward_with(upstream, &mut ws, &mut grads);
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: NetParams,
    v: NetParams,
    t: u64,
}

impl AdamState {
    pub fn new(params: &NetParams, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_update(
    params: &mut NetParams,
    grads: &Gradients,
    state: &mut AdamState,
    step_size: f64,
) -> Result<()> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(Error::Shape(String::from(
            "parameters, gradients and optimizer state differ in shape",
        )));
    }
    let AdamConfig {
        beta1,
        beta2,
        epsilon,
        ..
    } = state.config;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - math::powi(beta1, t);
    let bc2 = 1.0 - math::powi(beta2, t);
    let bufs = params
        .buffers_mut()
        .zip(grads.buffers())
        .zip(state.m.buffers_mut().zip(state.v.buffers_mut()));
    for ((p, g), (m, v)) in bufs {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= step_size * m_hat / (math::sqrt(v_hat) + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> NetParams {
        // 2 -> 2 -> 1 with both hidden units active on the test inputs.
        NetParams {
            layers: vec![
                Layer {
                    inputs: 2,
                    outputs: 2,
                    weights: vec![1.0, 0.0, 0.5, -1.0],
                    bias: vec![2.0, 3.0],
                },
                Layer {
                    inputs: 2,
                    outputs: 1,
                    weights: vec![2.0, -1.0],
                    bias: vec![0.5],
                },
            ],
        }
    }

    #[test]
    fn toy_net_is_affine_by_hand() {
        // h = (x0 + 2, 0.5 x0 - x1 + 3); y = 2 h0 - h1 + 0.5 = 1.5 x0 + x1 + 1.5
        let p = toy();
        p.validate().unwrap();
        for x in [[0.0, 0.0], [0.5, -0.5], [-1.0, 1.0], [1.0, 1.0]] {
            let y = forward(&p, &x).unwrap();
            assert!((y - (1.5 * x[0] + x[1] + 1.5)).abs() < 1e-15, "{x:?}: {y}");
        }
    }

    #[test]
    fn toy_net_gradients_by_hand() {
        let p = toy();
        let g = backward(&p, &[0.5, -0.5], 1.0).unwrap();
        // dy/dW2 = h = (2.5, 3.75); dy/db2 = 1; dy/dW1 row o = v_o * x; dy/db1 = v.
        assert_eq!(g.layers[1].weights, vec![2.5, 3.75]);
        assert_eq!(g.layers[1].bias, vec![1.0]);
        assert_eq!(g.layers[0].weights, vec![1.0, -1.0, -0.5, 0.5]);
        assert_eq!(g.layers[0].bias, vec![2.0, -1.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let p = NetParams::zeros(&NetConfig::new(3, 0)).unwrap();
        assert_eq!(forward(&p, &[0.3, -0.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let p = init(&NetConfig::new(2, 0)).unwrap();
        assert!(forward(&p, &[0.0]).is_err());
        assert!(backward(&p, &[0.0, 0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = NetConfig::new(4, 11);
        let a = init(&cfg).unwrap();
        assert_eq!(a, init(&cfg).unwrap());
        assert_ne!(a, init(&NetConfig::new(4, 12)).unwrap());
        for l in &a.layers {
            assert!(l.bias.iter().all(|&b| b == 0.0));
            let bound = math::sqrt(6.0 / l.inputs as f64);
            assert!(l.weights.iter().all(|w| w.abs() <= bound));
        }
        let widths: Vec<_> = a.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(widths, vec![(4, 64), (64, 32), (32, 1)]);
    }

    #[test]
    fn config_rejects_zero_width() {
        let mut cfg = NetConfig::new(2, 0);
        cfg.hidden = vec![8, 0];
        assert!(init(&cfg).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = init(&NetConfig::new(3, 5)).unwrap();
        let g = backward(&p, &[0.1, 0.2, -0.4], 0.0).unwrap();
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let p = init(&NetConfig::new(3, 5)).unwrap();
        let x = [0.1, 0.2, -0.4];
        let g1 = backward(&p, &x, 1.0).unwrap().to_flat();
        let g3 = backward(&p, &x, -3.0).unwrap().to_flat();
        for (a, b) in g1.iter().zip(&g3) {
            assert!((b + 3.0 * a).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut p = init(&NetConfig::new(2, 1)).unwrap();
        let before = p.clone();
        let mut st = AdamState::new(&p, AdamConfig::default());
        let g = p.zeros_like();
        for _ in 0..10 {
            adam_update(&mut p, &g, &mut st, 1e-3).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.steps(), 10);
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let single = NetParams {
            layers: vec![Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.0],
                bias: vec![0.0],
            }],
        };
        for g in [2.5, -0.01] {
            let mut p = single.clone();
            let mut st = AdamState::new(&p, AdamConfig::default());
            let mut grads = p.zeros_like();
            grads.layers[0].weights[0] = g;
            for _ in 0..100 {
                adam_update(&mut p, &grads, &mut st, 1e-3).unwrap();
            }
            let w = p.layers[0].weights[0];
            assert!(w * g < 0.0 && (w.abs() - 0.1).abs() < 1e-6, "{g}: {w}");
        }
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let p0 = init(&NetConfig::new(2, 1)).unwrap();
        let g = backward(&p0, &[0.3, 0.3], 1.0).unwrap();
        let st0 = AdamState::new(&p0, AdamConfig::default());
        let (mut pa, mut sa) = (p0.clone(), st0.clone());
        let (mut pb, mut sb) = (p0.clone(), st0.clone());
        adam_update(&mut pa, &g, &mut sa, 1e-3).unwrap();
        adam_update(&mut pb, &g, &mut sb, 1e-3).unwrap();
        assert_eq!((pa, sa), (pb, sb));

        let other = init(&NetConfig::new(3, 1)).unwrap();
        let mut p = p0.clone();
        let mut st = st0.clone();
        assert!(adam_update(&mut p, &other, &mut st, 1e-3).is_err());
    }

    #[test]
    fn flat_round_trip() {
        let p = init(&NetConfig::new(2, 9)).unwrap();
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[1.0]).is_err());
    }
}
