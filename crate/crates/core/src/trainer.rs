//! The ORSA training loop.
//!
//! Per sample: evaluate all members, keep the `k_s` smallest (or largest)
//! outputs, weight them by normalized reciprocal LOF computed over all `N`
//! outputs, and regress the network toward them with the weighted squared
//! error
//!
//! ```text
//! L(y_pred) = sum_i w_i (y_i - y_pred)^2
//! ```
//!
//! The weights depend on member outputs only, so they are constants with
//! respect to the network. Every sample's selection, weights and the
//! minimizer of `L` (the weighted mean, see [`oracle_target`]) are computed
//! once up front in a [`TargetTable`]; training steps then only touch the
//! network.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggnet::{self, AdamConfig, AdamState, Gradients, NetConfig, NetParams, Workspace};
use crate::ensemble::{self, Member, Mode};
use crate::lof::{self, LofWorkspace};
use crate::math;
use crate::preprocess::Sample;
use crate::{Error, Result};

fn default_batch_size() -> usize {
    64
}
fn default_steps() -> usize {
    25_000
}
fn default_metric_window() -> usize {
    5_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrsaConfig {
    pub k_s: usize,
    pub k_lof: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric_window")]
    pub metric_window: usize,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl OrsaConfig {
    /// Batch 64, 25k steps, 5k-step metric window, soft-min.
    pub fn new(k_s: usize, k_lof: usize) -> Self {
        OrsaConfig {
            k_s,
            k_lof,
            mode: Mode::SoftMin,
            batch_size: default_batch_size(),
            steps: default_steps(),
            seed: 0,
            metric_window: default_metric_window(),
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self, n_devices: usize) -> Result<()> {
        Error::check_range("k_s", self.k_s, 1, n_devices)?;
        Error::check_range("k_lof", self.k_lof, 1, n_devices.saturating_sub(1))?;
        Error::check_range("batch_size", self.batch_size, 1, usize::MAX)?;
        Error::check_range("steps", self.steps, 1, usize::MAX)?;
        if !(self.adam.step_size > 0.0 && self.adam.step_size.is_finite()) {
            return Err(Error::config("adam step size must be positive"));
        }
        Ok(())
    }
}

fn check_weights(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::LengthMismatch {
            expected: values.len(),
            actual: weights.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(())
}

/// `sum_i w_i (y_i - y_pred)^2`.
pub fn orsa_loss(y_pred: f64, values: &[f64], weights: &[f64]) -> Result<f64> {
    check_weights(values, weights)?;
    Ok(weighted_sq_error(y_pred, values, weights))
}

/// `dL/dy_pred = 2 sum_i w_i (y_pred - y_i)`, weights held constant.
pub fn orsa_loss_grad(y_pred: f64, values: &[f64], weights: &[f64]) -> Result<f64> {
    check_weights(values, weights)?;
    Ok(loss_grad(y_pred, values, weights))
}

fn weighted_sq_error(y_pred: f64, values: &[f64], weights: &[f64]) -> f64 {
    values
        .iter()
        .zip(weights)
        .map(|(y, w)| w * (y - y_pred) * (y - y_pred))
        .sum()
}

fn loss_grad(y_pred: f64, values: &[f64], weights: &[f64]) -> f64 {
    2.0 * values
        .iter()
        .zip(weights)
        .map(|(y, w)| w * (y_pred - y))
        .sum::<f64>()
}

/// Selection, weights and closed-form target for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTarget {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    /// `sum_i w_i y_i`, the unique minimizer of the sample's loss.
    pub target: f64,
}

/// Reusable buffers for per-sample selection and weighting.
#[derive(Debug, Default, Clone)]
pub struct SampleEvaluator {
    lof: LofWorkspace,
    y_out: Vec<f64>,
    scores: Vec<f64>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SampleEvaluator {
    /// Evaluates a sample whose member outputs are `y_out`, leaving the
    /// selection in `self.indices` and weights in `self.weights`. Returns the
    /// weighted mean target.
    fn weigh(&mut self, y_out: &[f64], config: &OrsaConfig) -> Result<f64> {
        let n = y_out.len();
        config.validate(n)?;
        ensemble::select_into(y_out, config.k_s, config.mode, &mut self.indices)?;
        self.lof.scores_into(y_out, config.k_lof, &mut self.scores);
        self.weights.clear();
        self.weights
            .extend(self.indices.iter().map(|&i| 1.0 / self.scores[i]));
        lof::normalize_in_place(&mut self.weights);
        Ok(self
            .indices
            .iter()
            .zip(&self.weights)
            .map(|(&i, w)| w * y_out[i])
            .sum())
    }

    pub fn evaluate(&mut self, y_out: &[f64], config: &OrsaConfig) -> Result<SampleTarget> {
        let target = self.weigh(y_out, config)?;
        Ok(SampleTarget {
            indices: self.indices.clone(),
            values: self.indices.iter().map(|&i| y_out[i]).collect(),
            weights: self.weights.clone(),
            target,
        })
    }

    pub fn evaluate_members<M: Member>(
        &mut self,
        members: &[M],
        s: &[f64],
        config: &OrsaConfig,
    ) -> Result<SampleTarget> {
        let mut y = core::mem::take(&mut self.y_out);
        let out = ensemble::predict_into(members, s, &mut y).and_then(|_| self.evaluate(&y, config));
        self.y_out = y;
        out
    }
}

/// Weighted mean of the selected outputs with reciprocal-LOF weights.
pub fn oracle_target(y_out: &[f64], config: &OrsaConfig) -> Result<f64> {
    SampleEvaluator::default().weigh(y_out, config)
}

/// Per-sample selections, weights and targets for a pool of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    n_devices: usize,
    k_s: usize,
    targets: Vec<f64>,
    // `k_s` entries per row.
    indices: Vec<u32>,
    values: Vec<f64>,
    weights: Vec<f64>,
}

/// Borrowed view of one [`TargetTable`] row.
#[derive(Debug, Clone, Copy)]
pub struct TargetRow<'a> {
    pub target: f64,
    pub indices: &'a [u32],
    pub values: &'a [f64],
    pub weights: &'a [f64],
}

impl TargetTable {
    pub fn empty(n_devices: usize, k_s: usize) -> Self {
        TargetTable {
            n_devices,
            k_s,
            targets: Vec::new(),
            indices: Vec::new(),
            values: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn build<M: Member>(members: &[M], samples: &[Sample], config: &OrsaConfig) -> Result<Self> {
        config.validate(members.len())?;
        let mut table = TargetTable::empty(members.len(), config.k_s);
        table.reserve(samples.len());
        let mut ev = SampleEvaluator::default();
        let mut y = Vec::with_capacity(members.len());
        for s in samples {
            ensemble::predict_into(members, s, &mut y)?;
            table.push_outputs(&y, config, &mut ev)?;
        }
        Ok(table)
    }

    /// Builds the table from precomputed member outputs, one row of
    /// `n_devices` values per sample.
    pub fn from_outputs(outputs: &[f64], n_devices: usize, config: &OrsaConfig) -> Result<Self> {
        config.validate(n_devices)?;
        if !outputs.len().is_multiple_of(n_devices) {
            return Err(Error::Shape(alloc::format!(
                "{} outputs do not split into rows of {n_devices}",
                outputs.len()
            )));
        }
        let mut table = TargetTable::empty(n_devices, config.k_s);
        table.reserve(outputs.len() / n_devices);
        let mut ev = SampleEvaluator::default();
        for y in outputs.chunks_exact(n_devices) {
            table.push_outputs(y, config, &mut ev)?;
        }
        Ok(table)
    }

    fn reserve(&mut self, rows: usize) {
        self.targets.reserve(rows);
        self.indices.reserve(rows * self.k_s);
        self.values.reserve(rows * self.k_s);
        self.weights.reserve(rows * self.k_s);
    }

    fn push_outputs(&mut self, y: &[f64], config: &OrsaConfig, ev: &mut SampleEvaluator) -> Result<()> {
        let target = ev.weigh(y, config)?;
        self.targets.push(target);
        for (&i, &w) in ev.indices.iter().zip(&ev.weights) {
            self.indices.push(i as u32);
            self.values.push(y[i]);
            self.weights.push(w);
        }
        Ok(())
    }

    /// Concatenates tables built over consecutive chunks of a sample pool.
    pub fn concat(parts: Vec<TargetTable>) -> Result<Self> {
        let mut iter = parts.into_iter();
        let Some(mut out) = iter.next() else {
            return Err(Error::config("no table parts"));
        };
        for p in iter {
            if p.n_devices != out.n_devices || p.k_s != out.k_s {
                return Err(Error::Shape("target table parts disagree".into()));
            }
            out.targets.extend(p.targets);
            out.indices.extend(p.indices);
            out.values.extend(p.values);
            out.weights.extend(p.weights);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_devices(&self) -> usize {
        self.n_devices
    }

    pub fn k_s(&self) -> usize {
        self.k_s
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> TargetRow<'_> {
        let r = i * self.k_s..(i + 1) * self.k_s;
        TargetRow {
            target: self.targets[i],
            indices: &self.indices[r.clone()],
            values: &self.values[r.clone()],
            weights: &self.weights[r],
        }
    }

    /// Weight of every device in row `i`, zero where unselected.
    pub fn weight_column(&self, i: usize) -> Vec<f64> {
        let row = self.row(i);
        let mut col = vec![0.0; self.n_devices];
        for (&d, &w) in row.indices.iter().zip(row.weights) {
            col[d as usize] = w;
        }
        col
    }
}

/// Device x sample weight matrix; zero where a device was not selected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub n_devices: usize,
    pub n_samples: usize,
    /// Row-major, one row per device.
    pub weights: Vec<f64>,
    /// Pool row of each column, when the batch came from a training pool.
    pub rows: Vec<usize>,
}

impl Heatmap {
    fn from_table_rows(table: &TargetTable, rows: &[usize]) -> Self {
        let (n, m) = (table.n_devices, rows.len());
        let mut weights = vec![0.0; n * m];
        for (c, &r) in rows.iter().enumerate() {
            let row = table.row(r);
            for (&d, &w) in row.indices.iter().zip(row.weights) {
                weights[d as usize * m + c] = w;
            }
        }
        Heatmap {
            n_devices: n,
            n_samples: m,
            weights,
            rows: rows.to_vec(),
        }
    }

    pub fn get(&self, device: usize, sample: usize) -> f64 {
        self.weights[device * self.n_samples + sample]
    }

    pub fn device_row(&self, device: usize) -> &[f64] {
        &self.weights[device * self.n_samples..(device + 1) * self.n_samples]
    }

    pub fn column_sum(&self, sample: usize) -> f64 {
        (0..self.n_devices).map(|d| self.get(d, sample)).sum()
    }
}

/// Renormalized reciprocal-LOF weights for every sample of a batch.
pub fn weight_heatmap<M: Member>(members: &[M], batch: &[Sample], config: &OrsaConfig) -> Result<Heatmap> {
    if batch.is_empty() {
        return Err(Error::config("empty batch"));
    }
    let table = TargetTable::build(members, batch, config)?;
    let mut heat = Heatmap::from_table_rows(&table, &(0..batch.len()).collect::<Vec<_>>());
    heat.rows.clear();
    Ok(heat)
}

/// What one optimizer step did, per device.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    /// Mean per-sample loss over the batch, before the update.
    pub loss: f64,
    /// Number of batch samples that selected each device.
    pub selection: Vec<u32>,
    /// Batch-mean of `w_i (y_i - y_pred)^2` per device.
    pub weighted: Vec<f64>,
    /// Batch-mean of `(1/k) (y_i - y_pred)^2` per device.
    pub equal: Vec<f64>,
}

/// Per-step diagnostics for a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub n_devices: usize,
    pub batch_size: usize,
    pub k_s: usize,
    pub loss_trace: Vec<f64>,
    // `n_devices` entries per step.
    selection: Vec<u32>,
    weighted: Vec<f64>,
    equal: Vec<f64>,
    /// Weights of the final step's batch.
    pub heatmap: Option<Heatmap>,
}

impl RunMetrics {
    pub fn new(n_devices: usize, batch_size: usize, k_s: usize) -> Self {
        RunMetrics {
            n_devices,
            batch_size,
            k_s,
            loss_trace: Vec::new(),
            selection: Vec::new(),
            weighted: Vec::new(),
            equal: Vec::new(),
            heatmap: None,
        }
    }

    pub fn steps(&self) -> usize {
        self.loss_trace.len()
    }

    pub fn record(&mut self, step: &StepMetrics) {
        self.loss_trace.push(step.loss);
        self.selection.extend_from_slice(&step.selection);
        self.weighted.extend_from_slice(&step.weighted);
        self.equal.extend_from_slice(&step.equal);
    }

    /// The last `window` steps.
    pub fn last(&self, window: usize) -> Result<Range<usize>> {
        let steps = self.steps();
        if window == 0 || window > steps {
            return Err(Error::ParamOutOfRange {
                name: "window",
                value: window,
                min: 1,
                max: steps,
            });
        }
        Ok(steps - window..steps)
    }

    fn check(&self, window: &Range<usize>) -> Result<()> {
        if window.start > window.end || window.end > self.steps() {
            return Err(Error::ParamOutOfRange {
                name: "window end",
                value: window.end,
                min: window.start,
                max: self.steps(),
            });
        }
        Ok(())
    }

    fn step_rows<'a, T>(&self, data: &'a [T], window: &Range<usize>) -> core::slice::ChunksExact<'a, T> {
        data[window.start * self.n_devices..window.end * self.n_devices].chunks_exact(self.n_devices)
    }
}

/// Per device, how many (sample, step) pairs in `window` selected it.
pub fn selection_frequency(metrics: &RunMetrics, window: Range<usize>) -> Result<Vec<u64>> {
    metrics.check(&window)?;
    let mut counts = vec![0u64; metrics.n_devices];
    for step in metrics.step_rows(&metrics.selection, &window) {
        for (c, &s) in counts.iter_mut().zip(step) {
            *c += u64::from(s);
        }
    }
    Ok(counts)
}

/// Per-device loss contribution summed over a window of steps.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Contribution {
    /// With reciprocal-LOF weights.
    pub weighted: f64,
    /// With equal `1/k` weights.
    pub equal: f64,
}

pub fn loss_contributions(metrics: &RunMetrics, window: Range<usize>) -> Result<Vec<Contribution>> {
    metrics.check(&window)?;
    let mut out = vec![Contribution::default(); metrics.n_devices];
    let weighted = metrics.step_rows(&metrics.weighted, &window);
    let equal = metrics.step_rows(&metrics.equal, &window);
    for (w, e) in weighted.zip(equal) {
        for (c, (&wi, &ei)) in out.iter_mut().zip(w.iter().zip(e)) {
            c.weighted += wi;
            c.equal += ei;
        }
    }
    Ok(out)
}

/// Network, optimizer and bookkeeping for one training run over a
/// precomputed [`TargetTable`].
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: NetParams,
    pub adam: AdamState,
    ws: Workspace,
    grads: Gradients,
}

impl Trainer {
    pub fn new(net: &NetConfig, adam: AdamConfig) -> Result<Self> {
        let params = aggnet::init(net)?;
        Ok(Self::from_params(params, adam))
    }

    pub fn from_params(params: NetParams, adam: AdamConfig) -> Self {
        let adam = AdamState::new(&params, adam);
        let grads = params.zeros_like();
        Trainer {
            params,
            adam,
            ws: Workspace::default(),
            grads,
        }
    }

    /// One update on the pool rows `batch`; `samples[r]` is the input of
    /// table row `r`.
    pub fn step(&mut self, table: &TargetTable, samples: &[Sample], batch: &[usize]) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let n = table.n_devices;
        let inv_batch = 1.0 / batch.len() as f64;
        let inv_k = 1.0 / table.k_s as f64;
        let mut metrics = StepMetrics {
            loss: 0.0,
            selection: vec![0; n],
            weighted: vec![0.0; n],
            equal: vec![0.0; n],
        };
        self.grads.fill_zero();
        for &r in batch {
            let s = samples
                .get(r)
                .ok_or(Error::IndexOutOfBounds { index: r, len: samples.len() })?;
            let row = table.row(r);
            let y_pred = self.params.forward_with(s, &mut self.ws);
            for ((&d, &y), &w) in row.indices.iter().zip(row.values).zip(row.weights) {
                let sq = (y - y_pred) * (y - y_pred);
                let d = d as usize;
                metrics.selection[d] += 1;
                metrics.weighted[d] += w * sq * inv_batch;
                metrics.equal[d] += inv_k * sq * inv_batch;
            }
            metrics.loss += weighted_sq_error(y_pred, row.values, row.weights) * inv_batch;
            let upstream = loss_grad(y_pred, row.values, row.weights) * inv_batch;
            self.params.backward_with(upstream, &mut self.ws, &mut self.grads);
        }
        let step_size = self.adam.config.step_size;
        aggnet::adam_update(&mut self.params, &self.grads, &mut self.adam, step_size)?;
        Ok(metrics)
    }

    pub fn predict(&mut self, s: &[f64]) -> Result<f64> {
        if s.len() != self.params.input_dim() {
            return Err(Error::LengthMismatch {
                expected: self.params.input_dim(),
                actual: s.len(),
            });
        }
        Ok(self.params.forward_with(s, &mut self.ws))
    }
}

/// A single step on a batch of raw samples: members are evaluated, selected
/// and weighted on the fly.
pub fn train_step<M: Member>(
    trainer: &mut Trainer,
    members: &[M],
    batch: &[Sample],
    config: &OrsaConfig,
) -> Result<StepMetrics> {
    let table = TargetTable::build(members, batch, config)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    trainer.step(&table, batch, &rows)
}

/// Trained parameters and diagnostics.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: NetParams,
    pub metrics: RunMetrics,
}

/// Trains on a pool of samples against a precomputed table. Batches are
/// drawn uniformly with replacement from the whole pool.
pub fn train_on_table(
    table: &TargetTable,
    samples: &[Sample],
    config: &OrsaConfig,
    net: &NetConfig,
) -> Result<TrainOutput> {
    config.validate(table.n_devices)?;
    if table.len() != samples.len() || samples.is_empty() {
        return Err(Error::LengthMismatch {
            expected: table.len(),
            actual: samples.len(),
        });
    }
    if net.input_dim != samples[0].dim() {
        return Err(Error::LengthMismatch {
            expected: net.input_dim,
            actual: samples[0].dim(),
        });
    }
    let mut trainer = Trainer::new(net, config.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut metrics = RunMetrics::new(table.n_devices, config.batch_size, table.k_s);
    let mut batch = vec![0usize; config.batch_size];
    for _ in 0..config.steps {
        for b in &mut batch {
            *b = rng.random_range(0..samples.len());
        }
        let step = trainer.step(table, samples, &batch)?;
        metrics.record(&step);
    }
    metrics.heatmap = Some(Heatmap::from_table_rows(table, &batch));
    Ok(TrainOutput {
        params: trainer.params,
        metrics,
    })
}

/// Builds the target table for `samples` and trains on it.
pub fn train<M: Member>(
    members: &[M],
    samples: &[Sample],
    config: &OrsaConfig,
    net: &NetConfig,
) -> Result<TrainOutput> {
    config.validate(members.len())?;
    let table = TargetTable::build(members, samples, config)?;
    train_on_table(&table, samples, config, net)
}

/// Root mean squared difference.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(math::sqrt(sum / a.len() as f64))
}

/// Network predictions for a set of samples.
pub fn predict_all(params: &NetParams, samples: &[Sample]) -> Result<Vec<f64>> {
    let mut ws = Workspace::default();
    samples
        .iter()
        .map(|s| {
            if s.dim() != params.input_dim() {
                return Err(Error::LengthMismatch {
                    expected: params.input_dim(),
                    actual: s.dim(),
                });
            }
            Ok(params.forward_with(s, &mut ws))
        })
        .collect()
}
