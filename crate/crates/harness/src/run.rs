//! The `train` command: target precomputation, training, and the run's
//! artifacts.
//!
//! A run directory holds:
//!
//! - `checkpoint.json`: network config and parameters.
//! - `summary.csv`: `device,label,selection_count,weighted_loss,equal_loss`
//!   over the metric window (the last `metric_window` steps). The loss
//!   columns sum per-step batch means of `w_i (y_i - y_pred)^2` and
//!   `(1/k_s) (y_i - y_pred)^2`.
//! - `heatmap.csv`: `device` then one `sample_<j>` column per sample of the
//!   final training batch; entries are LOF weights, zero when unselected.
//! - `loss_trace.csv`: `step,loss`, the batch-mean loss before each update.
//! - `run.json`: the [`RunManifest`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use orsa_core::aggnet::{NetConfig, NetParams};
use orsa_core::ensemble::Member;
use orsa_core::preprocess::Sample;
use orsa_core::synthgen::SynthConfig;
use orsa_core::trainer::{self, loss_contributions, selection_frequency, OrsaConfig, TargetTable, TrainOutput};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::files::{self, CsvBuf};

pub const CHECKPOINT: &str = "checkpoint.json";
pub const SUMMARY: &str = "summary.csv";
pub const HEATMAP: &str = "heatmap.csv";
pub const LOSS_TRACE: &str = "loss_trace.csv";
pub const RUN_MANIFEST: &str = "run.json";

const FORMAT_VERSION: u32 = 1;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub net: NetConfig,
    pub params: NetParams,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = files::read_json(path)?;
        c.params.validate()?;
        if c.params.input_dim() != c.net.input_dim {
            return Err(Error::parse(path, "parameters do not match the network config"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub dir: PathBuf,
    pub checksum: String,
    pub n_devices: usize,
    pub device_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub dataset: DatasetRef,
    /// Fully resolved; `orsa train --config run.json` replays it.
    pub config: TrainConfig,
    pub orsa: OrsaConfig,
    pub net: NetConfig,
    /// Steps `[start, end)` summarized in `summary.csv`.
    pub metric_window: (usize, usize),
    /// Pool rows of the heatmap columns.
    pub heatmap_rows: Vec<usize>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: RunManifest = files::read_json(path)?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::parse(path, format!("unsupported format_version {}", m.format_version)));
        }
        Ok(m)
    }
}

/// Member outputs for every sample, row-major (`samples x members`).
pub fn member_outputs<M: Member + Sync>(members: &[M], samples: &[Sample]) -> Result<Vec<f64>> {
    let parts = samples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out = Vec::with_capacity(chunk.len() * members.len());
            for s in chunk {
                out.extend(orsa_core::ensemble::predict_ensemble(members, s)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.concat())
}

/// [`TargetTable::from_outputs`], split across threads; identical to the
/// sequential build.
pub fn targets_from_outputs(outputs: &[f64], n_devices: usize, config: &OrsaConfig) -> Result<TargetTable> {
    config.validate(n_devices)?;
    if outputs.is_empty() {
        return Ok(TargetTable::empty(n_devices, config.k_s));
    }
    let parts = outputs
        .par_chunks(CHUNK * n_devices)
        .map(|chunk| TargetTable::from_outputs(chunk, n_devices, config))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(TargetTable::concat(parts)?)
}

pub fn build_targets<M: Member + Sync>(members: &[M], samples: &[Sample], config: &OrsaConfig) -> Result<TargetTable> {
    config.validate(members.len())?;
    targets_from_outputs(&member_outputs(members, samples)?, members.len(), config)
}

/// Resolves the configs against a dataset; rejects mismatches before any
/// training happens.
pub fn resolve(dataset: &Dataset, config: &TrainConfig) -> Result<(OrsaConfig, NetConfig)> {
    let orsa = config.orsa();
    orsa.validate(dataset.n_devices())
        .map_err(|e| Error::invalid(format!("{e} (dataset has {} devices)", dataset.n_devices())))?;
    let net = config.net(dataset.input_dim())?;
    Ok((orsa, net))
}

/// Trains on a precomputed table and writes every artifact into `out`.
pub fn write_run(
    out: &Path,
    dataset: &Dataset,
    samples: &[Sample],
    table: &TargetTable,
    orsa: &OrsaConfig,
    net: &NetConfig,
    started: Instant,
) -> Result<(TrainOutput, RunManifest)> {
    let trained = trainer::train_on_table(table, samples, orsa, net)?;
    files::create_dir(out)?;
    let mut artifacts = BTreeMap::new();
    let mut record = |name: &str, sha: String| {
        artifacts.insert(
            name.to_owned(),
            Artifact {
                file: name.to_owned(),
                sha256: sha,
            },
        );
    };

    let checkpoint = Checkpoint {
        format_version: FORMAT_VERSION,
        net: net.clone(),
        params: trained.params.clone(),
    };
    files::write_json(&out.join(CHECKPOINT), &checkpoint)?;
    record(CHECKPOINT, files::sha256_file(&out.join(CHECKPOINT))?);

    let metrics = &trained.metrics;
    let window = metrics.last(orsa.metric_window.min(metrics.steps()))?;
    let counts = selection_frequency(metrics, window.clone())?;
    let contributions = loss_contributions(metrics, window.clone())?;
    let mut summary = CsvBuf::new(["device", "label", "selection_count", "weighted_loss", "equal_loss"]);
    for (i, t) in dataset.tables.iter().enumerate() {
        let label = dataset.label(i).map_or("", |l| l.as_str());
        summary.row([
            t.device_id.clone(),
            label.to_owned(),
            counts[i].to_string(),
            contributions[i].weighted.to_string(),
            contributions[i].equal.to_string(),
        ]);
    }
    record(SUMMARY, summary.save(&out.join(SUMMARY))?);

    let heat = metrics.heatmap.as_ref().expect("training records the final batch");
    let mut header = vec!["device".to_owned()];
    header.extend((0..heat.n_samples).map(|j| format!("sample_{j}")));
    let mut heatmap = CsvBuf::new(&header);
    for (i, t) in dataset.tables.iter().enumerate() {
        heatmap.row(std::iter::once(t.device_id.clone()).chain(heat.device_row(i).iter().map(f64::to_string)));
    }
    record(HEATMAP, heatmap.save(&out.join(HEATMAP))?);

    let mut trace = CsvBuf::new(["step", "loss"]);
    for (step, loss) in metrics.loss_trace.iter().enumerate() {
        trace.row([step.to_string(), loss.to_string()]);
    }
    record(LOSS_TRACE, trace.save(&out.join(LOSS_TRACE))?);

    let manifest = RunManifest {
        format_version: FORMAT_VERSION,
        dataset: DatasetRef {
            dir: dataset.dir.clone(),
            checksum: dataset.checksum.clone(),
            n_devices: dataset.n_devices(),
            device_ids: dataset.tables.iter().map(|t| t.device_id.clone()).collect(),
            synth: dataset.manifest.synth.clone(),
        },
        config: TrainConfig::resolved(orsa, net),
        orsa: orsa.clone(),
        net: net.clone(),
        metric_window: (window.start, window.end),
        heatmap_rows: heat.rows.clone(),
        artifacts,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    files::write_json(&out.join(RUN_MANIFEST), &manifest)?;
    Ok((trained, manifest))
}

/// `orsa train`: load, precompute targets, train, write artifacts. With
/// `expect_checksum` (a replayed run) the dataset must match it.
pub fn train(dataset_dir: &Path, config: &TrainConfig, expect_checksum: Option<&str>, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let dataset = Dataset::load(dataset_dir)?;
    if let Some(expected) = expect_checksum {
        if expected != dataset.checksum {
            return Err(Error::Checksum {
                path: dataset_dir.to_path_buf(),
                expected: expected.to_owned(),
                actual: dataset.checksum,
            });
        }
    }
    let (orsa, net) = resolve(&dataset, config)?;
    let members = dataset.members()?;
    let samples = dataset.pooled_samples();
    let table = build_targets(&members, &samples, &orsa)?;
    let (_, manifest) = write_run(out, &dataset, &samples, &table, &orsa, &net, started)?;
    Ok(manifest)
}

/// A train config from either a TOML document or a previous run's
/// `run.json`; the latter also pins the dataset checksum.
pub fn load_train_config(path: &Path) -> Result<(TrainConfig, Option<String>)> {
    if path.extension().is_some_and(|e| e == "json") {
        let m = RunManifest::load(path)?;
        Ok((m.config, Some(m.dataset.checksum)))
    } else {
        Ok((TrainConfig::load(path)?, None))
    }
}
