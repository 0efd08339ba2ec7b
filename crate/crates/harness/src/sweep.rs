//! The `sweep` command: one training run per `(k_s, k_lof)` grid point.
//!
//! Output directory:
//!
//! - `sweep.csv`: `k_s,k_lof,mode,rmse_min,rmse_mean,rmse_oracle,between_fraction,final_loss`.
//!   RMSEs compare the trained net against the per-sample hard extreme
//!   (minimum for soft-min, maximum for soft-max), the plain member mean
//!   and the closed-form weighted target, over `eval_probes` uniform probe
//!   samples. `between_fraction` is the share of those probes whose
//!   prediction lies between the hard extreme and the mean.
//! - `ks<k_s>_klof<k_lof>/`: a full run directory plus `probes.csv` with
//!   `s0..,prediction,hard,mean,oracle` for the first `probes` samples.
//! - `sweep.json`: grid, probe seed and per-point run manifests.

use std::path::{Path, PathBuf};
use std::time::Instant;

use orsa_core::ensemble::Mode;
use orsa_core::preprocess::Sample;
use orsa_core::synthgen::uniform_samples;
use orsa_core::trainer::{self, OrsaConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_grid, Overrides, SweepConfig};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::files::{self, CsvBuf};
use crate::run::{self, RunManifest};

pub const SWEEP_TABLE: &str = "sweep.csv";
pub const SWEEP_MANIFEST: &str = "sweep.json";
pub const PROBES: &str = "probes.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k_s: usize,
    pub k_lof: usize,
    pub mode: Mode,
    pub rmse_min: f64,
    pub rmse_mean: f64,
    pub rmse_oracle: f64,
    pub between_fraction: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub format_version: u32,
    pub grid: Vec<(usize, usize)>,
    /// Seed of the ChaCha8 stream the probe samples are drawn from.
    pub probe_seed: u64,
    pub probes: usize,
    pub eval_probes: usize,
    pub rows: Vec<SweepRow>,
    pub runs: Vec<RunManifest>,
}

/// Member-derived reference values at the probe samples.
struct ProbeRefs {
    samples: Vec<Sample>,
    outputs: Vec<f64>,
    n: usize,
}

impl ProbeRefs {
    fn hard(&self, i: usize, mode: Mode) -> f64 {
        let row = &self.outputs[i * self.n..(i + 1) * self.n];
        match mode {
            Mode::SoftMin => row.iter().copied().fold(f64::INFINITY, f64::min),
            Mode::SoftMax => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.outputs[i * self.n..(i + 1) * self.n].iter().sum::<f64>() / self.n as f64
    }
}

pub fn sweep(dataset_dir: &Path, config: &SweepConfig, overrides: &Overrides, out: &Path) -> Result<SweepManifest> {
    let dataset = Dataset::load(dataset_dir)?;
    let grid = config.points();
    check_grid(&grid, dataset.n_devices())?;
    let mut base = config.base();
    base.apply(&Overrides {
        k_s: None,
        k_lof: None,
        ..*overrides
    });
    let points: Vec<_> = grid
        .iter()
        .map(|&(k_s, k_lof)| {
            let mut c = base.clone();
            c.orsa.k_s = Some(k_s);
            c.orsa.k_lof = Some(k_lof);
            run::resolve(&dataset, &c)
        })
        .collect::<Result<_>>()?;

    let members = dataset.members()?;
    let samples = dataset.pooled_samples();
    let outputs = run::member_outputs(&members, &samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.probe_seed);
    let n_probe = config.eval_probes.max(config.probes);
    let probe_samples = uniform_samples(&mut rng, n_probe, dataset.input_dim());
    let probes = ProbeRefs {
        outputs: run::member_outputs(&members, &probe_samples)?,
        samples: probe_samples,
        n: members.len(),
    };
    files::create_dir(out)?;

    let results = points
        .par_iter()
        .map(|(orsa, net)| {
            let started = Instant::now();
            let dir = out.join(point_dir(orsa));
            let table = run::targets_from_outputs(&outputs, members.len(), orsa)?;
            let (trained, manifest) = run::write_run(&dir, &dataset, &samples, &table, orsa, net, started)?;
            let row = evaluate_point(&dir, orsa, &trained.params, &probes, config)?;
            let row = SweepRow {
                final_loss: *trained.metrics.loss_trace.last().expect("steps >= 1"),
                ..row
            };
            Ok((row, manifest))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = CsvBuf::new([
        "k_s",
        "k_lof",
        "mode",
        "rmse_min",
        "rmse_mean",
        "rmse_oracle",
        "between_fraction",
        "final_loss",
    ]);
    for (r, _) in &results {
        table.row([
            r.k_s.to_string(),
            r.k_lof.to_string(),
            r.mode.as_str().to_owned(),
            r.rmse_min.to_string(),
            r.rmse_mean.to_string(),
            r.rmse_oracle.to_string(),
            r.between_fraction.to_string(),
            r.final_loss.to_string(),
        ]);
    }
    table.save(&out.join(SWEEP_TABLE))?;
    let (rows, runs) = results.into_iter().unzip();
    let manifest = SweepManifest {
        format_version: 1,
        grid,
        probe_seed: config.probe_seed,
        probes: config.probes,
        eval_probes: config.eval_probes,
        rows,
        runs,
    };
    files::write_json(&out.join(SWEEP_MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn point_dir(orsa: &OrsaConfig) -> PathBuf {
    PathBuf::from(format!("ks{}_klof{}", orsa.k_s, orsa.k_lof))
}

fn evaluate_point(
    dir: &Path,
    orsa: &OrsaConfig,
    params: &orsa_core::aggnet::NetParams,
    probes: &ProbeRefs,
    config: &SweepConfig,
) -> Result<SweepRow> {
    let pred = trainer::predict_all(params, &probes.samples)?;
    let n = probes.samples.len();
    let hard: Vec<f64> = (0..n).map(|i| probes.hard(i, orsa.mode)).collect();
    let mean: Vec<f64> = (0..n).map(|i| probes.mean(i)).collect();
    let oracle = probes
        .outputs
        .chunks_exact(probes.n)
        .map(|y| trainer::oracle_target(y, orsa))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut header: Vec<String> = (0..probes.samples[0].dim()).map(|d| format!("s{d}")).collect();
    header.extend(["prediction", "hard", "mean", "oracle"].map(String::from));
    let mut dump = CsvBuf::new(&header);
    for i in 0..config.probes {
        let values = [pred[i], hard[i], mean[i], oracle[i]];
        dump.row(probes.samples[i].iter().chain(&values).map(f64::to_string));
    }
    dump.save(&dir.join(PROBES))?;

    let eval = config.eval_probes.max(1).min(n);
    let between = (0..eval)
        .filter(|&i| {
            let (lo, hi) = if hard[i] <= mean[i] { (hard[i], mean[i]) } else { (mean[i], hard[i]) };
            (lo..=hi).contains(&pred[i])
        })
        .count();
    Ok(SweepRow {
        k_s: orsa.k_s,
        k_lof: orsa.k_lof,
        mode: orsa.mode,
        rmse_min: trainer::rmse(&pred[..eval], &hard[..eval])?,
        rmse_mean: trainer::rmse(&pred[..eval], &mean[..eval])?,
        rmse_oracle: trainer::rmse(&pred[..eval], &oracle[..eval])?,
        between_fraction: between as f64 / eval as f64,
        final_loss: f64::NAN,
    })
}
