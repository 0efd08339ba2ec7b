//! The `report` command: merges a run's CSV artifacts into `report.json`.
//!
//! The report is a pure function of the run directory's files (the wall
//! clock in `run.json` is left out), so regenerating it is idempotent.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files;
use crate::run::{RunManifest, HEATMAP, LOSS_TRACE, RUN_MANIFEST, SUMMARY};

pub const REPORT: &str = "report.json";
/// Steps per point of the smoothed loss trace.
pub const TRACE_SMOOTHING: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRow {
    pub device: String,
    pub label: String,
    pub selection_count: u64,
    /// `selection_count / (window_steps * batch_size)`.
    pub selection_frequency: f64,
    pub weighted_loss: f64,
    pub equal_loss: f64,
    /// `equal_loss / weighted_loss`; null when the device was never selected.
    pub equal_over_weighted: Option<f64>,
    /// Mean of the device's heatmap row.
    pub mean_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub devices: Vec<String>,
    pub columns: Vec<String>,
    /// One row per device.
    pub weights: Vec<Vec<f64>>,
    pub column_sums: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceTable {
    pub steps: usize,
    pub smoothing: usize,
    /// First step of each smoothing window.
    pub window_start: Vec<usize>,
    pub mean_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub dataset_checksum: String,
    pub k_s: usize,
    pub k_lof: usize,
    pub mode: String,
    pub steps: usize,
    pub batch_size: usize,
    pub metric_window: (usize, usize),
    pub devices: Vec<DeviceRow>,
    pub heatmap: HeatmapTable,
    pub loss_trace: TraceTable,
}

/// Builds the report for `run_dir` and writes it to `out` (default
/// `<run_dir>/report.json`).
pub fn report(run_dir: &Path, out: Option<&Path>) -> Result<(Report, PathBuf)> {
    let missing: Vec<String> = [RUN_MANIFEST, SUMMARY, HEATMAP, LOSS_TRACE]
        .into_iter()
        .filter(|f| !run_dir.join(f).is_file())
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Incomplete {
            dir: run_dir.to_path_buf(),
            missing,
        });
    }
    let manifest = RunManifest::load(&run_dir.join(RUN_MANIFEST))?;
    for a in manifest.artifacts.values() {
        let path = run_dir.join(&a.file);
        let actual = files::sha256_file(&path)?;
        if actual != a.sha256 {
            return Err(Error::Checksum {
                path,
                expected: a.sha256.clone(),
                actual,
            });
        }
    }
    let heatmap = read_heatmap(&run_dir.join(HEATMAP))?;
    let (win_start, win_end) = manifest.metric_window;
    let pairs = ((win_end - win_start) * manifest.orsa.batch_size) as f64;
    let summary_path = run_dir.join(SUMMARY);
    let (header, rows) = files::read_csv(&summary_path)?;
    expect_header(&summary_path, &header, &["device", "label", "selection_count", "weighted_loss", "equal_loss"])?;
    let mut devices = Vec::with_capacity(rows.len());
    for (line, rec) in &rows {
        let count: u64 = rec[2].parse().map_err(|_| Error::Record {
            path: summary_path.clone(),
            line: *line,
            msg: format!("malformed count {:?}", &rec[2]),
        })?;
        let weighted = files::parse_f64(&summary_path, *line, &rec[3])?;
        let equal = files::parse_f64(&summary_path, *line, &rec[4])?;
        let i = devices.len();
        let row = heatmap.weights.get(i).ok_or_else(|| {
            Error::invalid(format!("{} has fewer device rows than {SUMMARY}", HEATMAP))
        })?;
        devices.push(DeviceRow {
            device: rec[0].to_owned(),
            label: rec[1].to_owned(),
            selection_count: count,
            selection_frequency: count as f64 / pairs,
            weighted_loss: weighted,
            equal_loss: equal,
            equal_over_weighted: (weighted > 0.0).then(|| equal / weighted),
            mean_weight: row.iter().sum::<f64>() / row.len().max(1) as f64,
        });
    }
    if devices.len() != heatmap.devices.len() {
        return Err(Error::invalid(format!("{SUMMARY} and {HEATMAP} list different devices")));
    }
    let report = Report {
        format_version: 1,
        dataset_checksum: manifest.dataset.checksum.clone(),
        k_s: manifest.orsa.k_s,
        k_lof: manifest.orsa.k_lof,
        mode: manifest.orsa.mode.as_str().to_owned(),
        steps: manifest.orsa.steps,
        batch_size: manifest.orsa.batch_size,
        metric_window: manifest.metric_window,
        devices,
        heatmap,
        loss_trace: read_trace(&run_dir.join(LOSS_TRACE))?,
    };
    let path = out.map_or_else(|| run_dir.join(REPORT), Path::to_path_buf);
    files::write_json(&path, &report)?;
    Ok((report, path))
}

fn expect_header(path: &Path, header: &[String], expected: &[&str]) -> Result<()> {
    if header.iter().map(String::as_str).ne(expected.iter().copied()) {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected columns {expected:?}, found {header:?}"),
        });
    }
    Ok(())
}

fn read_heatmap(path: &Path) -> Result<HeatmapTable> {
    let (header, rows) = files::read_csv(path)?;
    if header.first().map(String::as_str) != Some("device") {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: 1,
            msg: "first column must be `device`".into(),
        });
    }
    let columns: Vec<String> = header[1..].to_vec();
    let mut devices = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in &rows {
        devices.push(rec[0].to_owned());
        weights.push(
            rec.iter()
                .skip(1)
                .map(|f| files::parse_f64(path, *line, f))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let column_sums = (0..columns.len()).map(|j| weights.iter().map(|r| r[j]).sum()).collect();
    Ok(HeatmapTable {
        devices,
        columns,
        weights,
        column_sums,
    })
}

fn read_trace(path: &Path) -> Result<TraceTable> {
    let (header, rows) = files::read_csv(path)?;
    expect_header(path, &header, &["step", "loss"])?;
    let losses = rows
        .iter()
        .map(|(line, rec)| files::parse_f64(path, *line, &rec[1]))
        .collect::<Result<Vec<_>>>()?;
    let chunks = losses.chunks(TRACE_SMOOTHING);
    Ok(TraceTable {
        steps: losses.len(),
        smoothing: TRACE_SMOOTHING,
        window_start: (0..chunks.len()).map(|i| i * TRACE_SMOOTHING).collect(),
        mean_loss: chunks.map(|c| c.iter().sum::<f64>() / c.len() as f64).collect(),
    })
}
