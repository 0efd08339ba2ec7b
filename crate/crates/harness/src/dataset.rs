//! Dataset directories: one CSV per device plus `manifest.json`.
//!
//! Device CSVs carry one column per feature (named as in the manifest
//! schema, raw units) followed by `y_out`. Generated datasets also record
//! the synthetic config, so their ensemble members can be rebuilt exactly;
//! external datasets get one nearest-neighbour table member per device.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use orsa_core::ensemble::{Member, TableMember};
use orsa_core::preprocess::{self, FeatureKind, FeatureRole, FeatureSpec, FeatureValue, Sample};
use orsa_core::synthgen::{self, DeviceLabel, DeviceTable, OffsetArea, SynthConfig, SyntheticDataset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::{self, CsvBuf};

pub const MANIFEST: &str = "manifest.json";
pub const OUTPUT_COLUMN: &str = "y_out";
const FORMAT_VERSION: u32 = 1;

/// An ensemble member behind a trait object, shareable across threads.
pub type DynMember = Box<dyn Member + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceEntry {
    pub device_id: String,
    /// Relative to the dataset directory.
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<DeviceLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<OffsetArea>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub features: Vec<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    pub devices: Vec<DeviceEntry>,
}

impl DatasetManifest {
    fn validate(&self, path: &Path) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        if self.devices.len() < 2 {
            return Err(Error::parse(path, "a dataset needs at least two devices"));
        }
        let mut names = BTreeSet::new();
        for f in &self.features {
            f.validate()?;
            if f.name == OUTPUT_COLUMN || !names.insert(f.name.as_str()) {
                return Err(Error::parse(path, format!("duplicate or reserved feature name {:?}", f.name)));
            }
        }
        if preprocess::input_dim(&self.features) == 0 {
            return Err(Error::parse(path, "schema has no input features"));
        }
        let mut ids = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(d.device_id.as_str()) {
                return Err(Error::parse(path, format!("duplicate device id {:?}", d.device_id)));
            }
        }
        if let Some(cfg) = &self.synth {
            cfg.validate()?;
            if cfg.n_devices != self.devices.len() || cfg.input_dim != preprocess::input_dim(&self.features) {
                return Err(Error::parse(path, "synthetic config disagrees with devices or schema"));
            }
        }
        Ok(())
    }
}

/// Schema of the synthetic inputs: already normalized reals named `s0..`.
pub fn synthetic_features(dim: usize) -> Vec<FeatureSpec> {
    (0..dim).map(|i| FeatureSpec::real(format!("s{i}"), -1.0, 1.0)).collect()
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Writes a generated dataset; returns its manifest.
pub fn write_synthetic(dir: &Path, ds: &SyntheticDataset) -> Result<DatasetManifest> {
    files::create_dir(dir)?;
    let features = synthetic_features(ds.config.input_dim);
    let mut header: Vec<String> = features.iter().map(|f| f.name.clone()).collect();
    header.push(OUTPUT_COLUMN.into());
    let mut devices = Vec::with_capacity(ds.tables.len());
    for (dev, table) in ds.devices.iter().zip(&ds.tables) {
        let mut csv = CsvBuf::new(&header);
        for (s, y) in table.samples.iter().zip(&table.outputs) {
            csv.row(s.iter().copied().chain([*y]).map(fmt));
        }
        let file = format!("{}.csv", table.device_id);
        let sha = csv.save(&dir.join(&file))?;
        devices.push(DeviceEntry {
            device_id: table.device_id.clone(),
            file,
            rows: Some(table.len()),
            label: Some(dev.label),
            area: dev.area.clone(),
            sha256: Some(sha),
        });
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        features,
        synth: Some(ds.config.clone()),
        devices,
    };
    files::write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

/// A dataset read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub tables: Vec<DeviceTable>,
    /// Digest over every device file's checksum, in device order.
    pub checksum: String,
    /// Input values that fell outside the declared bounds and were clamped.
    pub clamped: usize,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let manifest: DatasetManifest = files::read_json(&manifest_path)?;
        manifest.validate(&manifest_path)?;
        let mut tables = Vec::with_capacity(manifest.devices.len());
        let mut digest = String::new();
        let mut clamped = 0;
        for entry in &manifest.devices {
            let path = dir.join(&entry.file);
            let sha = files::sha256_file(&path)?;
            if let Some(expected) = &entry.sha256 {
                if *expected != sha {
                    return Err(Error::Checksum {
                        path,
                        expected: expected.clone(),
                        actual: sha,
                    });
                }
            }
            let (table, c) = read_device(&path, entry, &manifest.features)?;
            clamped += c;
            digest.push_str(&entry.device_id);
            digest.push(' ');
            digest.push_str(&sha);
            digest.push('\n');
            tables.push(table);
        }
        Ok(Dataset {
            dir: dir.to_path_buf(),
            checksum: files::sha256_hex(digest.as_bytes()),
            manifest,
            tables,
            clamped,
        })
    }

    pub fn n_devices(&self) -> usize {
        self.tables.len()
    }

    pub fn input_dim(&self) -> usize {
        preprocess::input_dim(&self.manifest.features)
    }

    /// All devices' samples, in device order.
    pub fn pooled_samples(&self) -> Vec<Sample> {
        self.tables.iter().flat_map(|t| t.samples.iter().cloned()).collect()
    }

    /// Ensemble members: the exact synthetic models when the dataset was
    /// generated, otherwise nearest-neighbour lookups into each table.
    pub fn members(&self) -> Result<Vec<DynMember>> {
        if let Some(cfg) = &self.manifest.synth {
            let devices = synthgen::draw_devices(cfg)?;
            for (d, entry) in devices.iter().zip(&self.manifest.devices) {
                if entry.label.is_some_and(|l| l != d.label) || entry.device_id != d.device_id() {
                    return Err(Error::invalid(format!(
                        "device {}: manifest does not match its synthetic config",
                        entry.device_id
                    )));
                }
            }
            return Ok(synthgen::synthetic_members(cfg, &devices)
                .into_iter()
                .map(|m| Box::new(m) as DynMember)
                .collect());
        }
        self.tables
            .iter()
            .map(|t| Ok(Box::new(TableMember::new(t.device_id.clone(), &t.samples, &t.outputs)?) as DynMember))
            .collect()
    }

    pub fn label(&self, device: usize) -> Option<DeviceLabel> {
        self.manifest.devices[device].label
    }
}

fn read_device(path: &Path, entry: &DeviceEntry, features: &[FeatureSpec]) -> Result<(DeviceTable, usize)> {
    let (header, rows) = files::read_csv(path)?;
    let expected: Vec<&str> = features
        .iter()
        .map(|f| f.name.as_str())
        .chain([OUTPUT_COLUMN])
        .collect();
    if header != expected {
        return Err(Error::Record {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("header {header:?} does not match schema {expected:?}"),
        });
    }
    let mut samples = Vec::with_capacity(rows.len());
    let mut outputs = Vec::with_capacity(rows.len());
    let mut clamped = 0;
    let mut raw = Vec::with_capacity(features.len());
    for (line, rec) in &rows {
        raw.clear();
        for (field, spec) in rec.iter().zip(features) {
            raw.push(match (&spec.kind, spec.role) {
                (FeatureKind::Real { .. }, FeatureRole::Input) => {
                    FeatureValue::Real(files::parse_f64(path, *line, field)?)
                }
                _ => FeatureValue::Category(field.to_owned()),
            });
        }
        let n = preprocess::normalize_sample(&raw, features).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: *line,
            msg: e.to_string(),
        })?;
        let y = files::parse_f64(path, *line, &rec[features.len()])?;
        if !y.is_finite() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("non-finite output {y}"),
            });
        }
        clamped += n.clamped;
        samples.push(n.sample);
        outputs.push(y);
    }
    if samples.is_empty() {
        return Err(Error::parse(path, "device table has no rows"));
    }
    if entry.rows.is_some_and(|r| r != samples.len()) {
        return Err(Error::parse(
            path,
            format!("{} rows, manifest says {}", samples.len(), entry.rows.unwrap_or(0)),
        ));
    }
    let table = DeviceTable::new(entry.device_id.clone(), samples, outputs, entry.label)?;
    Ok((table, clamped))
}
