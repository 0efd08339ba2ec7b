//! TOML config documents for the `generate`, `train` and `sweep` commands.
//!
//! Every field except the outlier assignment has a default, and the defaults
//! reproduce the 30-device artificial experiment.

use std::collections::BTreeMap;
use std::path::Path;

use orsa_core::aggnet::{AdamConfig, NetConfig};
use orsa_core::ensemble::Mode;
use orsa_core::synthgen::{self, BaseFunction, DeviceLabel, SynthConfig};
use orsa_core::trainer::OrsaConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files;

/// How outlier labels are assigned to devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outliers {
    /// `"one_per_type"` (four random devices, drawn from the seed) or `"none"`.
    Preset(String),
    /// Device index or id to label; unlisted devices are regular.
    Explicit(BTreeMap<String, DeviceLabel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::n_devices")]
    pub n_devices: usize,
    #[serde(default = "defaults::samples_per_device")]
    pub samples_per_device: usize,
    #[serde(default = "defaults::input_dim")]
    pub input_dim: usize,
    pub outliers: Outliers,
    pub noise_sigma: Option<f64>,
    pub p1: Option<f64>,
    pub scale_range: Option<(f64, f64)>,
    pub constant_offset: Option<f64>,
    pub outlier_noise: Option<bool>,
    pub area_width: Option<(f64, f64)>,
    pub member_error: Option<f64>,
    pub base: Option<BaseFunction>,
}

mod defaults {
    pub fn n_devices() -> usize {
        30
    }
    pub fn samples_per_device() -> usize {
        10_000
    }
    pub fn input_dim() -> usize {
        2
    }
}

impl GenerateConfig {
    pub fn load(path: &Path) -> Result<Self> {
        files::read_toml(path)
    }

    /// The stock artificial experiment.
    pub fn reference(seed: u64) -> Self {
        GenerateConfig {
            seed,
            n_devices: defaults::n_devices(),
            samples_per_device: defaults::samples_per_device(),
            input_dim: defaults::input_dim(),
            outliers: Outliers::Preset("one_per_type".into()),
            noise_sigma: None,
            p1: None,
            scale_range: None,
            constant_offset: None,
            outlier_noise: None,
            area_width: None,
            member_error: None,
            base: None,
        }
    }

    pub fn to_synth(&self) -> Result<SynthConfig> {
        let (n, m, d) = (self.n_devices, self.samples_per_device, self.input_dim);
        let mut cfg = match &self.outliers {
            Outliers::Preset(p) if p == "one_per_type" => SynthConfig::one_outlier_per_type(n, m, d, self.seed)?,
            Outliers::Preset(p) if p == "none" => SynthConfig::regular(n, m, d, self.seed),
            Outliers::Preset(p) => {
                return Err(Error::invalid(format!(
                    "outliers: unknown preset {p:?} (expected \"one_per_type\", \"none\" or a table)"
                )))
            }
            Outliers::Explicit(map) => {
                let mut cfg = SynthConfig::regular(n, m, d, self.seed);
                for (key, label) in map {
                    let index = device_index(key, n)?;
                    cfg.assignment[index] = *label;
                }
                cfg
            }
        };
        if let Some(v) = self.noise_sigma {
            cfg.noise_sigma = v;
        }
        if let Some(v) = self.p1 {
            cfg.p1 = v;
        }
        if let Some(v) = self.scale_range {
            cfg.scale_range = v;
        }
        if let Some(v) = self.constant_offset {
            cfg.constant_offset = v;
        }
        if let Some(v) = self.outlier_noise {
            cfg.outlier_noise = v;
        }
        if let Some(v) = self.area_width {
            cfg.area_width = v;
        }
        if let Some(v) = self.member_error {
            cfg.member_error = v;
        }
        if let Some(b) = &self.base {
            cfg.base = b.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn device_index(key: &str, n_devices: usize) -> Result<usize> {
    let index = key
        .parse::<usize>()
        .ok()
        .or_else(|| (0..n_devices).find(|&i| synthgen::device_id(i) == key));
    match index {
        Some(i) if i < n_devices => Ok(i),
        _ => Err(Error::invalid(format!("outliers: no device {key:?} among {n_devices}"))),
    }
}

/// Optional overrides of [`OrsaConfig`]; unset fields take the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrsaSection {
    pub k_s: Option<usize>,
    pub k_lof: Option<usize>,
    pub mode: Option<Mode>,
    pub batch_size: Option<usize>,
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub metric_window: Option<usize>,
    pub adam: Option<AdamConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSection {
    /// Checked against the dataset when given.
    pub input_dim: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub init_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub orsa: OrsaSection,
    #[serde(default)]
    pub net: NetSection,
}

/// Command-line overrides, applied last.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k_s: Option<usize>,
    pub k_lof: Option<usize>,
    pub mode: Option<Mode>,
}

/// Selection size and LOF neighbours of the artificial experiment.
pub const DEFAULT_K: usize = 6;

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        files::read_toml(path)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.orsa.seed = Some(seed);
        }
        if o.k_s.is_some() {
            self.orsa.k_s = o.k_s;
        }
        if o.k_lof.is_some() {
            self.orsa.k_lof = o.k_lof;
        }
        if o.mode.is_some() {
            self.orsa.mode = o.mode;
        }
    }

    pub fn orsa(&self) -> OrsaConfig {
        let s = &self.orsa;
        let mut c = OrsaConfig::new(s.k_s.unwrap_or(DEFAULT_K), s.k_lof.unwrap_or(DEFAULT_K));
        c.mode = s.mode.unwrap_or(c.mode);
        c.batch_size = s.batch_size.unwrap_or(c.batch_size);
        c.steps = s.steps.unwrap_or(c.steps);
        c.seed = s.seed.unwrap_or(c.seed);
        c.metric_window = s.metric_window.unwrap_or(c.metric_window);
        c.adam = s.adam.unwrap_or(c.adam);
        c
    }

    /// The network for a dataset with `input_dim` inputs; the init seed
    /// follows the training seed unless set explicitly.
    pub fn net(&self, input_dim: usize) -> Result<NetConfig> {
        if let Some(d) = self.net.input_dim {
            if d != input_dim {
                return Err(Error::invalid(format!(
                    "net.input_dim = {d} but the dataset has {input_dim} input features"
                )));
            }
        }
        let mut net = NetConfig::new(input_dim, self.net.init_seed.unwrap_or(self.orsa().seed));
        if let Some(h) = &self.net.hidden {
            net.hidden = h.clone();
        }
        net.validate()?;
        Ok(net)
    }

    /// Pins every resolved value so the config can be replayed verbatim.
    pub fn resolved(orsa: &OrsaConfig, net: &NetConfig) -> Self {
        TrainConfig {
            orsa: OrsaSection {
                k_s: Some(orsa.k_s),
                k_lof: Some(orsa.k_lof),
                mode: Some(orsa.mode),
                batch_size: Some(orsa.batch_size),
                steps: Some(orsa.steps),
                seed: Some(orsa.seed),
                metric_window: Some(orsa.metric_window),
                adam: Some(orsa.adam),
            },
            net: NetSection {
                input_dim: Some(net.input_dim),
                hidden: Some(net.hidden.clone()),
                init_seed: Some(net.init_seed),
            },
        }
    }
}

fn default_probes() -> usize {
    100
}
fn default_eval_probes() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit `(k_s, k_lof)` points.
    #[serde(default)]
    pub grid: Vec<(usize, usize)>,
    /// Cartesian alternative to `grid`.
    #[serde(default)]
    pub k_s: Vec<usize>,
    #[serde(default)]
    pub k_lof: Vec<usize>,
    #[serde(default)]
    pub probe_seed: u64,
    /// Probe samples dumped per grid point.
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Probe samples the RMSE columns are computed on.
    #[serde(default = "default_eval_probes")]
    pub eval_probes: usize,
    #[serde(default)]
    pub orsa: OrsaSection,
    #[serde(default)]
    pub net: NetSection,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: Vec::new(),
            k_s: Vec::new(),
            k_lof: Vec::new(),
            probe_seed: 0,
            probes: default_probes(),
            eval_probes: default_eval_probes(),
            orsa: OrsaSection::default(),
            net: NetSection::default(),
        }
    }
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        files::read_toml(path)
    }

    /// Grid points in order: explicit points first, then the cartesian
    /// product of `k_s` and `k_lof`.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let mut out = self.grid.clone();
        for &a in &self.k_s {
            for &b in &self.k_lof {
                out.push((a, b));
            }
        }
        out
    }

    pub fn base(&self) -> TrainConfig {
        TrainConfig {
            orsa: self.orsa.clone(),
            net: self.net.clone(),
        }
    }
}

/// Rejects the grid up front if any point is invalid for `n_devices`.
pub fn check_grid(points: &[(usize, usize)], n_devices: usize) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    let bad: Vec<String> = points
        .iter()
        .filter(|&&(k_s, k_lof)| !(1..=n_devices).contains(&k_s) || !(1..n_devices).contains(&k_lof))
        .map(|(a, b)| format!("({a}, {b})"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "invalid grid points for {n_devices} devices (need 1 <= k_s <= {n_devices}, 1 <= k_lof <= {}): {}",
            n_devices - 1,
            bad.join(" ")
        )))
    }
}
