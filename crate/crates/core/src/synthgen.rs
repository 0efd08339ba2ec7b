//! Artificial multi-device benchmark with planted outlier devices.
//!
//! Every device shares one smooth base function of the normalized inputs.
//! Regular devices add Gaussian noise; outliers add one of four offsets of
//! increasing subtlety:
//!
//! 1. a constant level shift;
//! 2. a smooth bump confined to a random box of the input space;
//! 3. the bump, present only with probability `p1` per sample;
//! 4. the probabilistic bump, scaled by `a ~ U(scale_range)` per sample.
//!
//! All randomness is derived from the config seed. The per-sample draws of
//! the probabilistic types come from a stream keyed on the device and the
//! sample coordinates, so a device's noise-free output is a deterministic
//! function of the sample and can serve directly as an ensemble member.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ensemble::Member;
use crate::math;
use crate::preprocess::Sample;
use crate::{Error, Result};

/// Bump half-width expressed in standard deviations of the truncated normal.
pub const BUMP_TRUNCATION_SIGMAS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceLabel {
    Regular,
    Type1,
    Type2,
    Type3,
    Type4,
}

impl DeviceLabel {
    pub const OUTLIERS: [DeviceLabel; 4] = [
        DeviceLabel::Type1,
        DeviceLabel::Type2,
        DeviceLabel::Type3,
        DeviceLabel::Type4,
    ];

    pub fn is_outlier(self) -> bool {
        self != DeviceLabel::Regular
    }

    fn has_area(self) -> bool {
        matches!(
            self,
            DeviceLabel::Type2 | DeviceLabel::Type3 | DeviceLabel::Type4
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceLabel::Regular => "regular",
            DeviceLabel::Type1 => "type1",
            DeviceLabel::Type2 => "type2",
            DeviceLabel::Type3 => "type3",
            DeviceLabel::Type4 => "type4",
        }
    }
}

impl fmt::Display for DeviceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for DeviceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "regular" => DeviceLabel::Regular,
            "type1" => DeviceLabel::Type1,
            "type2" => DeviceLabel::Type2,
            "type3" => DeviceLabel::Type3,
            "type4" => DeviceLabel::Type4,
            _ => return Err(Error::config(alloc::format!("unknown device label {s:?}"))),
        })
    }
}

/// `amplitude * sin(<frequencies, s> + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinTerm {
    pub amplitude: f64,
    pub frequencies: Vec<f64>,
    pub phase: f64,
}

/// Shared device behaviour: a few sinusoids plus a diagonal quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseFunction {
    pub constant: f64,
    pub linear: Vec<f64>,
    pub quadratic: Vec<f64>,
    pub sines: Vec<SinTerm>,
}

impl BaseFunction {
    /// The stock base for `dim` inputs; stays within `[-1.2, 1.2]` on the cube.
    pub fn default_for_dim(dim: usize) -> Self {
        let axis = |f: &dyn Fn(usize) -> f64| (0..dim).map(f).collect::<Vec<_>>();
        let scale = 1.0 / dim.max(1) as f64;
        BaseFunction {
            constant: 0.0,
            linear: axis(&|j| if j == 0 { 0.2 } else { 0.0 }),
            quadratic: axis(&|j| if j == 1 { -0.2 } else { 0.0 }),
            sines: alloc::vec![
                SinTerm {
                    amplitude: 0.5,
                    frequencies: axis(&|j| PI * if j == 0 { 0.8 } else { 0.5 * scale }),
                    phase: 0.3,
                },
                SinTerm {
                    amplitude: 0.3,
                    frequencies: axis(&|j| PI * if j == 1 { 1.5 } else { -0.4 * scale }),
                    phase: 1.9,
                },
            ],
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = self.linear.len() != dim
            || self.quadratic.len() != dim
            || self.sines.iter().any(|t| t.frequencies.len() != dim);
        if bad {
            return Err(Error::config(alloc::format!(
                "base function coefficients do not match input_dim {dim}"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        let mut y = self.constant;
        for (j, &x) in s.iter().enumerate() {
            y += self.linear[j] * x + self.quadratic[j] * x * x;
        }
        y + eval_sines(&self.sines, s)
    }

    /// An upper bound on the Lipschitz constant w.r.t. the Euclidean norm on
    /// `[-1, 1]^d`.
    pub fn lipschitz_bound(&self) -> f64 {
        let poly: f64 = self
            .linear
            .iter()
            .zip(&self.quadratic)
            .map(|(l, q)| {
                let g = l.abs() + 2.0 * q.abs();
                g * g
            })
            .sum::<f64>();
        let sines: f64 = self
            .sines
            .iter()
            .map(|t| t.amplitude.abs() * math::sqrt(t.frequencies.iter().map(|f| f * f).sum()))
            .sum();
        math::sqrt(poly) + sines
    }
}

/// Evaluates the shared base function.
pub fn base_function(base: &BaseFunction, s: &Sample) -> f64 {
    base.eval(s)
}

/// Axis-aligned box where a smooth offset is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetArea {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl OffsetArea {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let area = OffsetArea { lower, upper };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::Shape(String::from("offset area bounds")));
        }
        for (&lo, &hi) in self.lower.iter().zip(&self.upper) {
            if !(lo < hi) || lo < -1.0 || hi > 1.0 {
                return Err(Error::InvalidRange { min: lo, max: hi });
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + (hi - lo) / 2.0)
            .collect()
    }

    /// True for points strictly inside the box.
    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&x, (&lo, &hi))| x > lo && x < hi)
    }

    fn draw<R: Rng + ?Sized>(rng: &mut R, dim: usize, width: (f64, f64)) -> Self {
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        for _ in 0..dim {
            let w = 2.0 * rng.random_range(width.0..=width.1);
            let lo = -1.0 + rng.random::<f64>() * (2.0 - w);
            lower.push(lo);
            upper.push((lo + w).min(1.0));
        }
        OffsetArea { lower, upper }
    }
}

/// Truncated-Gaussian bump: `-1` at the area center, exactly `0` on and
/// outside the boundary.
pub fn smooth_offset(area: &OffsetArea, s: &[f64]) -> f64 {
    let tail = math::exp(-0.5 * BUMP_TRUNCATION_SIGMAS * BUMP_TRUNCATION_SIGMAS);
    let mut profile = 1.0;
    for (&x, (&lo, &hi)) in s.iter().zip(area.lower.iter().zip(&area.upper)) {
        if x <= lo || x >= hi {
            return 0.0;
        }
        let half = (hi - lo) / 2.0;
        let u = (x - (lo + half)) / half * BUMP_TRUNCATION_SIGMAS;
        let g = (math::exp(-0.5 * u * u) - tail) / (1.0 - tail);
        profile *= g.max(0.0);
    }
    -profile
}

fn default_noise_sigma() -> f64 {
    0.1
}
fn default_p1() -> f64 {
    0.3
}
fn default_scale_range() -> (f64, f64) {
    (-1.0, 1.0)
}
fn default_constant_offset() -> f64 {
    -1.0
}
fn default_area_width() -> (f64, f64) {
    (0.3, 0.8)
}
fn default_member_error() -> f64 {
    0.02
}

/// Everything needed to regenerate a synthetic dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_devices: usize,
    pub samples_per_device: usize,
    pub input_dim: usize,
    /// One label per device.
    pub assignment: Vec<DeviceLabel>,
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_p1")]
    pub p1: f64,
    #[serde(default = "default_scale_range")]
    pub scale_range: (f64, f64),
    #[serde(default = "default_constant_offset")]
    pub constant_offset: f64,
    /// Add the Gaussian noise to outlier devices too.
    #[serde(default)]
    pub outlier_noise: bool,
    /// Fraction of the normalized range spanned by an offset area, per axis.
    #[serde(default = "default_area_width")]
    pub area_width: (f64, f64),
    /// RMS amplitude of the smooth fit-error field added to each ensemble
    /// member (never to the recorded device tables).
    #[serde(default = "default_member_error")]
    pub member_error: f64,
    pub base: BaseFunction,
    pub seed: u64,
}

impl SynthConfig {
    /// All-regular devices with the stock base function.
    pub fn regular(n_devices: usize, samples_per_device: usize, input_dim: usize, seed: u64) -> Self {
        SynthConfig {
            n_devices,
            samples_per_device,
            input_dim,
            assignment: alloc::vec![DeviceLabel::Regular; n_devices],
            noise_sigma: default_noise_sigma(),
            p1: default_p1(),
            scale_range: default_scale_range(),
            constant_offset: default_constant_offset(),
            outlier_noise: false,
            area_width: default_area_width(),
            member_error: default_member_error(),
            base: BaseFunction::default_for_dim(input_dim),
            seed,
        }
    }

    /// `n_devices` devices, one outlier of each type at randomly chosen,
    /// distinct device indices (drawn from `seed`).
    pub fn one_outlier_per_type(
        n_devices: usize,
        samples_per_device: usize,
        input_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_devices < DeviceLabel::OUTLIERS.len() {
            return Err(Error::config("need at least 4 devices for one outlier per type"));
        }
        let mut cfg = Self::regular(n_devices, samples_per_device, input_dim, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(math::mix64(seed ^ 0x6f75_746c_6965_7273));
        let picks = rand::seq::index::sample(&mut rng, n_devices, DeviceLabel::OUTLIERS.len());
        for (label, dev) in DeviceLabel::OUTLIERS.iter().zip(picks.iter()) {
            cfg.assignment[dev] = *label;
        }
        Ok(cfg)
    }

    /// The artificial experiment: 30 devices, 10k samples each, two inputs.
    pub fn reference(seed: u64) -> Self {
        Self::one_outlier_per_type(30, 10_000, 2, seed).expect("30 devices")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_devices < 2 {
            return Err(Error::config("n_devices must be >= 2"));
        }
        if self.samples_per_device < 1 {
            return Err(Error::config("samples_per_device must be >= 1"));
        }
        if self.input_dim < 1 {
            return Err(Error::config("input_dim must be >= 1"));
        }
        if self.assignment.len() != self.n_devices {
            return Err(Error::config(alloc::format!(
                "outlier assignment covers {} devices, expected {}",
                self.assignment.len(),
                self.n_devices
            )));
        }
        if !(0.0..=1.0).contains(&self.p1) {
            return Err(Error::config("p1 must lie in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be >= 0"));
        }
        if !(self.scale_range.0 <= self.scale_range.1) {
            return Err(Error::config("scale_range lower bound exceeds upper bound"));
        }
        let (wl, wu) = self.area_width;
        if !(0.0 < wl && wl <= wu && wu <= 1.0) {
            return Err(Error::config("area_width must satisfy 0 < lower <= upper <= 1"));
        }
        if !(self.member_error >= 0.0 && self.member_error.is_finite()) {
            return Err(Error::config("member_error must be >= 0"));
        }
        if !self.constant_offset.is_finite() {
            return Err(Error::NonFinite(self.constant_offset));
        }
        self.base.validate(self.input_dim)
    }
}

/// Per-sample random choices of the probabilistic outlier types.
#[derive(Debug, Clone, Copy, PartialEq)]
struct OffsetDraw {
    on: bool,
    scale: f64,
}

impl OffsetDraw {
    const ALWAYS: OffsetDraw = OffsetDraw {
        on: true,
        scale: 1.0,
    };

    fn sample<R: Rng + ?Sized>(label: DeviceLabel, rng: &mut R, config: &SynthConfig) -> Self {
        match label {
            DeviceLabel::Type3 => OffsetDraw {
                on: rng.random_bool(config.p1),
                scale: 1.0,
            },
            DeviceLabel::Type4 => {
                let on = rng.random_bool(config.p1);
                let (lo, hi) = config.scale_range;
                let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
                OffsetDraw { on, scale }
            }
            _ => Self::ALWAYS,
        }
    }
}

/// Output of a device with the given label at `s`.
///
/// Draw order from `rng`: the `p1` coin (types 3 and 4), the scale `a`
/// (type 4), then the noise term (regular devices, or every device when
/// `outlier_noise` is set).
pub fn device_output<R: Rng + ?Sized>(
    label: DeviceLabel,
    s: &[f64],
    rng: &mut R,
    config: &SynthConfig,
    area: Option<&OffsetArea>,
) -> f64 {
    let draw = OffsetDraw::sample(label, rng, config);
    let clean = offset_output(label, s, draw, config, area);
    let noisy = label == DeviceLabel::Regular || config.outlier_noise;
    if noisy && config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
        clean + normal.sample(rng)
    } else {
        clean
    }
}

fn offset_output(
    label: DeviceLabel,
    s: &[f64],
    draw: OffsetDraw,
    config: &SynthConfig,
    area: Option<&OffsetArea>,
) -> f64 {
    let base = config.base.eval(s);
    let bump = || area.map_or(0.0, |a| smooth_offset(a, s));
    match label {
        DeviceLabel::Regular => base,
        DeviceLabel::Type1 => base + config.constant_offset,
        DeviceLabel::Type2 | DeviceLabel::Type3 | DeviceLabel::Type4 => {
            base + if draw.on { draw.scale * bump() } else { 0.0 }
        }
    }
}

/// Random stream for the per-sample draws of one device.
pub fn sample_rng(device_key: u64, s: &[f64]) -> ChaCha8Rng {
    let seed = s
        .iter()
        .fold(device_key, |h, x| math::mix64(h ^ x.to_bits()));
    ChaCha8Rng::seed_from_u64(seed)
}

/// A device of a generated dataset: its label, offset area, stream key, and
/// the fit-error field of its ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDevice {
    pub index: usize,
    pub label: DeviceLabel,
    pub area: Option<OffsetArea>,
    pub key: u64,
    pub fit_error: Vec<SinTerm>,
}

impl SyntheticDevice {
    pub fn device_id(&self) -> String {
        device_id(self.index)
    }

    /// Output with noise, as recorded in the device table.
    pub fn observe(&self, s: &[f64], config: &SynthConfig) -> f64 {
        let mut rng = sample_rng(self.key, s);
        device_output(self.label, s, &mut rng, config, self.area.as_ref())
    }

    /// Noise-free output; equals [`observe`](Self::observe) for outliers
    /// without `outlier_noise`.
    pub fn clean(&self, s: &[f64], config: &SynthConfig) -> f64 {
        let draw = match self.label {
            DeviceLabel::Type3 | DeviceLabel::Type4 => {
                OffsetDraw::sample(self.label, &mut sample_rng(self.key, s), config)
            }
            _ => OffsetDraw::ALWAYS,
        };
        offset_output(self.label, s, draw, config, self.area.as_ref())
    }

    /// The member's smooth deviation from [`clean`](Self::clean).
    pub fn member_error(&self, s: &[f64]) -> f64 {
        eval_sines(&self.fit_error, s)
    }
}

fn eval_sines(terms: &[SinTerm], s: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| {
            let arg: f64 = t.frequencies.iter().zip(s).map(|(f, x)| f * x).sum();
            t.amplitude * math::sin(arg + t.phase)
        })
        .sum()
}

const FIT_ERROR_TERMS: usize = 3;

/// Random sinusoids with RMS `amplitude` over `[-1, 1]^dim`. Frequencies are
/// nonzero integer multiples of pi, so every term averages to zero on the cube.
fn draw_fit_error<R: Rng + ?Sized>(rng: &mut R, dim: usize, amplitude: f64) -> Vec<SinTerm> {
    let per_term = amplitude * math::sqrt(2.0 / FIT_ERROR_TERMS as f64);
    (0..FIT_ERROR_TERMS)
        .map(|_| {
            let frequencies = (0..dim)
                .map(|_| {
                    let k = rng.random_range(1..=2) as f64;
                    if rng.random_bool(0.5) { k * PI } else { -k * PI }
                })
                .collect();
            SinTerm {
                amplitude: per_term,
                frequencies,
                phase: rng.random_range(0.0..2.0 * PI),
            }
        })
        .collect()
}

pub fn device_id(index: usize) -> String {
    alloc::format!("device_{index:03}")
}

/// Per-device sample/output records.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTable {
    pub device_id: String,
    pub samples: Vec<Sample>,
    pub outputs: Vec<f64>,
    pub label: Option<DeviceLabel>,
}

impl DeviceTable {
    pub fn new(
        device_id: String,
        samples: Vec<Sample>,
        outputs: Vec<f64>,
        label: Option<DeviceLabel>,
    ) -> Result<Self> {
        if samples.len() != outputs.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                actual: outputs.len(),
            });
        }
        Ok(DeviceTable {
            device_id,
            samples,
            outputs,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A generated dataset together with the hidden device parameters.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub devices: Vec<SyntheticDevice>,
    pub tables: Vec<DeviceTable>,
}

impl SyntheticDataset {
    /// Noise-free generator functions, one ensemble member per device.
    pub fn members(&self) -> Vec<SyntheticMember> {
        synthetic_members(&self.config, &self.devices)
    }

    /// Every device's samples, concatenated in device order.
    pub fn pooled_samples(&self) -> Vec<Sample> {
        self.tables
            .iter()
            .flat_map(|t| t.samples.iter().cloned())
            .collect()
    }

    pub fn device_with_label(&self, label: DeviceLabel) -> Option<&SyntheticDevice> {
        self.devices.iter().find(|d| d.label == label)
    }
}

fn device_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Hidden parameters of one device, plus its stream positioned for sampling.
fn draw_device(config: &SynthConfig, index: usize) -> (SyntheticDevice, ChaCha8Rng) {
    let label = config.assignment[index];
    let mut rng = device_stream(config.seed, index);
    let key = rng.random::<u64>();
    let area = label
        .has_area()
        .then(|| OffsetArea::draw(&mut rng, config.input_dim, config.area_width));
    let fit_error = draw_fit_error(&mut rng, config.input_dim, config.member_error);
    let device = SyntheticDevice {
        index,
        label,
        area,
        key,
        fit_error,
    };
    (device, rng)
}

/// Hidden parameters (area, key) of every device, without sampling data.
pub fn draw_devices(config: &SynthConfig) -> Result<Vec<SyntheticDevice>> {
    config.validate()?;
    Ok((0..config.n_devices)
        .map(|i| draw_device(config, i).0)
        .collect())
}

/// `count` samples drawn uniformly from `[-1, 1]^dim`.
pub fn uniform_samples<R: Rng + ?Sized>(rng: &mut R, count: usize, dim: usize) -> Vec<Sample> {
    (0..count)
        .map(|_| {
            let v = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Sample::new(v).expect("inside the cube")
        })
        .collect()
}

pub fn generate_dataset(config: &SynthConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let (devices, tables) = (0..config.n_devices)
        .map(|index| {
            let (dev, mut rng) = draw_device(config, index);
            let samples = uniform_samples(&mut rng, config.samples_per_device, config.input_dim);
            let outputs = samples.iter().map(|s| dev.observe(s, config)).collect();
            let table = DeviceTable {
                device_id: dev.device_id(),
                samples,
                outputs,
                label: Some(dev.label),
            };
            (dev, table)
        })
        .unzip();
    Ok(SyntheticDataset {
        config: config.clone(),
        devices,
        tables,
    })
}

/// Ensemble member backed by the noise-free generator of one device, plus
/// its small smooth fit-error field.
#[derive(Debug, Clone)]
pub struct SyntheticMember {
    device: SyntheticDevice,
    config: SynthConfig,
    id: String,
}

impl SyntheticMember {
    pub fn new(device: SyntheticDevice, config: SynthConfig) -> Self {
        let id = device.device_id();
        SyntheticMember { device, config, id }
    }

    pub fn device(&self) -> &SyntheticDevice {
        &self.device
    }
}

impl Member for SyntheticMember {
    fn device_id(&self) -> &str {
        &self.id
    }

    fn predict(&self, s: &[f64]) -> Result<f64> {
        if s.len() != self.config.input_dim {
            return Err(Error::Member {
                device: self.id.clone(),
                reason: alloc::format!(
                    "sample has {} features, expected {}",
                    s.len(),
                    self.config.input_dim
                ),
            });
        }
        Ok(self.device.clean(s, &self.config) + self.device.member_error(s))
    }
}

pub fn synthetic_members(config: &SynthConfig, devices: &[SyntheticDevice]) -> Vec<SyntheticMember> {
    devices
        .iter()
        .map(|d| SyntheticMember::new(d.clone(), config.clone()))
        .collect()
}
