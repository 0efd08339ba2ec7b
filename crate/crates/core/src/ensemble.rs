//! Ensemble members and the per-sample soft-min/soft-max selection.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::preprocess::Sample;
use crate::{Error, Result};

/// A fixed, deterministic per-device model.
pub trait Member {
    fn device_id(&self) -> &str;

    fn predict(&self, s: &[f64]) -> Result<f64>;
}

impl<T: Member + ?Sized> Member for Box<T> {
    fn device_id(&self) -> &str {
        (**self).device_id()
    }

    fn predict(&self, s: &[f64]) -> Result<f64> {
        (**self).predict(s)
    }
}

impl<T: Member + ?Sized> Member for &T {
    fn device_id(&self) -> &str {
        (**self).device_id()
    }

    fn predict(&self, s: &[f64]) -> Result<f64> {
        (**self).predict(s)
    }
}

/// Worst case (smallest outputs) or best case (largest outputs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    #[serde(alias = "min")]
    SoftMin,
    #[serde(alias = "max")]
    SoftMax,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::SoftMin => "min",
            Mode::SoftMax => "max",
        }
    }
}

impl core::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" | "soft_min" => Ok(Mode::SoftMin),
            "max" | "soft_max" => Ok(Mode::SoftMax),
            _ => Err(Error::config(alloc::format!("unknown mode {s:?}"))),
        }
    }
}

/// A member returning the same value everywhere.
#[derive(Debug, Clone)]
pub struct ConstantMember {
    pub id: String,
    pub value: f64,
}

impl Member for ConstantMember {
    fn device_id(&self) -> &str {
        &self.id
    }

    fn predict(&self, _s: &[f64]) -> Result<f64> {
        Ok(self.value)
    }
}

/// Nearest-sample lookup over a device table.
///
/// Rows are kept sorted by their first coordinate so a query only scans
/// outward until the first-axis gap alone exceeds the best distance found.
#[derive(Debug, Clone)]
pub struct TableMember {
    id: String,
    dim: usize,
    // Row-major, sorted by the first coordinate.
    points: Vec<f64>,
    outputs: Vec<f64>,
}

impl TableMember {
    pub fn new(id: impl Into<String>, samples: &[Sample], outputs: &[f64]) -> Result<Self> {
        let id = id.into();
        if samples.is_empty() {
            return Err(Error::Member {
                device: id,
                reason: String::from("empty table"),
            });
        }
        if samples.len() != outputs.len() {
            return Err(Error::LengthMismatch {
                expected: samples.len(),
                actual: outputs.len(),
            });
        }
        let dim = samples[0].dim();
        if dim == 0 || samples.iter().any(|s| s.dim() != dim) {
            return Err(Error::Member {
                device: id,
                reason: String::from("inconsistent sample dimensions"),
            });
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| samples[a][0].total_cmp(&samples[b][0]).then(a.cmp(&b)));
        let mut points = Vec::with_capacity(samples.len() * dim);
        let mut sorted_outputs = Vec::with_capacity(samples.len());
        for &i in &order {
            points.extend_from_slice(&samples[i]);
            sorted_outputs.push(outputs[i]);
        }
        Ok(TableMember {
            id,
            dim,
            points,
            outputs: sorted_outputs,
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn sq_dist(&self, i: usize, s: &[f64]) -> f64 {
        self.row(i)
            .iter()
            .zip(s)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Member for TableMember {
    fn device_id(&self) -> &str {
        &self.id
    }

    fn predict(&self, s: &[f64]) -> Result<f64> {
        if s.len() != self.dim {
            return Err(Error::Member {
                device: self.id.clone(),
                reason: alloc::format!("sample has {} features, expected {}", s.len(), self.dim),
            });
        }
        let n = self.len();
        let x0 = s[0];
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.row(mid)[0] < x0 {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let start = lo;
        let mut best = (f64::INFINITY, usize::MAX);
        let consider = |i: usize, best: &mut (f64, usize)| {
            let d = self.sq_dist(i, s);
            if d < best.0 || (d == best.0 && i < best.1) {
                *best = (d, i);
            }
        };
        let (mut up, mut down) = (start, start);
        loop {
            let gap_up = (up < n).then(|| self.row(up)[0] - x0);
            let gap_down = (down > 0).then(|| x0 - self.row(down - 1)[0]);
            let up_live = gap_up.is_some_and(|g| g * g <= best.0);
            let down_live = gap_down.is_some_and(|g| g * g <= best.0);
            if !up_live && !down_live {
                break;
            }
            if up_live {
                consider(up, &mut best);
                up += 1;
            }
            if down_live {
                consider(down - 1, &mut best);
                down -= 1;
            }
        }
        Ok(self.outputs[best.1])
    }
}

/// `[f_1(s), ..., f_N(s)]` in member order.
pub fn predict_ensemble<M: Member>(members: &[M], s: &[f64]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(members.len());
    predict_into(members, s, &mut out)?;
    Ok(out)
}

pub(crate) fn predict_into<M: Member>(members: &[M], s: &[f64], out: &mut Vec<f64>) -> Result<()> {
    if members.is_empty() {
        return Err(Error::config("ensemble has no members"));
    }
    out.clear();
    for m in members {
        let y = m.predict(s)?;
        if !y.is_finite() {
            return Err(Error::Member {
                device: String::from(m.device_id()),
                reason: alloc::format!("non-finite output {y}"),
            });
        }
        out.push(y);
    }
    Ok(())
}

/// The `k_s` members chosen for one sample, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

/// Member outputs for one sample together with their selection.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutputs {
    pub y_out: Vec<f64>,
    pub selection: Selection,
}

impl EnsembleOutputs {
    pub fn evaluate<M: Member>(members: &[M], s: &[f64], k_s: usize, mode: Mode) -> Result<Self> {
        let y_out = predict_ensemble(members, s)?;
        let selection = select_k(&y_out, k_s, mode)?;
        Ok(EnsembleOutputs { y_out, selection })
    }
}

fn mode_order(mode: Mode, y: &[f64], a: usize, b: usize) -> Ordering {
    let cmp = |x: f64, z: f64| x.partial_cmp(&z).unwrap_or_else(|| x.total_cmp(&z));
    let by_value = match mode {
        Mode::SoftMin => cmp(y[a], y[b]),
        Mode::SoftMax => cmp(y[b], y[a]),
    };
    by_value.then(a.cmp(&b))
}

/// Indices of the `k_s` smallest (soft-min, ascending) or largest
/// (soft-max, descending) outputs; ties go to the lower device index.
pub fn select_k(y_out: &[f64], k_s: usize, mode: Mode) -> Result<Selection> {
    let mut indices = Vec::with_capacity(y_out.len());
    select_into(y_out, k_s, mode, &mut indices)?;
    let values = indices.iter().map(|&i| y_out[i]).collect();
    Ok(Selection { indices, values })
}

pub(crate) fn select_into(
    y_out: &[f64],
    k_s: usize,
    mode: Mode,
    indices: &mut Vec<usize>,
) -> Result<()> {
    Error::check_range("k_s", k_s, 1, y_out.len())?;
    indices.clear();
    indices.extend(0..y_out.len());
    if k_s < indices.len() {
        indices.select_nth_unstable_by(k_s - 1, |&a, &b| mode_order(mode, y_out, a, b));
        indices.truncate(k_s);
    }
    indices.sort_unstable_by(|&a, &b| mode_order(mode, y_out, a, b));
    Ok(())
}
