//! The `lof` command: LOF scores for a column of numbers.
//!
//! Input is one value per line; blank lines and lines starting with `#` are
//! skipped. Output is CSV `value,lof` in input order.

use std::path::Path;

use orsa_core::lof::{self, PointSet};

use crate::error::{Error, Result};
use crate::files::{self, CsvBuf};

pub fn read_column(path: &Path) -> Result<Vec<f64>> {
    let text = files::read_string(path)?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = files::parse_f64(path, i as u64 + 1, line)?;
        if !v.is_finite() {
            return Err(Error::Record {
                path: path.to_path_buf(),
                line: i as u64 + 1,
                msg: format!("non-finite value {line:?}"),
            });
        }
        values.push(v);
    }
    Ok(values)
}

pub fn scores(values: &[f64], k_lof: usize) -> Result<Vec<f64>> {
    let points = PointSet::new(values)?;
    Ok(lof::lof_scores(&points, k_lof)?.into_inner())
}

pub fn to_csv(values: &[f64], scores: &[f64]) -> Vec<u8> {
    let mut csv = CsvBuf::new(["value", "lof"]);
    for (v, s) in values.iter().zip(scores) {
        csv.row([v.to_string(), s.to_string()]);
    }
    csv.into_bytes()
}
