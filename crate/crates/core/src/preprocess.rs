//! Conversion of raw, possibly mixed-type inputs into normalized samples.
//!
//! Real features go through min-max normalization onto `[-1, 1]`;
//! categorical features are first mapped to their zero-based ordinal in the
//! declared category order and then normalized over `[0, |categories| - 1]`.
//! Metadata features are carried in the schema but never enter a [`Sample`].

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Whether a feature is fed to the models or only describes the device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    #[default]
    Input,
    Metadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Real { x_min: f64, x_max: f64 },
    Categorical { categories: Vec<String> },
}

/// Schema entry for one input column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub role: FeatureRole,
}

impl FeatureSpec {
    pub fn real(name: impl Into<String>, x_min: f64, x_max: f64) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Real { x_min, x_max },
            role: FeatureRole::Input,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        FeatureSpec {
            name: name.into(),
            kind: FeatureKind::Categorical {
                categories: categories.into_iter().map(Into::into).collect(),
            },
            role: FeatureRole::Input,
        }
    }

    pub fn metadata(mut self) -> Self {
        self.role = FeatureRole::Metadata;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            FeatureKind::Real { x_min, x_max } => {
                if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
                    return Err(Error::InvalidRange {
                        min: *x_min,
                        max: *x_max,
                    });
                }
            }
            FeatureKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(Error::config(alloc::format!(
                        "feature {}: no categories declared",
                        self.name
                    )));
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return Err(Error::config(alloc::format!(
                            "feature {}: duplicate category {c:?}",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Bounds used for normalization after encoding.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.kind {
            FeatureKind::Real { x_min, x_max } => (*x_min, *x_max),
            FeatureKind::Categorical { categories } => {
                (0.0, categories.len().saturating_sub(1) as f64)
            }
        }
    }
}

/// A raw, not yet encoded feature value.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Real(f64),
    Category(String),
}

impl From<f64> for FeatureValue {
    fn from(v: f64) -> Self {
        FeatureValue::Real(v)
    }
}

impl From<&str> for FeatureValue {
    fn from(v: &str) -> Self {
        FeatureValue::Category(v.to_string())
    }
}

/// A normalized input vector; every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::NonFinite(v));
            }
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::config(alloc::format!(
                    "sample value {v} outside [-1, 1]"
                )));
            }
        }
        Ok(Sample(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Sample {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Sample::new(v)
    }
}

impl From<Sample> for Vec<f64> {
    fn from(s: Sample) -> Self {
        s.0
    }
}

/// Maps a raw value to a real: identity for reals, ordinal for categories.
pub fn encode_mixed(raw: &FeatureValue, spec: &FeatureSpec) -> Result<f64> {
    match (raw, &spec.kind) {
        (FeatureValue::Real(x), FeatureKind::Real { .. }) => Ok(*x),
        (FeatureValue::Category(label), FeatureKind::Categorical { categories }) => categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as f64)
            .ok_or_else(|| Error::UnknownCategory {
                feature: spec.name.clone(),
                label: label.clone(),
            }),
        (_, FeatureKind::Real { .. }) => Err(Error::KindMismatch {
            feature: spec.name.clone(),
            expected: "real",
        }),
        (_, FeatureKind::Categorical { .. }) => Err(Error::KindMismatch {
            feature: spec.name.clone(),
            expected: "categorical",
        }),
    }
}

/// `-1 + 2 (x - x_min) / (x_max - x_min)`, unclamped.
pub fn minmax_normalize(x: f64, x_min: f64, x_max: f64) -> Result<f64> {
    if !(x_min < x_max) {
        return Err(Error::InvalidRange {
            min: x_min,
            max: x_max,
        });
    }
    Ok(-1.0 + 2.0 * (x - x_min) / (x_max - x_min))
}

/// Inverse of [`minmax_normalize`].
pub fn minmax_denormalize(x: f64, x_min: f64, x_max: f64) -> Result<f64> {
    if !(x_min < x_max) {
        return Err(Error::InvalidRange {
            min: x_min,
            max: x_max,
        });
    }
    Ok(x_min + (x + 1.0) * (x_max - x_min) / 2.0)
}

/// A normalized sample plus the number of entries that had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub sample: Sample,
    pub clamped: usize,
}

/// Encodes and normalizes one raw row. `raw` has one value per spec,
/// including metadata columns, which are dropped from the output.
pub fn normalize_sample(raw: &[FeatureValue], specs: &[FeatureSpec]) -> Result<Normalized> {
    if raw.len() != specs.len() {
        return Err(Error::LengthMismatch {
            expected: specs.len(),
            actual: raw.len(),
        });
    }
    let mut values = Vec::with_capacity(specs.len());
    let mut clamped = 0;
    for (index, (value, spec)) in raw.iter().zip(specs).enumerate() {
        if spec.role == FeatureRole::Metadata {
            continue;
        }
        let wrap = |e: Error| Error::Feature {
            index,
            source: Box::new(e),
        };
        let x = encode_mixed(value, spec).map_err(wrap)?;
        if !x.is_finite() {
            return Err(wrap(Error::NonFinite(x)));
        }
        let (lo, hi) = spec.bounds();
        let z = minmax_normalize(x, lo, hi).map_err(wrap)?;
        if !(-1.0..=1.0).contains(&z) {
            clamped += 1;
        }
        values.push(z.clamp(-1.0, 1.0));
    }
    Ok(Normalized {
        sample: Sample(values),
        clamped,
    })
}

/// Number of columns a schema contributes to a [`Sample`].
pub fn input_dim(specs: &[FeatureSpec]) -> usize {
    specs
        .iter()
        .filter(|s| s.role == FeatureRole::Input)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn abc() -> FeatureSpec {
        FeatureSpec::categorical("grade", ["A", "B", "C"])
    }

    #[test]
    fn encode_real_is_identity() {
        let spec = FeatureSpec::real("vdd", 0.0, 5.0);
        assert_eq!(encode_mixed(&3.5.into(), &spec).unwrap(), 3.5);
    }

    #[test]
    fn encode_category_is_ordinal() {
        assert_eq!(encode_mixed(&"B".into(), &abc()).unwrap(), 1.0);
    }

    #[test]
    fn encode_unknown_category_names_feature_and_label() {
        let err = encode_mixed(&"Z".into(), &abc()).unwrap_err();
        assert_eq!(
            err,
            Error::UnknownCategory {
                feature: "grade".into(),
                label: "Z".into()
            }
        );
    }

    #[test]
    fn encode_kind_mismatch() {
        assert!(matches!(
            encode_mixed(&1.0.into(), &abc()),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn minmax_bounds_and_midpoint() {
        let (lo, hi) = (-3.0, 7.0);
        assert_eq!(minmax_normalize(lo, lo, hi).unwrap(), -1.0);
        assert_eq!(minmax_normalize((lo + hi) / 2.0, lo, hi).unwrap(), 0.0);
        assert_eq!(minmax_normalize(hi, lo, hi).unwrap(), 1.0);
    }

    #[test]
    fn minmax_rejects_degenerate_range() {
        assert!(minmax_normalize(1.0, 2.0, 2.0).is_err());
        assert!(minmax_normalize(1.0, 3.0, 2.0).is_err());
    }

    #[test]
    fn all_minima_map_to_minus_one() {
        let specs = vec![FeatureSpec::real("t", 10.0, 20.0), abc()];
        let raw = vec![10.0.into(), "A".into()];
        let out = normalize_sample(&raw, &specs).unwrap();
        assert_eq!(out.sample.values(), &[-1.0, -1.0]);
        assert_eq!(out.clamped, 0);
    }

    #[test]
    fn single_category_is_degenerate() {
        let specs = vec![FeatureSpec::categorical("only", ["X"])];
        let err = normalize_sample(&["X".into()], &specs).unwrap_err();
        assert!(matches!(err, Error::Feature { index: 0, .. }));
    }

    #[test]
    fn mixed_midpoints_map_to_zero() {
        let specs = vec![FeatureSpec::real("t", -2.0, 4.0), abc()];
        let raw = vec![1.0.into(), "B".into()];
        let out = normalize_sample(&raw, &specs).unwrap();
        assert_eq!(out.sample.values(), &[0.0, 0.0]);
    }

    #[test]
    fn out_of_range_is_clamped_and_counted() {
        let specs = vec![
            FeatureSpec::real("a", 0.0, 1.0),
            FeatureSpec::real("b", 0.0, 1.0),
        ];
        let out = normalize_sample(&[1.5.into(), (-0.25).into()], &specs).unwrap();
        assert_eq!(out.sample.values(), &[1.0, -1.0]);
        assert_eq!(out.clamped, 2);
    }

    #[test]
    fn metadata_is_dropped() {
        let specs = vec![
            FeatureSpec::real("t", 0.0, 2.0),
            FeatureSpec::categorical("fab", ["north", "south"]).metadata(),
        ];
        let out = normalize_sample(&[2.0.into(), "south".into()], &specs).unwrap();
        assert_eq!(out.sample.values(), &[1.0]);
        assert_eq!(input_dim(&specs), 1);
    }

    #[test]
    fn length_mismatch_rejected() {
        let specs = vec![FeatureSpec::real("t", 0.0, 2.0)];
        assert!(matches!(
            normalize_sample(&[], &specs),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn spec_validation() {
        assert!(FeatureSpec::real("t", 1.0, 1.0).validate().is_err());
        assert!(FeatureSpec::categorical("c", ["a", "a"]).validate().is_err());
        assert!(FeatureSpec::categorical("c", Vec::<String>::new())
            .validate()
            .is_err());
        assert!(abc().validate().is_ok());
    }

    proptest! {
        #[test]
        fn normalize_is_strictly_increasing(
            lo in -1e3f64..1e3, width in 1e-3f64..1e3, a in 0.0f64..1.0, b in 0.0f64..1.0
        ) {
            prop_assume!(a != b);
            let hi = lo + width;
            let (xa, xb) = (lo + a * width, lo + b * width);
            prop_assume!(xa != xb);
            let (za, zb) = (
                minmax_normalize(xa, lo, hi).unwrap(),
                minmax_normalize(xb, lo, hi).unwrap(),
            );
            prop_assert_eq!(xa < xb, za < zb);
        }

        #[test]
        fn denormalize_round_trips(lo in -1e3f64..1e3, width in 1e-3f64..1e3, t in 0.0f64..=1.0) {
            let hi = lo + width;
            let x = lo + t * width;
            let back = minmax_denormalize(minmax_normalize(x, lo, hi).unwrap(), lo, hi).unwrap();
            let scale = x.abs().max(width);
            prop_assert!((back - x).abs() <= 1e-12 * scale);
        }

        #[test]
        fn normalized_rows_are_valid_samples(
            xs in proptest::collection::vec(-10.0f64..10.0, 1..6),
            cat in 0usize..3,
        ) {
            let mut specs: Vec<FeatureSpec> = (0..xs.len())
                .map(|i| FeatureSpec::real(alloc::format!("x{i}"), -5.0, 5.0))
                .collect();
            specs.push(abc());
            let mut raw: Vec<FeatureValue> = xs.iter().map(|&x| x.into()).collect();
            raw.push(["A", "B", "C"][cat].into());
            let out = normalize_sample(&raw, &specs).unwrap();
            prop_assert_eq!(out.sample.dim(), xs.len() + 1);
            prop_assert!(Sample::new(out.sample.into_inner()).is_ok());
        }
    }
}
