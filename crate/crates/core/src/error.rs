use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the algorithmic core can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("feature {feature}: unknown category label {label:?}")]
    UnknownCategory { feature: String, label: String },
    #[error("feature {feature}: expected a {expected} value")]
    KindMismatch {
        feature: String,
        expected: &'static str,
    },
    #[error("invalid range: x_min ({min}) must be < x_max ({max})")]
    InvalidRange { min: f64, max: f64 },
    #[error("feature #{index}: {source}")]
    Feature {
        index: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("need at least {min} points, got {actual}")]
    TooFewPoints { min: usize, actual: usize },
    #[error("{name} = {value} out of range [{min}, {max}]")]
    ParamOutOfRange {
        name: &'static str,
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("index {index} out of bounds for {len} points")]
    IndexOutOfBounds { index: usize, len: usize },
    #[error("negative distance {0}")]
    NegativeDistance(f64),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("empty selection")]
    EmptySelection,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("device {device}: {reason}")]
    Member { device: String, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn check_range(
        name: &'static str,
        value: usize,
        min: usize,
        max: usize,
    ) -> Result<()> {
        if value < min || value > max {
            return Err(Error::ParamOutOfRange {
                name,
                value,
                min,
                max,
            });
        }
        Ok(())
    }
}
