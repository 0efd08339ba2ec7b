//! Outlier-robust stacked aggregation (ORSA) of ensemble outputs.
//!
//! Given a fixed ensemble of per-device models, ORSA trains a small
//! feedforward network to approximate a robust worst case (soft-min) or best
//! case (soft-max) of the member outputs. Per sample, the `k_s` smallest (or
//! largest) member outputs are selected and combined in a weighted least
//! squares loss whose weights are the normalized reciprocals of each member's
//! Local Outlier Factor, so anomalous members barely move the fit.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! everything else touching the OS live in the `orsa-harness` crate.
//!
//! Module map:
//!
//!  - [`preprocess`]: mixed-type encoding and min-max normalization to `[-1, 1]`.
//!  - [`lof`]: k-distance, reachability, local reachability density, LOF and
//!    the derived reciprocal weights.
//!  - [`synthgen`]: the artificial multi-device benchmark with four planted
//!    outlier types.
//!  - [`ensemble`]: member models, ensemble prediction and soft-min/max
//!    selection.
//!  - [`aggnet`]: the stacked rectifier network, reverse-mode gradients and Adam.
//!  - [`trainer`]: the weighted loss, closed-form per-sample targets, the
//!    training loop and its diagnostics.
#![no_std]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggnet;
pub mod ensemble;
mod error;
pub mod lof;
mod math;
pub mod preprocess;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
