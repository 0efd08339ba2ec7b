//! File formats, experiment commands and the `orsa` command line tool on top
//! of `orsa-core`.
//!
//! Each command is a library function so tests can drive it without a
//! subprocess: [`generate`], [`run::train`], [`sweep::sweep`],
//! [`lof_file`] and [`report::report`].

pub mod config;
pub mod dataset;
pub mod error;
pub mod files;
pub mod lof_file;
pub mod report;
pub mod run;
pub mod sweep;

use std::path::Path;

pub use error::{Error, Result};

use config::GenerateConfig;
use dataset::DatasetManifest;

/// `orsa generate`: draws the synthetic dataset and writes it to `out`.
pub fn generate(config: &GenerateConfig, out: &Path) -> Result<DatasetManifest> {
    let synth = config.to_synth()?;
    let ds = orsa_core::synthgen::generate_dataset(&synth)?;
    dataset::write_synthetic(out, &ds)
}
