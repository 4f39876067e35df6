//! Experiment harness: configuration, dataset preparation, orchestration and
//! result files for the `meterdp` command.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use config::{ConfigArgs, DatasetKind, ExperimentConfig};
pub use error::HarnessError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "METERDP_OUT_DIR";
