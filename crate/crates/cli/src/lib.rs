//! Benchmark harness for the quantized Wasserstein estimators: experiment
//! configuration, dataset specs, cell execution, and CSV rendering. The
//! `quantot` binary is a thin wrapper over [`experiments::run`].

pub mod cache;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod seeds;

pub use config::{ExperimentConfig, ExperimentKind, Seeding};
pub use error::{CliError, Result};
