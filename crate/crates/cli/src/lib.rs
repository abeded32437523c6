//! Configuration parsing and run dispatch for the `driftkernel` binary.

pub mod config;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{operation, sweep, verify, Operation, Outcome, RunError};
