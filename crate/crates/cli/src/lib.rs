//! Command-line front end: dataset and configuration files, synthetic data,
//! inversion runs and their tables and figures.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod plot;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use dataset::{Dataset, DatasetError};
pub use error::{exit, CliError};
pub use run::{invert, simulate, Payload, RunKind};
