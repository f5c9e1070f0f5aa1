//! Configuration, pipeline and subcommand implementations behind the
//! `filtergen` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{validate_config, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
pub use pipeline::run_pipeline;
