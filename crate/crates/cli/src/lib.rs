//! Command-line driver for the amcdef toolkit: configuration, artifact
//! plumbing, the cached experiment pipeline and report assembly.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod report;

pub use config::{ExperimentConfig, SystemKind};
pub use error::{CliError, CliResult};
pub use pipeline::{run_pipeline, run_pipeline_with_cache, RunManifest};
