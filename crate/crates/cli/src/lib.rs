//! `phenoflow` command-line pipeline: synthesize or ingest inputs, fit
//! seasons, regress landmarks on soil warming, train networks and explain
//! them.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod svg;

pub use commands::{run, Cli, Command};
pub use config::{PipelineConfig, Target};
pub use error::CliError;
