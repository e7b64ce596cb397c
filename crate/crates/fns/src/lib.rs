//! Command-line front end: configuration files, datasets, checkpoints and
//! CSV reports around the `fns_core` numerics.

pub mod checkpoint;
mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod report;

pub use cli::run_cli;
pub use error::{CliError, Result};
