//! File formats, the estimator benchmark and the `depmax` command line,
//! on top of `depmax-core`.

pub mod benchmark;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod metrics;

pub use error::{CliError, Result};
