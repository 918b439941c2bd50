//! Command-line front end: CSV ingest, TOML run configs, and the table,
//! results, plot and log outputs of a focused model search.

pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
