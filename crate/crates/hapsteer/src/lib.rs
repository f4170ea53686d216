//! File formats, scenario configs and the command-line front end for
//! `hapsteer-core`.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use error::{CliError, CliResult};
