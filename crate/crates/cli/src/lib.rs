//! Command-line front end: configuration, CSV ingestion, output files and the
//! `fit`, `calibrate`, `simulate`, `changepoint` and `diagnose` subcommands.

pub mod args;
pub mod changepoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;

pub use error::{CliError, Result};
