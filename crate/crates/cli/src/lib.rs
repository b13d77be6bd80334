//! Config-driven experiment runner for the `crpo` library.
//!
//! The `crpo` binary is a thin clap front end over [`commands`]; the
//! functions here are public so tests can drive them without a process.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, OUTPUT_DIR_ENV};
pub use error::CliError;
