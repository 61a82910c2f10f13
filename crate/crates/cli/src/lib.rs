//! Batch harness for the `inclusion-accel` solvers: parses experiment
//! configs, runs solver suites, writes traces and reports, and turns the
//! verification battery into exit codes.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

/// Exit code when every enabled check passes.
pub const EXIT_PASS: u8 = 0;
/// Exit code when a check fails.
pub const EXIT_CHECK_FAILURE: u8 = 1;
/// Exit code for usage and configuration errors.
pub const EXIT_CONFIG_ERROR: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}
