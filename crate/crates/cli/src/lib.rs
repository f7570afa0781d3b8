//! IO companion for the simulator core: experiment configuration, CSV and
//! scenario file formats, and the experiment commands behind the CLI.

pub mod commands;
pub mod config;
pub mod formats;
pub mod timing;

use std::fmt;

/// Errors mapped onto the CLI exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2: bad configuration or arguments.
    Config(String),
    /// Exit code 3: a required artifact (q-table, scenario file) is missing.
    MissingArtifact(String),
    /// Exit code 1: everything else.
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::MissingArtifact(msg) => write!(f, "missing artifact: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn io(err: impl fmt::Display) -> Self {
        CliError::Io(err.to_string())
    }
}
