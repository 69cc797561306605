//! The `teleassist` command line and live teleoperation service.
//!
//! Subcommands: `train`, `collect`, `evaluate`, `serve`, `replay`. Usage
//! errors exit with status 2, failures with status 1.

pub mod args;
mod commands;
pub mod protocol;
pub mod server;
pub mod session;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use args::Cli;

#[derive(Debug)]
pub enum CliError {
    /// Bad or missing flags.
    Usage(String),
    Failed(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}\n\nFor more information, try '--help'."),
            CliError::Failed(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failed(e)
    }
}

impl From<teleassist::Error> for CliError {
    fn from(e: teleassist::Error) -> Self {
        CliError::Failed(e.into())
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    commands::run(cli)
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
