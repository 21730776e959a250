//! Experiment orchestration for the `diffsim` command-line tool. Each
//! subcommand is a plain function.

pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod output;
pub mod simulate;
pub mod stability;
pub mod sweep;
pub mod train;

use thiserror::Error;

/// Errors surfaced by subcommands, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration, arguments or incompatible inputs (exit 2).
    #[error("{0}")]
    Usage(String),
    /// A check ran and reported failure (exit 1).
    #[error("{0}")]
    Check(String),
    /// Training or simulation faulted at run time (exit 3).
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) | CliError::Csv(_) => 3,
        }
    }
}

/// Environment variable naming the default root for run directories.
pub const OUTPUT_ROOT_VAR: &str = "DIFFSIM_OUTPUT_ROOT";

/// Default run root: `$DIFFSIM_OUTPUT_ROOT`, else `./runs`.
pub fn output_root() -> std::path::PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR)
        .map(Into::into)
        .unwrap_or_else(|| "runs".into())
}
