//! Command implementations behind the `stochflow` binary: configuration
//! parsing, file formats, the verification suites and their tolerances.

pub mod commands;
pub mod config;
pub mod formats;
pub mod suites;
pub mod tolerances;

use thiserror::Error;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Exit code for usage, configuration and input errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for numerical failures: blow-up or a failed verification.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Numerical(_) | CliError::Verification(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<stochflow_core::Error> for CliError {
    fn from(e: stochflow_core::Error) -> Self {
        use stochflow_core::Error as E;
        match e {
            E::Blowup { .. } | E::Interpolation(_) => CliError::Numerical(e.to_string()),
            E::Io(s) => CliError::Io(s),
            other => CliError::Config(other.to_string()),
        }
    }
}
