//! CLI error channel: stable machine-readable prefixes and exit codes.
//!
//! Exit codes: 0 success, 2 usage, 3 data/schema, 4 solver non-convergence.

use std::fmt;

use twoway_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    /// Wraps a core error raised while reading or shaping data.
    pub fn from_data(err: CoreError) -> Self {
        CliError::Data(err.to_string())
    }

    /// Wraps a core error raised while fitting or testing.
    pub fn from_model(err: CoreError) -> Self {
        match err {
            CoreError::NonConvergence { .. } => CliError::Solver(err.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }

    pub fn from_io(err: std::io::Error, what: &str) -> Self {
        CliError::Data(format!("{what}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error[usage]: {m}"),
            CliError::Data(m) => write!(f, "error[data]: {m}"),
            CliError::Solver(m) => write!(f, "error[solver]: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
