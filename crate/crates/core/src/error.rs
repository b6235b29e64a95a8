//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or empty input (bad argument values, empty files, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A declared column is missing from the data.
    #[error("schema error: column `{column}` not found")]
    Schema { column: String },

    /// A value could not be parsed as a finite number.
    #[error("parse error at data row {row}, column `{column}`: `{value}` is not a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A numeric precondition (finiteness, positive definiteness, ...) failed.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A matrix that must be invertible or full rank is not.
    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// The GMM solver failed to converge; carries the best iterate found.
    #[error("solver did not converge after {iterations} iterations over {multistarts} starts (best objective {best_objective:.6e}, gradient norm {grad_norm:.6e})")]
    NonConvergence {
        best_beta: Vec<f64>,
        best_objective: f64,
        grad_norm: f64,
        iterations: usize,
        multistarts: usize,
    },

    /// Operation not defined for the requested simulation family.
    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),
}
