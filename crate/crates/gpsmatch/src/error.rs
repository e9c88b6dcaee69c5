//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by dataset ingestion, model fitting, matching and
/// downstream estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A declared column is missing from the input file.
    #[error("schema error: column '{column}' not found in input")]
    Schema { column: String },

    /// A cell failed to parse as a finite number.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// Invalid configuration or data shape (sizes, ranges, calipers, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A quantity that must vary is constant (zero residual SD, constant
    /// GPS surface, constant vector passed to standardize, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A matrix that must be invertible is (numerically) singular.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// Matching produced nothing estimable.
    #[error("no matches: {0}")]
    NoMatches(String),

    /// An iterative solver failed to converge.
    #[error("no convergence: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
