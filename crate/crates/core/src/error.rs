use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the detection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last})")]
    Convergence { iterations: usize, last: f64 },

    #[error("undefined value: {0}")]
    UndefinedValue(String),

    #[error("{what}: size {size} exceeds enumeration cap {cap}")]
    BudgetExceeded { what: String, size: u128, cap: u128 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed matrix file: {reason}")]
    Parse { path: PathBuf, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
