//! Error type shared by every module.

use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input failed validation (bad column, out-of-range parameter, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A row of an input file failed validation.
    #[error("validation error at line {line}: {message}")]
    Row { line: usize, message: String },

    /// No solution exists for the requested problem.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A numerical routine failed or produced an undefined quantity.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code associated with this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Row { .. } | Error::Csv(_) | Error::Json(_) => 2,
            Error::Io(_) => 2,
            Error::Infeasible(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
