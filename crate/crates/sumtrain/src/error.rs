//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input value. Maps to exit code 1 in the CLI.
    #[error("config error: {0}")]
    Config(String),

    /// Shape mismatch between operands.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine failed to converge or produced non-finite output.
    /// Maps to exit code 2 in the CLI.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A quantity is undefined for the given input (zero estimator, zero
    /// denominator). Callers tuning over a grid order these below every
    /// finite value.
    #[error("degenerate result: {0}")]
    Degenerate(String),

    /// Malformed file contents.
    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// Several validation errors reported together (config files are checked
    /// exhaustively, not fail-fast).
    #[error("{} validation error(s):\n{}", .0.len(), .0.join("\n"))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    /// CLI exit code contract: 1 for validation/config problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Degenerate(_) => 2,
            _ => 1,
        }
    }
}
