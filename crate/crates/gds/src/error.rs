use std::path::PathBuf;

use thiserror::Error;

/// Error variants shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a documented precondition (shape, range, invariant).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operand dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The adjacency pattern is not connected.
    #[error("graph not connected")]
    NotConnected,

    /// Malformed or inconsistent data files.
    #[error("data error: {0}")]
    Data(String),

    /// An iterative routine diverged or produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File I/O failure, annotated with the offending path.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 2 for data problems, 3 for numerical failures.
    /// Usage errors (exit 1) are handled by the argument parser.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
