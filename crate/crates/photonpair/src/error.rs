//! Error taxonomy shared across the crate.
//!
//! Errors fall into four classes that map one-to-one onto CLI exit codes:
//! configuration (bad parameters or config files), format (malformed or
//! inconsistent data files, contract violations on inputs), numerical
//! (fits or solvers that cannot produce a result), and I/O.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or configuration documents.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed data files, mismatched headers, or inputs violating a
    /// documented contract (e.g. unsorted tag streams).
    #[error("format error: {0}")]
    Format(String),

    /// A fit or solver could not produce a usable result.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code for this error class (0 is success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Format(_) => 3,
            Error::Numerical(_) => 4,
            Error::Io(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
