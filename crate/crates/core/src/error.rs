//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by constructors and numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A size limit would be exceeded (e.g. dense generator too large).
    #[error("capacity error: {0}")]
    Capacity(String),

    /// Inconsistent or malformed run parameters.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// A numerical routine failed to reach its accuracy target or produced
    /// a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// An exchange path does not apply to the supplied configuration.
    #[error("invalid path: {0}")]
    PathInvalid(String),

    /// Reading or writing an external artifact failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
