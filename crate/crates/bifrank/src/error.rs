//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// The CLI maps `Config` to exit code 2 and `Numeric` to exit code 3;
/// everything else is a plain failure.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad constants, unknown keys, malformed files.
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: shape mismatches, out-of-range arguments, infeasible inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// Numeric breakdown: non-finite values, failed factorizations.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A metric or capability was requested that the problem does not expose.
    #[error("capability error: {0}")]
    Capability(String),

    /// Data ingestion failure: unreadable file, malformed records over threshold.
    #[error("ingest error: {0}")]
    Ingest(String),

    /// I/O wrapper for CLI file handling.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numeric(_) => 3,
            _ => 1,
        }
    }
}
