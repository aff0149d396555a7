//! Error type shared across the crate.
//!
//! Variants map onto the CLI exit-code contract: configuration and
//! parameter problems exit with 2, numerical failures with 3, I/O with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, malformed definition files, mismatched grids.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A numerical procedure could not produce a meaningful result
    /// (degenerate fit, empty measurement region, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Exit code for the CLI contract (2 config, 3 numerical, 4 i/o).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Numerical(_) => 3,
            Error::Io(_) => 4,
            Error::Json(_) => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
