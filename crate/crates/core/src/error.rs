//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by simulation, design and reconstruction routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical or configuration parameter is out of range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A matrix that must be a density operator fails validation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// The measurement frame is rank deficient; reconstruction would
    /// amplify noise without bound.
    #[error("ill-conditioned measurement frame: {0}")]
    IllConditioned(String),

    /// A numerical routine failed to produce a finite answer.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Input data could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
