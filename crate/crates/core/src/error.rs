use std::io;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped by the CLI exit code they map to: usage problems,
/// format/IO problems, and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("need at least {required} singular values for the pilot windows, have {available}")]
    TooFewSingularValues { required: usize, available: usize },

    #[error(
        "imputation window overflows the spectrum (index {index} > {available}); use a smaller pilot k"
    )]
    ImputationOverflow { index: usize, available: usize },

    #[error("evaluation point {z} is not above the noise bulk (guard {guard})")]
    OutsideBulk { z: f64, guard: f64 },

    #[error("Lloyd iteration did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("rotation seed {found} does not match the decoding context ({expected})")]
    UnknownSeed { expected: u64, found: u64 },

    #[error("zero original: relative error undefined")]
    ZeroOriginal,

    #[error("operation requires synthetic ground truth")]
    NotSynthetic,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub(crate) fn mismatch(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Process exit code used by the CLI: 2 usage, 3 format, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::DimensionMismatch { .. }
            | Error::NotSynthetic
            | Error::NotPositiveDefinite(_) => 2,
            Error::Format { .. }
            | Error::UnsupportedVersion(_)
            | Error::Ingest { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 3,
            Error::NonFinite { .. }
            | Error::TooFewSingularValues { .. }
            | Error::ImputationOverflow { .. }
            | Error::OutsideBulk { .. }
            | Error::NonConvergence { .. }
            | Error::UnknownSeed { .. }
            | Error::ZeroOriginal => 4,
        }
    }
}
