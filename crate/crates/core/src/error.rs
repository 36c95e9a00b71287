use thiserror::Error;

/// Errors produced by the processing, loss and metric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no known pixels")]
    NoKnownPixels,

    #[error("mask is empty")]
    EmptyMask,

    #[error("degenerate polygon")]
    DegeneratePolygon,

    #[error("no light content")]
    NoLightContent,

    #[error("no lights extracted")]
    NoLightsExtracted,

    #[error("covariance is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositiveSemiDefinite(f64),

    #[error("feature configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("malformed {format} data at byte {offset}: {message}")]
    Format {
        format: &'static str,
        offset: usize,
        message: String,
    },

    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dims_mismatch(expected: (usize, usize), actual: (usize, usize)) -> Error {
    Error::DimensionMismatch {
        expected: format!("{}x{}", expected.0, expected.1),
        actual: format!("{}x{}", actual.0, actual.1),
    }
}

pub(crate) fn format_error(format: &'static str, offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        format,
        offset,
        message: message.into(),
    }
}
