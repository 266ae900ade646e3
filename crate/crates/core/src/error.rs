use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CiqError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CiqError {
    #[error("dimension mismatch: operator has dimension {expected}, vector has length {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("shift must be nonnegative, got {0}")]
    NegativeShift(f64),

    #[error("shift must be strictly positive, got {0}")]
    NonPositiveShift(f64),

    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("elliptic singularity: cn({u} | k') = {cn:e} is too close to a pole")]
    EllipticSingularity { u: f64, cn: f64 },

    #[error("start vector is zero")]
    ZeroVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: eigenvalue {index} is {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("matrix is not symmetric: |K[{i}][{j}] - K[{j}][{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("posterior covariance is not positive definite (diagonal entry {index} is {value:e}); increase the jitter")]
    NonPdPosterior { index: usize, value: f64 },

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(&'static str),

    #[error("degenerate gamma scale: {0} is zero")]
    DegenerateScale(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<CiqError>,
    },
}

impl CiqError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        CiqError::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        CiqError::InvalidArgument(message.into())
    }
}
