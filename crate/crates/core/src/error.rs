use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("row {row}, column '{column}': {message}")]
    Cell {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("invalid treatment {value} at row {row}: must be 0 or 1")]
    InvalidTreatment { row: usize, value: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty treatment arm t={0}")]
    EmptyArm(u8),

    #[error("rank-deficient normal equations (lambda = 0)")]
    RankDeficient,

    #[error("diverging coefficients in logistic regression (perfectly separated data?)")]
    DivergingCoefficients,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("singular covariance matrix")]
    SingularCovariance,

    #[error("model format: {0}")]
    Format(String),
}

/// Coarse classification used by the command-line front end to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::RankDeficient
            | Error::DivergingCoefficients
            | Error::NonFinite(_)
            | Error::SingularCovariance => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
