use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the recovery pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("domain has no active cells")]
    DomainEmpty,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("cannot draw {requested} distinct stations from {available} cells with positive mass")]
    InsufficientSupport { requested: usize, available: usize },

    #[error("field has zero total mass; sampling distribution is undefined")]
    DegenerateField,

    #[error("triangle {index} is degenerate (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("covariates are collinear: {0}")]
    CollinearCovariates(String),

    #[error("covariate column `{0}` is degenerate")]
    DegenerateCovariate(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("station {station} has negative volume {volume}")]
    InfeasibleVolume { station: usize, volume: f64 },

    #[error("no cells have truth above the evaluation floor {floor:e}")]
    NoEvaluableCells { floor: f64 },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while computing.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::Schema { .. }
                | Error::Config(_)
                | Error::ShapeMismatch(_)
                | Error::DomainEmpty
                | Error::InvalidValue(_)
                | Error::DegenerateCovariate(_)
                | Error::InsufficientSupport { .. }
                | Error::Io { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
