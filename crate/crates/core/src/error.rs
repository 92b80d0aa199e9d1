use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the validity range of a model or operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure during a computation that should have succeeded.
    #[error("computation error: {0}")]
    Computation(String),

    /// Image with no dynamic range (1st and 99th percentile coincide).
    #[error("degenerate image: percentile range collapsed at {0}")]
    DegenerateImage(f64),

    /// Metric undefined for the given inputs (e.g. single-class AUROC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Non-finite loss or parameters while training.
    #[error("training error: {0}")]
    Training(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error comes from bad data/files rather than numerics or usage.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Format(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Image { .. }
                | Error::DegenerateImage(_)
        )
    }

    pub fn is_numerical_error(&self) -> bool {
        matches!(
            self,
            Error::Computation(_) | Error::Training(_) | Error::UndefinedMetric(_) | Error::Domain(_)
        )
    }
}
