use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the sampling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad indices, incompatible settings, out-of-range values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A symmetric positive-definite factorization failed even after jitter escalation.
    #[error("numerical error at theta = {theta:?}: {message}")]
    Numerical { theta: Vec<f64>, message: String },

    /// A transition kernel was started from an invalid state.
    #[error("kernel state error at sweep {sweep}, coordinate {coord}: {message}")]
    KernelState {
        sweep: usize,
        coord: usize,
        message: String,
    },

    /// Misuse of an estimator or aggregation routine.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data unsuitable for the requested analysis.
    #[error("data error: {0}")]
    Data(String),

    #[error("quadrature bounds too small: {0}")]
    BoundsTooSmall(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than by numerics or I/O.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Usage(_) | Error::Data(_) | Error::Parse(_) | Error::BoundsTooSmall(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::KernelState { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
