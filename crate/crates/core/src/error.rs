use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {value} outside the domain [0, 1]")]
    Domain { value: f64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate parameterization: {0}")]
    DegenerateParameterization(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    #[error("linear system is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
