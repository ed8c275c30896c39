use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    /// Parameters failed validation; carries the offending Gaussian indices.
    #[error("validation error: {message} (indices {indices:?})")]
    Validation { message: String, indices: Vec<usize> },

    #[error("dataset view {view}: {message}")]
    DatasetView { view: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown vocabulary entry {0:?}")]
    UnknownVocabulary(String),

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("no floor Gaussians matched {queries:?}; set gravity manually")]
    NoFloor { queries: Vec<String> },

    #[error("CFL condition violated: dt*max|v| = {value:.3e} exceeds {limit:.3e} after subdivision")]
    Cfl { value: f64, limit: f64 },

    #[error("loss provider failed: {0}")]
    Provider(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Stable short code, used by the service layer and the CLI's stderr report.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Validation { .. } => "validation",
            Error::DatasetView { .. } => "dataset",
            Error::Contract(_) => "contract",
            Error::UnknownVocabulary(_) => "bad_query",
            Error::Diverged { .. } => "diverged",
            Error::Degenerate(_) => "degenerate",
            Error::NoFloor { .. } => "no_floor",
            Error::Cfl { .. } => "cfl",
            Error::Provider(_) => "provider",
            Error::Empty(_) => "empty",
            Error::Json(_) => "json",
        }
    }
}
