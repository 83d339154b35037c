use std::path::PathBuf;

use thiserror::Error;

use crate::model::FieldError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", join_fields(.0))]
    Config(Vec<FieldError>),

    #[error("calibration infeasible: {0}")]
    Calibration(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown city `{0}`")]
    UnknownCity(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("solver: {0}")]
    Solver(#[from] crate::selection::SolveError),

    /// An internal bookkeeping invariant was broken. Always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

fn join_fields(errs: &[FieldError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
