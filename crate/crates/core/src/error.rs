use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-series")]
    EmptySeries,
    #[error("insufficient-samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("degenerate-times: no pair of samples with distinct times")]
    DegenerateTimes,
    #[error("too-large-for-exact: n = {0} exceeds 10")]
    TooLargeForExact(usize),
    #[error("ties-unsupported-exact")]
    TiesUnsupportedExact,
    #[error("no-linear-ground-truth: sawtooth profiles have no linear memory slope")]
    NoLinearGroundTruth,
    #[error("no-series-found in {0}")]
    NoSeriesFound(PathBuf),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::File {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
