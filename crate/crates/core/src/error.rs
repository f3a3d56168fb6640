use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("date {date} outside calendar [{start}, {end}]")]
    DateOutOfRange {
        date: chrono::NaiveDate,
        start: chrono::NaiveDate,
        end: chrono::NaiveDate,
    },

    #[error("covariance matrix not positive definite at leading minor {minor} (jitter up to {jitter:e})")]
    Factorization { minor: usize, jitter: f64 },

    #[error("grid of {cells} cells exceeds the dense simulation cap of {cap}")]
    CapExceeded { cells: usize, cap: usize },

    #[error("mean surface has no estimate at {} (cell, day-of-year) pairs, first: cell {} slot {}", .0.len(), .0[0].0, .0[0].1)]
    EstimationGap(Vec<(usize, usize)>),

    #[error("no complete neighborhoods: benchmark undefined")]
    NoCompleteNeighborhoods,

    #[error("validation needs {needed} cells per day but month {month} has only {available} missing cells")]
    InsufficientMissing {
        month: usize,
        needed: usize,
        available: usize,
    },

    #[error("truth is missing point_id {0}")]
    MissingTruth(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
