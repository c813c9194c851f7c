use std::path::PathBuf;

use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("overlap violated at time {time}: zero exposure probability for units {units:?}")]
    Overlap { time: usize, units: Vec<usize> },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("instance too large for enumeration: {dims} binary dimensions exceed the cap of {cap}")]
    EnumerationCap { dims: usize, cap: usize },

    #[error("potential outcome table has no entry for unit {unit}, time {time}, exposure {exposure}")]
    Completeness {
        unit: usize,
        time: usize,
        exposure: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 2,
            Error::Overlap { .. }
            | Error::Positivity(_)
            | Error::Assumption(_)
            | Error::Degenerate(_)
            | Error::Completeness { .. } => 3,
            Error::EnumerationCap { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
