use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("config key `{key}` (line {line}): {message}")]
    ConfigKey {
        key: String,
        line: usize,
        message: String,
    },

    #[error("numeric error: non-finite value {value} at parameter {index}")]
    Numeric { index: usize, value: f64 },

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("ingestion error in {}: offset {offset}: {message}", path.display())]
    Ingestion {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("scheduler error: {0}")]
    Scheduler(String),

    #[error("beta solver error: {0}")]
    Solver(String),

    #[error("staleness error: global iteration {j} equals basis iteration {i}")]
    Staleness { j: u64, i: u64 },

    #[error("report error: {0}")]
    Report(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the user's configuration rather than by a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::ConfigKey { .. })
    }
}
