use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input whose range collapses to a point where a formula needs a non-zero span.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A metric whose defining formula has no value for the given arguments.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("output directory {0} already exists (use --force to overwrite)")]
    OutputExists(PathBuf),

    #[error("run failed: {0}")]
    RunFailed(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
