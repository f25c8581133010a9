use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents: bad magic, truncated payload, unknown version.
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed file with invalid values. `row` is 0-based when known.
    #[error("data error{}: {message}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Data { row: Option<usize>, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("non-finite value at iteration {iteration}: {message}")]
    Numerics { iteration: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate bootstrap sample in replicate {replicate}: {message}")]
    DegenerateSample { replicate: usize, message: String },

    #[error("incomplete grid, missing cells: {}", missing.join(", "))]
    IncompleteGrid { missing: Vec<String> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(message: impl Into<String>) -> Self {
        Error::Data {
            row: None,
            message: message.into(),
        }
    }

    pub(crate) fn data_at(row: usize, message: impl Into<String>) -> Self {
        Error::Data {
            row: Some(row),
            message: message.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by the caller's configuration rather than by
    /// the data or runtime.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
