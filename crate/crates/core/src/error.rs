use std::io;

use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("size error: {0}")]
    Size(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index {index} out of range for {len} entries")]
    Index { index: usize, len: usize },
    #[error("value {value} outside [{min}, {max}]")]
    Range { value: f64, min: f64, max: f64 },
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("format error: expected {expected}, found {found}")]
    Format { expected: String, found: String },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn format(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Format {
            expected: expected.into(),
            found: found.into(),
        }
    }
}
