use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Failures while reading a tabular dataset. Row numbers are 1-based.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no rows")]
    NoRows,

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: field {field} is not a finite number: {value:?}")]
    BadValue {
        row: usize,
        field: usize,
        value: String,
    },

    #[error("row {row}: label {label:?} is not a class index below {num_classes}")]
    BadLabel {
        row: usize,
        label: String,
        num_classes: usize,
    },

    #[error("row {row}: needs at least one feature and a label")]
    TooFewFields { row: usize },
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn protocol(msg: impl Into<String>) -> Error {
    Error::Protocol(msg.into())
}
