use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("column `{0}` declared in schema but absent from the file header")]
    MissingColumn(String),
    #[error("unmapped categorical value `{value}` in column `{column}` (row {row})")]
    UnmappedCategory {
        column: String,
        value: String,
        row: usize,
    },
    #[error("non-numeric value `{value}` in column `{column}` (row {row})")]
    NotNumeric {
        column: String,
        value: String,
        row: usize,
    },
    #[error("non-binary target value `{value}` (row {row})")]
    NonBinaryTarget { value: String, row: usize },
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("both classes are required: {0}")]
    SingleClass(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected} columns, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("every column was removed by the sparsity filter")]
    AllColumnsRemoved,
    #[error("column `{0}` is entirely missing")]
    ColumnEntirelyMissing(String),
    #[error("missing cell in column `{column}` (row {row})")]
    MissingCell { column: String, row: usize },
    #[error("edge-case spec does not cover column `{0}`")]
    EdgeSpecMissing(String),
    #[error("generator fingerprint mismatch: {0}")]
    Leakage(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("feature sets differ between importance results")]
    MismatchedFeatures,
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
