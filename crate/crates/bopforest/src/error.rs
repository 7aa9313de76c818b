use thiserror::Error;

/// Errors produced while loading data, fitting forests, or building intervals.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("target column '{0}' not found in header")]
    MissingTarget(String),

    #[error("unparseable target value '{value}' at data row {row}")]
    UnparseableTarget { row: usize, value: String },

    #[error("no rows left after dropping rows with missing values")]
    EmptyAfterDrop,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{0}")]
    InvalidInput(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("model serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("unsupported model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;
