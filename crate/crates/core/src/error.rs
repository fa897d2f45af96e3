use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("target column `{0}` not found")]
    MissingTarget(String),

    #[error("target column `{column}` must have exactly two distinct values, found {found}")]
    TargetNotBinary { column: String, found: usize },

    #[error("target column `{0}` has missing values")]
    TargetHasMissing(String),

    #[error("positive label `{label}` does not occur in target column `{column}`")]
    UnknownPositiveLabel { column: String, label: String },

    #[error("every feature column was dropped during preprocessing")]
    NoFeatures,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{partition} partition has no samples of class {class}")]
    MissingClass { partition: &'static str, class: u8 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {kind}: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
