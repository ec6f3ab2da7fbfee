use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SbaError>;

#[derive(Debug, Error)]
pub enum SbaError {
    #[error("bad file format: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("invalid value: {0}")]
    Value(String),
    #[error("i/o failure ({context}): {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("duplicate image id '{0}'")]
    Duplicate(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("rank deficient: {0}")]
    Rank(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("incomplete: {0}")]
    Incomplete(String),
}

impl SbaError {
    /// Stable class name, printed by the CLI in front of every error.
    pub fn class(&self) -> &'static str {
        match self {
            SbaError::Format(_) => "FormatError",
            SbaError::Corrupt(_) => "CorruptError",
            SbaError::Value(_) => "ValueError",
            SbaError::Io { .. } => "IoError",
            SbaError::Duplicate(_) => "DuplicateError",
            SbaError::Shape(_) => "ShapeError",
            SbaError::EmptyDataset(_) => "EmptyDatasetError",
            SbaError::Param(_) => "ParamError",
            SbaError::Rank(_) => "RankError",
            SbaError::Undefined(_) => "UndefinedError",
            SbaError::Incomplete(_) => "IncompleteError",
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        SbaError::Io {
            context: context.into(),
            source,
        }
    }
}
