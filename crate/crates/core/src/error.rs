use thiserror::Error;

/// Errors produced by the codec, container and kernel layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A weight entry is NaN or infinite.
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// A hyperparameter or configuration value is out of its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Operand shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Stored data fails validation (out-of-range code, bad checksum, truncation).
    #[error("corrupt data: {0}")]
    Corrupt(String),

    /// A file does not follow the expected layout (bad magic, bad header JSON).
    #[error("format error: {0}")]
    Format(String),

    /// Every candidate in a hyperparameter search failed.
    #[error("search failed: {0}")]
    Search(String),

    /// Benchmark strategies disagreed, so no timing is reported.
    #[error("benchmark outputs disagree: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn corrupt(msg: impl Into<String>) -> Self {
        Error::Corrupt(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
