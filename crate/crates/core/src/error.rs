use std::io;

use thiserror::Error;

pub type Result<T, E = LsmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LsmError {
    #[error("invalid configuration: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("normal equations are rank deficient (pivot {pivot} at column {column}); use lambda > 0")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("target variance is zero; nmse is undefined")]
    DegenerateVariance,

    #[error("model has no trained readout")]
    Untrained,

    #[error("model has no state cache; train with caching enabled to retrain without inference")]
    MissingCache,

    #[error("unsupported format version {0:?}")]
    UnsupportedVersion(String),

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("inconsistent dimensions in model file: {0}")]
    Dimension(String),

    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LsmError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        LsmError::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        LsmError::Config {
            field,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerical method itself, as opposed to bad
    /// input data or malformed files.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            LsmError::RankDeficient { .. } | LsmError::DegenerateVariance | LsmError::NonFinite(_)
        )
    }
}
