use std::io;

/// Errors raised anywhere in the simulator.
///
/// Variants are grouped by the stage that detects them so callers (the CLI in
/// particular) can map them onto stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A value violates a documented precondition (non-positive rate,
    /// out-of-range label, temperature <= 0, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Shapes or parameter sets do not line up.
    #[error("structural error: {0}")]
    Structural(String),

    /// CSV ingestion failed. `row` is the 1-based data row (header excluded).
    #[error("ingestion error at data row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    /// File-level ingestion problems that have no cell coordinates.
    #[error("ingestion error: {0}")]
    Schema(String),

    #[error("preprocessing error: {0}")]
    Preprocess(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("partition error: {0}")]
    Partition(String),

    /// Federation protocol failure; `step` names the round step that failed.
    #[error("protocol error during {step}: {message}")]
    Protocol { step: String, message: String },

    #[error("ROC undefined: {0}")]
    RocUndefined(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn protocol(step: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Protocol {
            step: step.into(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Protocol { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
