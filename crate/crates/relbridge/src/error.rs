//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shape or extent mismatch between operands.
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller violated an operation's contract (e.g. stepping an optimizer
    /// before gradients exist).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A data invariant does not hold (duplicate primary key, misaligned
    /// feature blocks, ...).
    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// Loaded data does not match the release it claims to be.
    #[error("schema drift: {0}")]
    SchemaDrift(String),

    /// A cell failed to parse; coordinates are 1-based data rows.
    #[error("parse error in {source_name} at row {row}, column {column}: {message}")]
    Cell {
        source_name: String,
        row: usize,
        column: String,
        message: String,
    },

    /// Training aborted on a non-finite loss.
    #[error("non-finite loss at epoch {epoch} (loss = {loss}); gradient norms: {grad_norms:?}")]
    NonFinite {
        epoch: usize,
        loss: f64,
        grad_norms: Vec<(String, f64)>,
    },

    /// A chat client failed after its retry budget.
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("cache corrupt at line {line}: {message}")]
    CacheCorrupt { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }
}
