//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by structure validation, projection, solvers, and I/O.
#[derive(Debug, Error)]
pub enum TvcsError {
    /// A structure failed validation; the messages name the offending
    /// groups and indices.
    #[error("invalid structure: {}", .0.join("; "))]
    InvalidStructure(Vec<String>),

    /// A vector length does not match the expected dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An input value is outside its documented domain.
    #[error("invalid value: {0}")]
    InvalidValue(String),

    /// The feasibility solver hit its iteration cap before the rounded
    /// candidate could be certified. Carries the last iterate so callers
    /// can inspect how far the run got.
    #[error(
        "projection did not converge within {iterations} iterations \
         (penalty {penalty:.3e}, max deviation from binary {max_deviation:.3e})"
    )]
    DidNotConverge {
        iterations: usize,
        penalty: f64,
        max_deviation: f64,
        last_x: Vec<f64>,
        last_y: Vec<f64>,
    },

    /// An exhaustive enumeration guard was exceeded.
    #[error("enumeration too large: {what} = {size} exceeds cap {cap}")]
    EnumerationTooLarge {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TvcsError>;
