//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for {n} nodes")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("edge ({i}, {i}) is a self-loop; self-loops are not representable")]
    SelfLoop { i: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("eigensolver did not converge: {diagnostics}")]
    EigenFailure { diagnostics: String },

    #[error("degenerate spectrum: smallest eigenvalue gap {gap:e} is below {tol:e}")]
    DegenerateSpectrum { gap: f64, tol: f64 },

    #[error("perturbation budget must lie in (0, 1], got {0}")]
    InvalidBudget(f64),

    #[error("non-finite {what}: {diagnostics}")]
    NonFinite { what: String, diagnostics: String },

    #[error("empty anchor set")]
    EmptyAnchors,

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for CLI reporting: 3 config, 4 data, 5 numeric.
    /// Usage errors (exit 2) are produced by the argument parser, not here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidBudget(_) | Error::EmptyAnchors => 3,
            Error::IndexOutOfRange { .. }
            | Error::SelfLoop { .. }
            | Error::ShapeMismatch { .. }
            | Error::Data(_)
            | Error::Io(_)
            | Error::Json(_) => 4,
            Error::EigenFailure { .. }
            | Error::DegenerateSpectrum { .. }
            | Error::NonFinite { .. }
            | Error::Numeric(_) => 5,
        }
    }
}
