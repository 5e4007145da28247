use thiserror::Error;

/// Errors raised anywhere in the emulator stack.
#[derive(Debug, Error)]
pub enum SpuError {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (minimum eigenvalue {min_eigenvalue:.6e}); shift it with preprocess_non_psd or re-scale the problem")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacitance configuration is not realizable: {0}")]
    Unrealizable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("patch {index}: {source}")]
    Patch { index: usize, source: Box<SpuError> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SpuError>;

pub(crate) fn invalid(msg: impl Into<String>) -> SpuError {
    SpuError::InvalidParameter(msg.into())
}
