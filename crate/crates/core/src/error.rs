use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("covariance matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e})")]
    SingularCovariance { min_eigenvalue: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("divergence undefined for r = {r} (needs r >= 2)")]
    UndefinedDivergence { r: usize },

    #[error("contrastive gap {0} is infeasible (must lie in [0, 2])")]
    InfeasibleGap(f64),

    #[error("degenerate encoder: {0}")]
    DegenerateEncoder(String),

    #[error("closed forms disagree for {what}: {first} vs {second}")]
    CrossCheck {
        what: &'static str,
        first: f64,
        second: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
