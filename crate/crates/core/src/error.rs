use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("exponent condition violated: {0}")]
    ExponentCondition(String),

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integrand returned NaN at {0}")]
    NanIntegrand(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("matrix is not positive semidefinite: worst eigenvalue {worst:e} below tolerance {tolerance:e}")]
    NotPsd { worst: f64, tolerance: f64 },

    #[error("cholesky factorization failed at maximum jitter {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
