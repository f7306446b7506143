use thiserror::Error;

/// Errors raised by the geometry, dynamics and optimization layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is numerically singular")]
    SingularMatrix,

    #[error("log singular vector is not nonincreasing at index {index}")]
    NotOrdered { index: usize },

    #[error("barycenter iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("map does not preserve volume at cell {cell}: det = {det}")]
    VolumeNotPreserved { cell: usize, det: f64 },

    #[error("tangent condition violated at cell {cell}: tr(G^-1 h) = {residual:.3e}")]
    TangencyViolated { cell: usize, residual: f64 },

    #[error("field value at cell {cell} is not in M_omega: det = {det}")]
    NotInMetricSpace { cell: usize, det: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("spectral gap violated at cell {cell} for k = {k}")]
    SpectralGapViolated { cell: usize, k: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
