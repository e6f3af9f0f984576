use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid permutation {0:?}: not a bijection on the axes")]
    InvalidPermutation(Vec<usize>),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("vertex index {index} out of range for dimension {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("invalid BV function: {0}")]
    InvalidBv(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
