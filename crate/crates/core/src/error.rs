use thiserror::Error;

#[derive(Debug, Error)]
pub enum OrensError {
    #[error("invalid dimension {0}: must be between 1 and {max}", max = crate::consts::MAX_DIM)]
    InvalidDimension(usize),

    #[error("Fock index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("truncation leakage {leakage:.3e} exceeds {tolerance:.1e}; raise the dimension above {dim}")]
    Truncation {
        leakage: f64,
        tolerance: f64,
        dim: usize,
    },

    #[error("invalid phase-space grid: {0}")]
    InvalidGrid(String),

    #[error("invalid measurement plan: {0}")]
    InvalidPlan(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("measurement matrix of plan '{plan}' is singular")]
    SingularSystem { plan: String },

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("integration did not converge: step halving changed the result by {diff:.3e}; reduce dt")]
    Accuracy { diff: f64 },

    #[error("{0} is not invertible")]
    NonInvertible(String),

    #[error("data does not match plan: {0}")]
    DataMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OrensError>;
