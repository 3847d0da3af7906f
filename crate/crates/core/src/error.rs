use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("cannot fill {requested} modes on a grid with {available} points")]
    CannotFill { requested: usize, available: usize },

    #[error("no chemical potential bracket: {0}")]
    NoBracket(String),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("orbitals are not orthonormal (defect {defect:.3e})")]
    NotOrthonormal { defect: f64 },

    #[error("operator is not a projection (defect {defect:.3e})")]
    NotProjection { defect: f64 },

    #[error("negative density {value:.3e} at point {index}")]
    NegativeDensity { index: usize, value: f64 },

    #[error("Krylov breakdown: {0}")]
    KrylovBreakdown(String),

    #[error("propagation failed at t = {time}: {reason}")]
    Propagation { time: f64, reason: String },

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
