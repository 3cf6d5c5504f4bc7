use thiserror::Error;

/// Failures raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("kernel row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("kernel is not irreducible")]
    NotIrreducible,
    #[error("chain is not reversible: detailed balance residual {residual:e} at ({x}, {y})")]
    NotReversible { x: usize, y: usize, residual: f64 },
    #[error("bad reference direction: {0}")]
    BadReference(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("measure is not strictly positive (state {state})")]
    NotInterior { state: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("invalid trajectory: continuity residual {residual:e} on interval {interval}")]
    InvalidTrajectory { interval: usize, residual: f64 },
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("total masses differ: {m0} vs {m1}")]
    MassMismatch { m0: f64, m1: f64 },
    #[error("measure touches the boundary at state {state}")]
    BoundaryContact { state: usize },
    #[error("ray start is not strictly positive")]
    BoundaryStart,
    #[error("shooting failed: {0}")]
    ShootingFailed(String),
    #[error("trajectory carries no potentials")]
    NoPotentials,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
