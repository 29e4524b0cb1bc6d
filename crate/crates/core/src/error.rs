use thiserror::Error;

/// Errors shared by the solver suite.
#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time index {index} out of range (grid has {len} points)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("terminal constraint violated: gap {gap}")]
    TerminalViolation { gap: f64 },

    #[error("constraint unsatisfiable: bracket expansion failed after {doublings} doublings")]
    UnsatisfiableConstraint { doublings: u32 },

    #[error("fixed point did not converge after {iterations} iterations (last residual {last_residual})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
