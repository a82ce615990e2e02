use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration; the message names the offending key or field.
    #[error("config error: {0}")]
    InvalidConfig(String),

    /// Two cell fields were combined but live on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The requested gradient method cannot handle the configured objective.
    #[error("unsupported objective: {0}")]
    UnsupportedObjective(String),

    /// Explicit-scheme stability bound violated.
    #[error("CFL violation: dt*max|v|/dx = {ratio} > 1 (dt = {dt}, dx = {dx})")]
    CflViolation { dt: f64, dx: f64, ratio: f64 },

    /// A streaming visitor aborted the simulation.
    #[error("visitor failed at particle {n}, step {m}: {message}")]
    Visitor { n: usize, m: usize, message: String },

    /// A runtime sanity guard tripped (divergence, non-finite values, ...).
    #[error("numerical guard tripped: {0}")]
    NumericalGuard(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
