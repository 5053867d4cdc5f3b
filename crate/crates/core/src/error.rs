use thiserror::Error;

/// Errors produced by the game model, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input: shapes, partitions, caps.
    #[error("structural error: {0}")]
    Structural(String),

    /// A mathematical precondition of the requested operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Best-response dynamics hit the sweep limit.
    #[error("best-response dynamics did not converge after {sweeps} sweeps (last residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("efficiency undefined: {0}")]
    Undefined(String),

    #[error("verification failed:\n{0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
