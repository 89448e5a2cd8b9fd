use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported for this variant: {0}")]
    Unsupported(String),

    #[error("degenerate subspace: {0}")]
    DegenerateSubspace(String),

    #[error("subspace is not a graph over the chosen axis (condition number {condition:.3e})")]
    NotAGraph { condition: f64 },

    #[error("cone degeneracy: D_x f - G is singular")]
    ConeDegeneracy,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("window too long: log singular value spread {spread:.1} exceeds {limit}")]
    WindowTooLong { spread: f64, limit: f64 },

    #[error("infeasible conditioning: acceptance rate {rate:.2e} after {attempts} attempts")]
    InfeasibleConditioning { rate: f64, attempts: u64 },

    /// A runtime invariant (volume preservation, orthonormality) drifted past its bound.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("numeric failure at step {step}: {message}; state {state}")]
    Numeric {
        step: u64,
        message: String,
        state: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
