use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("penalty factor must be positive and finite, got {0}")]
    InvalidPenalty(f64),

    #[error("eigenphase {phase} lies on the logarithm branch cut")]
    BranchCut { phase: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {0})")]
    NotPositive(f64),

    #[error("unitarity lost during propagation (defect {defect:.3e} at step {step}); increase the step count")]
    UnitarityBlowup { defect: f64, step: usize },

    #[error("trace drifted by {0:.3e} during master-equation integration")]
    TraceDrift(f64),

    #[error("initial state is not pure (purity {0})")]
    MixedState(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
