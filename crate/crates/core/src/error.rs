use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("non-finite value produced by an update step (learning rate too large?)")]
    NumericOverflow,

    #[error("trajectory diverged at iteration {iteration}: {quantity} = {value:e}")]
    Divergence {
        iteration: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("numerical rank {found} is below the requested rank {expected}")]
    RankDeficient { expected: usize, found: usize },

    #[error("matrix is singular to working precision: {0}")]
    Singular(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::Validation(msg.into())
    }
}
