use lowrank_lab::LabError;

/// Command failures, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("diverged: {0}")]
    Divergence(String),
    #[error("property violated: {0}")]
    Violation(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Violation(_) => 4,
            CliError::Io(_) | CliError::Json(_) => 1,
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Divergence { .. } | LabError::NumericOverflow => {
                CliError::Divergence(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}
