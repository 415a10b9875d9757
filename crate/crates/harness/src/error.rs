use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] wcopt::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("acceptance failed: {0}")]
    Acceptance(String),
}

impl HarnessError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        HarnessError::Validation(vec![msg.into()])
    }

    /// Process exit code: 1 validation, 2 prox nonconvergence, 3 acceptance.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(wcopt::Error::NonConverged { .. }) => 2,
            HarnessError::Acceptance(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
