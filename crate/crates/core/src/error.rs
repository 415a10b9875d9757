use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("prox solver did not converge after {iters} iterations (residual {residual:e})")]
    NonConverged {
        best: Vec<f64>,
        residual: f64,
        iters: usize,
    },

    #[error("enumeration of {size} index sequences exceeds the limit of {limit}")]
    StateSpaceTooLarge { size: u128, limit: u128 },

    #[error("differential privacy precondition failed: {0}")]
    PrivacyRefused(String),
}

pub type Result<T> = std::result::Result<T, Error>;
