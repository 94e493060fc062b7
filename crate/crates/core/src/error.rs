use thiserror::Error;

/// Errors produced by the auction, learner and environment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("need at least {min} entries, got {got}")]
    TooFewEntries { min: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("propensity must be positive, got {0}")]
    InvalidPropensity(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("enumeration needs {required} predictors but the budget is {budget}")]
    Capacity { required: u128, budget: u128 },

    #[error("invalid learner state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ground-truth fit diverged at epoch {epoch}: loss {before} -> {after}")]
    FitDiverged {
        epoch: usize,
        before: f64,
        after: f64,
    },

    #[error("malformed trace: {0}")]
    Trace(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AuctionError {
    fn from(e: std::io::Error) -> Self {
        AuctionError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AuctionError>;
