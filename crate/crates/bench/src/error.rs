use ctr_auction::AuctionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Rejected before any run started.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Auction(#[from] AuctionError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code: 2 for configuration problems, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
