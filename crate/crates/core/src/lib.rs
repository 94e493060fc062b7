//! Learning click-through rates for contextual second-price pay-per-click auctions.
//!
//! An auctioneer that does not know the ads' true CTRs must supply CTR
//! estimates to a second-price auction and is paid only when the winner is
//! clicked. This crate provides the auction and regret accounting, CTR
//! predictor classes, exponential-weights learners (exact over finite classes,
//! SGLD over the sigmoid-linear class), an epsilon-greedy reduction to online
//! regression, and the environments used to evaluate them.

pub mod auction;
pub mod environments;
pub mod error;
pub mod exp_weights;
pub mod learner;
pub mod predictors;
pub mod regression;
pub mod rng;

pub use auction::{
    allocate, max_smax, oracle_round_revenue, run_auction, Allocation, AuctionOutcome, MaxSmax,
    RegretLedger,
};
pub use environments::{EnvironmentSpec, EnvironmentTrace, GroundTruth, Round};
pub use error::{AuctionError, Result};
pub use learner::{play_round, run_learner, Learner, RoundFeedback};
pub use predictors::{ContextMatrix, CtrPredictor, SigmoidLinearPredictor};
pub use rng::{substream, SimRng, Stream};
