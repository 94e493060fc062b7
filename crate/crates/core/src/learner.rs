//! The round protocol shared by every CTR learner.
//!
//! Per round the learner sees the context, commits to CTR estimates without
//! seeing the bids, the auction runs, and the learner receives the bids, the
//! winner and the click.

use std::sync::Arc;

use rand::Rng;

use crate::auction::{allocate, oracle_round_revenue, AuctionOutcome, RegretLedger};
use crate::environments::{EnvironmentTrace, Round};
use crate::error::{AuctionError, Result};
use crate::predictors::ContextMatrix;
use crate::rng::SimRng;

/// What the learner observes after the auction.
#[derive(Debug, Clone, Copy)]
pub struct RoundFeedback<'a> {
    pub context: &'a Arc<ContextMatrix>,
    pub bids: &'a [f64],
    pub winner: usize,
    pub clicked: bool,
}

pub trait Learner: Send {
    /// Estimated CTRs for every ad of round `t` (1-indexed).
    fn propose(&mut self, t: usize, context: &ContextMatrix, rng: &mut SimRng) -> Result<Vec<f64>>;

    fn observe(&mut self, t: usize, feedback: &RoundFeedback<'_>) -> Result<()>;
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn propose(&mut self, t: usize, context: &ContextMatrix, rng: &mut SimRng) -> Result<Vec<f64>> {
        (**self).propose(t, context, rng)
    }

    fn observe(&mut self, t: usize, feedback: &RoundFeedback<'_>) -> Result<()> {
        (**self).observe(t, feedback)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundResult {
    pub outcome: AuctionOutcome,
    pub oracle_revenue: f64,
    /// `true_ctr[winner] * price`, the payment averaged over the click.
    pub expected_payment: f64,
}

/// Play round `t`: propose, auction, click, feedback.
pub fn play_round<L: Learner + ?Sized>(
    learner: &mut L,
    t: usize,
    round: &Round,
    click_draw: f64,
    rng: &mut SimRng,
) -> Result<RoundResult> {
    let estimates = learner.propose(t, &round.context, rng)?;
    if estimates.len() != round.num_ads() {
        return Err(AuctionError::Dimension {
            expected: round.num_ads(),
            got: estimates.len(),
        });
    }
    if let Some(e) = estimates.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(AuctionError::InvalidParameter(format!(
            "estimated CTR {e} outside [0, 1]"
        )));
    }
    let alloc = allocate(&round.bids, &estimates)?;
    let winner_ctr = round.true_ctrs[alloc.winner];
    let outcome = alloc.settle(winner_ctr, click_draw);
    learner.observe(
        t,
        &RoundFeedback {
            context: &round.context,
            bids: &round.bids,
            winner: outcome.winner,
            clicked: outcome.clicked,
        },
    )?;
    Ok(RoundResult {
        outcome,
        oracle_revenue: oracle_round_revenue(&round.bids, &round.true_ctrs)?,
        expected_payment: winner_ctr * outcome.price_per_click,
    })
}

/// Run `learner` over the whole trace. Clicks use one uniform draw per round from
/// `click_rng`, so every learner facing the same trace sees the same draws.
pub fn run_learner<L: Learner + ?Sized>(
    learner: &mut L,
    trace: &EnvironmentTrace,
    click_rng: &mut SimRng,
    learner_rng: &mut SimRng,
) -> Result<RegretLedger> {
    let mut ledger = RegretLedger::with_capacity(trace.horizon());
    for (k, round) in trace.rounds().iter().enumerate() {
        let click_draw: f64 = click_rng.random();
        let r = play_round(learner, k + 1, round, click_draw, learner_rng)?;
        ledger.record(r.oracle_revenue, r.outcome.payment);
    }
    Ok(ledger)
}
