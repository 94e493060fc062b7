//! Second-price pay-per-click auction mechanics and regret bookkeeping.
//!
//! Each ad is scored by `bid * estimated_ctr`. The top score wins and pays, per
//! click, the runner-up score divided by its own estimated CTR. All arg-ties are
//! broken towards the lowest index, so with ties the runner-up score may equal
//! the winning score.

use serde::{Deserialize, Serialize};

use crate::error::{AuctionError, Result};

/// Result of [`max_smax`]: positions and values of the largest and second-largest entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxSmax {
    pub argmax: usize,
    pub argsmax: usize,
    pub max: f64,
    pub smax: f64,
}

/// Largest and second-largest entries with lowest-index tie-breaking.
pub fn max_smax(scores: &[f64]) -> Result<MaxSmax> {
    if scores.len() < 2 {
        return Err(AuctionError::TooFewEntries {
            min: 2,
            got: scores.len(),
        });
    }
    let mut argmax = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[argmax] {
            argmax = i;
        }
    }
    let mut argsmax = usize::MAX;
    for (i, &s) in scores.iter().enumerate() {
        if i == argmax {
            continue;
        }
        if argsmax == usize::MAX || s > scores[argsmax] {
            argsmax = i;
        }
    }
    Ok(MaxSmax {
        argmax,
        argsmax,
        max: scores[argmax],
        smax: scores[argsmax],
    })
}

/// Validated bid vector with entries in `[0, max_bid]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidVector(Vec<f64>);

impl BidVector {
    pub fn new(bids: Vec<f64>, max_bid: f64) -> Result<Self> {
        if bids.len() < 2 {
            return Err(AuctionError::TooFewEntries {
                min: 2,
                got: bids.len(),
            });
        }
        if let Some(b) = bids.iter().find(|b| !(0.0..=max_bid).contains(*b)) {
            return Err(AuctionError::InvalidParameter(format!(
                "bid {b} outside [0, {max_bid}]"
            )));
        }
        Ok(Self(bids))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Validated CTR vector (true or estimated) with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrVector(Vec<f64>);

impl CtrVector {
    pub fn new(ctrs: Vec<f64>) -> Result<Self> {
        if let Some(c) = ctrs.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(AuctionError::InvalidParameter(format!(
                "CTR {c} outside [0, 1]"
            )));
        }
        Ok(Self(ctrs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Winner, runner-up and per-click price of an auction, before the click is realized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub winner: usize,
    pub runner_up: usize,
    pub price_per_click: f64,
}

impl Allocation {
    /// Realize the click against the winner's true CTR: clicked iff `click_draw < winner_ctr`.
    pub fn settle(self, winner_ctr: f64, click_draw: f64) -> AuctionOutcome {
        let clicked = click_draw < winner_ctr;
        AuctionOutcome {
            winner: self.winner,
            runner_up: self.runner_up,
            price_per_click: self.price_per_click,
            clicked,
            payment: if clicked { self.price_per_click } else { 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub winner: usize,
    pub runner_up: usize,
    pub price_per_click: f64,
    pub clicked: bool,
    pub payment: f64,
}

/// Rank ads by `bids[i] * estimates[i]` and price the winner.
///
/// The price is evaluated as `bid_winner * (runner_up_score / winner_score)`, which
/// equals `runner_up_score / estimate_winner` but cannot round above the bid.
/// When every score is zero, ad 0 wins at price 0.
pub fn allocate(bids: &[f64], estimates: &[f64]) -> Result<Allocation> {
    if bids.len() != estimates.len() {
        return Err(AuctionError::Dimension {
            expected: bids.len(),
            got: estimates.len(),
        });
    }
    let scores: Vec<f64> = bids.iter().zip(estimates).map(|(b, r)| b * r).collect();
    let ms = max_smax(&scores)?;
    let price_per_click = if ms.max > 0.0 {
        assert!(
            estimates[ms.argmax] > 0.0,
            "positive winning score requires a positive estimate"
        );
        bids[ms.argmax] * (ms.smax / ms.max)
    } else {
        0.0
    };
    Ok(Allocation {
        winner: ms.argmax,
        runner_up: ms.argsmax,
        price_per_click,
    })
}

/// Run one auction and realize the click against the winner's true CTR.
pub fn run_auction(
    bids: &[f64],
    estimates: &[f64],
    winner_ctr: impl FnOnce(usize) -> f64,
    click_draw: f64,
) -> Result<AuctionOutcome> {
    let alloc = allocate(bids, estimates)?;
    Ok(alloc.settle(winner_ctr(alloc.winner), click_draw))
}

/// Expected revenue of the round when the true CTRs are used as estimates:
/// the second-largest `bid * ctr` product.
pub fn oracle_round_revenue(bids: &[f64], true_ctrs: &[f64]) -> Result<f64> {
    if bids.len() != true_ctrs.len() {
        return Err(AuctionError::Dimension {
            expected: bids.len(),
            got: true_ctrs.len(),
        });
    }
    let products: Vec<f64> = bids.iter().zip(true_ctrs).map(|(b, r)| b * r).collect();
    Ok(max_smax(&products)?.smax)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub oracle_revenue: f64,
    pub payment: f64,
}

/// Per-round oracle revenue and realized payment with the running regret.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    records: Vec<RoundRecord>,
    cumulative: Vec<f64>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(rounds: usize) -> Self {
        Self {
            records: Vec::with_capacity(rounds),
            cumulative: Vec::with_capacity(rounds),
        }
    }

    pub fn record(&mut self, oracle_revenue: f64, payment: f64) {
        debug_assert!(oracle_revenue >= 0.0 && payment >= 0.0);
        let next = self.cumulative_regret() + (oracle_revenue - payment);
        self.records.push(RoundRecord {
            oracle_revenue,
            payment,
        });
        self.cumulative.push(next);
    }

    pub fn cumulative_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Cumulative regret after `rounds` rounds (0 for `rounds == 0`).
    pub fn regret_at(&self, rounds: usize) -> Option<f64> {
        match rounds {
            0 => Some(0.0),
            r => self.cumulative.get(r - 1).copied(),
        }
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    /// Running regret after each round.
    pub fn cumulative_trace(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
