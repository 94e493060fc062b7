//! Baseline learners that ignore feedback.

use ctr_auction::learner::{Learner, RoundFeedback};
use ctr_auction::{AuctionError, ContextMatrix, Result, SimRng};
use rand::Rng;

/// The same estimate for every ad, so the auction ranks by bid alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCtr {
    pub value: f64,
}

impl Default for FixedCtr {
    fn default() -> Self {
        Self { value: 0.5 }
    }
}

pub fn baseline_fixed_ctr(value: f64, num_ads: usize) -> Vec<f64> {
    vec![value; num_ads]
}

impl Learner for FixedCtr {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        _rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        Ok(baseline_fixed_ctr(self.value, context.num_ads()))
    }

    fn observe(&mut self, _t: usize, _feedback: &RoundFeedback<'_>) -> Result<()> {
        Ok(())
    }
}

/// Fresh uniform estimates every round.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RandomCtr;

pub fn baseline_random_ctr(num_ads: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..num_ads).map(|_| rng.random::<f64>()).collect()
}

impl Learner for RandomCtr {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        Ok(baseline_random_ctr(context.num_ads(), rng))
    }

    fn observe(&mut self, _t: usize, _feedback: &RoundFeedback<'_>) -> Result<()> {
        Ok(())
    }
}

/// Makes `ad` win every round under unit bids: estimate 1 for `ad` and
/// `1 - 2^-40` elsewhere, so the winner pays almost its full bid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedWinner {
    pub ad: usize,
}

impl FixedWinner {
    pub fn estimates(&self, num_ads: usize) -> Result<Vec<f64>> {
        if self.ad >= num_ads {
            return Err(AuctionError::IndexOutOfRange {
                index: self.ad,
                len: num_ads,
            });
        }
        let mut est = vec![1.0 - 2f64.powi(-40); num_ads];
        est[self.ad] = 1.0;
        Ok(est)
    }
}

impl Learner for FixedWinner {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        _rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        self.estimates(context.num_ads())
    }

    fn observe(&mut self, _t: usize, _feedback: &RoundFeedback<'_>) -> Result<()> {
        Ok(())
    }
}
