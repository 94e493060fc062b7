//! Epsilon-greedy exploration on top of an online regression oracle.
//!
//! The oracle only ever sees `(x_t, i_t, c_t)`: the context, the winning ad
//! and the click. Bids influence which ad wins but never reach the oracle.
//! Each round the learner plays the oracle's predictions, or with probability
//! `epsilon` a one-hot vector on a uniformly chosen ad (optionally mixed with
//! `sigma / 2` everywhere so the explored ad still pays a minimum price).
//!
//! [`dec_objective`] evaluates the decision-estimation gap of a finite
//! distribution over CTR vectors, used to check the epsilon-greedy bound
//! `2 * sqrt(N / gamma)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::max_smax;
use crate::error::{AuctionError, Result};
use crate::learner::{Learner, RoundFeedback};
use crate::predictors::{ContextMatrix, CtrPredictor, SigmoidLinearPredictor};
use crate::rng::SimRng;

/// Online squared-error regression over CTR predictors.
pub trait RegressionOracle: Send {
    /// Predictions of the current (proper) predictor for every ad.
    fn predict_all(&self, context: &ContextMatrix) -> Result<Vec<f64>>;

    fn observe(&mut self, context: &ContextMatrix, ad: usize, clicked: bool) -> Result<()>;
}

/// Gradient of `(f(x, ad) - c)^2` with respect to the predictor parameters.
pub fn squared_error_gradient(
    theta: &SigmoidLinearPredictor,
    context: &ContextMatrix,
    ad: usize,
    click: f64,
) -> Result<Vec<f64>> {
    let f = theta.predict(context, ad)?;
    let mut grad = vec![0.0; theta.params().len()];
    theta.accumulate_gradient(context, ad, 2.0 * (f - click), &mut grad)?;
    Ok(grad)
}

/// Projected online gradient descent on the squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OgdOracle {
    pub theta: SigmoidLinearPredictor,
    pub step: f64,
}

impl OgdOracle {
    pub fn new(theta: SigmoidLinearPredictor, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(AuctionError::InvalidParameter(format!(
                "OGD step must be positive, got {step}"
            )));
        }
        Ok(Self { theta, step })
    }

    /// Start from all-zero parameters.
    pub fn zeros(dim: usize, bound: f64, step: f64) -> Result<Self> {
        Self::new(SigmoidLinearPredictor::zeros(dim, bound), step)
    }

    pub fn ogd_update(&mut self, context: &ContextMatrix, ad: usize, click: f64) -> Result<()> {
        let grad = squared_error_gradient(&self.theta, context, ad, click)?;
        for (p, g) in self.theta.params_mut().iter_mut().zip(&grad) {
            *p -= self.step * g;
        }
        self.theta.clamp();
        Ok(())
    }
}

impl RegressionOracle for OgdOracle {
    fn predict_all(&self, context: &ContextMatrix) -> Result<Vec<f64>> {
        self.theta.predict_all(context)
    }

    fn observe(&mut self, context: &ContextMatrix, ad: usize, clicked: bool) -> Result<()> {
        self.ogd_update(context, ad, if clicked { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExplorationMode {
    OneHot,
    SigmaMixture { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplorationPolicy {
    pub epsilon: f64,
    pub mode: ExplorationMode,
}

impl ExplorationPolicy {
    pub fn new(epsilon: f64, mode: ExplorationMode) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(AuctionError::InvalidParameter(format!(
                "epsilon must lie in [0, 1], got {epsilon}"
            )));
        }
        if let ExplorationMode::SigmaMixture { sigma } = mode {
            if !(sigma > 0.0 && sigma <= 1.0) {
                return Err(AuctionError::InvalidParameter(format!(
                    "sigma must lie in (0, 1], got {sigma}"
                )));
            }
        }
        Ok(Self { epsilon, mode })
    }

    pub fn one_hot(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, ExplorationMode::OneHot)
    }
}

/// Greedy predictions, or an exploration vector on `ad_draw` when `explore_draw < epsilon`.
pub fn choose_estimates(
    policy: &ExplorationPolicy,
    greedy: &[f64],
    explore_draw: f64,
    ad_draw: usize,
) -> Result<Vec<f64>> {
    let n = greedy.len();
    if n < 2 {
        return Err(AuctionError::TooFewEntries { min: 2, got: n });
    }
    if ad_draw >= n {
        return Err(AuctionError::IndexOutOfRange {
            index: ad_draw,
            len: n,
        });
    }
    if explore_draw >= policy.epsilon {
        return Ok(greedy.to_vec());
    }
    Ok(match policy.mode {
        ExplorationMode::OneHot => {
            let mut e = vec![0.0; n];
            e[ad_draw] = 1.0;
            e
        }
        ExplorationMode::SigmaMixture { sigma } => {
            let mut e = vec![sigma / 2.0; n];
            e[ad_draw] = 1.0;
            e
        }
    })
}

/// The epsilon grid `{1, 2, 4} * T^(-1/3)`, capped at 1.
pub fn epsilon_grid(horizon: usize) -> [f64; 3] {
    let base = (horizon.max(1) as f64).powf(-1.0 / 3.0);
    [base, 2.0 * base, 4.0 * base].map(|e| e.min(1.0))
}

/// `T^(-1/3) * (N * reg_sq)^(1/3)`, capped at 1.
pub fn epsilon_formula(horizon: usize, num_ads: usize, reg_sq: f64) -> Result<f64> {
    if horizon == 0 || !(reg_sq >= 0.0) {
        return Err(AuctionError::InvalidParameter(format!(
            "epsilon formula needs T > 0 and Reg_Sq >= 0, got T = {horizon}, Reg_Sq = {reg_sq}"
        )));
    }
    Ok(((num_ads as f64 * reg_sq) / horizon as f64).cbrt().min(1.0))
}

/// Epsilon-greedy learner driven by a regression oracle.
pub struct EpsilonGreedy<O> {
    oracle: O,
    policy: ExplorationPolicy,
    explored: bool,
}

impl<O: RegressionOracle> EpsilonGreedy<O> {
    pub fn new(oracle: O, policy: ExplorationPolicy) -> Self {
        Self {
            oracle,
            policy,
            explored: false,
        }
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn policy(&self) -> &ExplorationPolicy {
        &self.policy
    }

    /// Whether the last proposal was an exploration vector.
    pub fn explored(&self) -> bool {
        self.explored
    }
}

impl<O: RegressionOracle> Learner for EpsilonGreedy<O> {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        let greedy = self.oracle.predict_all(context)?;
        let explore_draw: f64 = rng.random();
        let ad_draw = rng.random_range(0..context.num_ads());
        self.explored = explore_draw < self.policy.epsilon;
        choose_estimates(&self.policy, &greedy, explore_draw, ad_draw)
    }

    fn observe(&mut self, _t: usize, feedback: &RoundFeedback<'_>) -> Result<()> {
        self.oracle
            .observe(feedback.context, feedback.winner, feedback.clicked)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecInstance {
    pub rho: Vec<f64>,
    pub bids: Vec<f64>,
    pub rho_hat: Vec<f64>,
    pub gamma: f64,
}

impl DecInstance {
    pub fn new(rho: Vec<f64>, bids: Vec<f64>, rho_hat: Vec<f64>, gamma: f64) -> Result<Self> {
        let n = rho.len();
        for len in [bids.len(), rho_hat.len()] {
            if len != n {
                return Err(AuctionError::Dimension {
                    expected: n,
                    got: len,
                });
            }
        }
        if !(gamma >= 0.0) {
            return Err(AuctionError::InvalidParameter(format!(
                "gamma must be non-negative, got {gamma}"
            )));
        }
        Ok(Self {
            rho,
            bids,
            rho_hat,
            gamma,
        })
    }
}

/// `E_Q[smax(b rho) - rho_{i*} smax(b q) / q_{i*} - gamma (rho_{i*} - rho_hat_{i*})^2]`
/// with `i* = argmax(b q)` under the auction's tie rule.
pub fn dec_objective(instance: &DecInstance, q: &[(f64, Vec<f64>)]) -> Result<f64> {
    let total: f64 = q.iter().map(|(w, _)| w).sum();
    if q.is_empty() || q.iter().any(|(w, _)| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(AuctionError::InvalidParameter(format!(
            "Q must be a probability distribution, weights sum to {total}"
        )));
    }
    let b = &instance.bids;
    let rho = &instance.rho;
    let oracle: Vec<f64> = b.iter().zip(rho).map(|(b, r)| b * r).collect();
    let oracle = max_smax(&oracle)?.smax;
    let mut value = 0.0;
    let mut scores = Vec::with_capacity(b.len());
    for (w, est) in q {
        if est.len() != b.len() {
            return Err(AuctionError::Dimension {
                expected: b.len(),
                got: est.len(),
            });
        }
        scores.clear();
        scores.extend(b.iter().zip(est).map(|(b, e)| b * e));
        let ms = max_smax(&scores)?;
        let i = ms.argmax;
        let payment = if est[i] > 0.0 {
            rho[i] * ms.smax / est[i]
        } else {
            0.0
        };
        let err = rho[i] - instance.rho_hat[i];
        value += w * (oracle - payment - instance.gamma * err * err);
    }
    Ok(value)
}

/// Weight `1 - epsilon` on `rho_hat` and `epsilon / N` on each one-hot vector.
pub fn eps_greedy_dec_distribution(rho_hat: &[f64], epsilon: f64) -> Result<Vec<(f64, Vec<f64>)>> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(AuctionError::InvalidParameter(format!(
            "epsilon must lie in (0, 1], got {epsilon}"
        )));
    }
    let n = rho_hat.len();
    let mut q = Vec::with_capacity(n + 1);
    if epsilon < 1.0 {
        q.push((1.0 - epsilon, rho_hat.to_vec()));
    }
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        q.push((epsilon / n as f64, e));
    }
    Ok(q)
}
