//! Exponential weights over CTR predictors.
//!
//! The learner keeps `q_t(f) ∝ exp(-eta * sum_{s<t} loss_s(f))`, samples a
//! predictor from it each round and uses its predictions as the auction's CTR
//! estimates. Two loss estimators are supported:
//!
//! - **IPS**: `1{i_t = winner_f} / p(i_t) * (1 - c_t * smax_j b_j f_j / f_{i_t})`,
//!   where `p(i)` is the exact probability under `q_t` that ad `i` wins. Only
//!   available for finite classes, where `p` can be enumerated.
//! - **OptSq**: `(f_{i_t} - c_t)^2 / (4 eta) - smax_j b_j f_j`, a squared error
//!   minus the payment the predictor believes it would collect. The `SqAblation`
//!   variant drops the optimistic term.
//!
//! For finite classes sampling is exact ([`FiniteExpWeights`]). For the
//! sigmoid-linear class, [`SgldExpWeights`] approximately samples `q_t` with
//! stochastic gradient Langevin dynamics over the stored history.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::auction::max_smax;
use crate::error::{AuctionError, Result};
use crate::learner::{Learner, RoundFeedback};
use crate::predictors::{ContextMatrix, CtrPredictor, FiniteClass, SigmoidLinearPredictor};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Ips,
    #[serde(rename = "optsq")]
    OptSq,
    SqAblation,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Ips => "ips",
            Estimator::OptSq => "optsq",
            Estimator::SqAblation => "sq_ablation",
        }
    }
}

/// Feedback of a past round, kept for loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundObservation {
    pub context: Arc<ContextMatrix>,
    pub bids: Vec<f64>,
    pub winner: usize,
    pub clicked: bool,
}

impl RoundObservation {
    pub fn new(
        context: Arc<ContextMatrix>,
        bids: Vec<f64>,
        winner: usize,
        clicked: bool,
    ) -> Result<Self> {
        if bids.len() != context.num_ads() {
            return Err(AuctionError::Dimension {
                expected: context.num_ads(),
                got: bids.len(),
            });
        }
        if winner >= bids.len() {
            return Err(AuctionError::IndexOutOfRange {
                index: winner,
                len: bids.len(),
            });
        }
        Ok(Self {
            context,
            bids,
            winner,
            clicked,
        })
    }

    pub fn from_feedback(feedback: &RoundFeedback<'_>) -> Result<Self> {
        Self::new(
            Arc::clone(feedback.context),
            feedback.bids.to_vec(),
            feedback.winner,
            feedback.clicked,
        )
    }

    fn click(&self) -> f64 {
        if self.clicked {
            1.0
        } else {
            0.0
        }
    }
}

fn scores(bids: &[f64], preds: &[f64]) -> Result<Vec<f64>> {
    if bids.len() != preds.len() {
        return Err(AuctionError::Dimension {
            expected: bids.len(),
            got: preds.len(),
        });
    }
    Ok(bids.iter().zip(preds).map(|(b, f)| b * f).collect())
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(AuctionError::InvalidParameter(format!(
            "learning rate must lie in (0, 1], got {eta}"
        )));
    }
    Ok(())
}

/// IPS loss of the predictor whose round predictions are `preds`.
pub fn ips_loss(preds: &[f64], obs: &RoundObservation, p_winner: f64) -> Result<f64> {
    if !(p_winner > 0.0) || !p_winner.is_finite() {
        return Err(AuctionError::InvalidPropensity(p_winner));
    }
    let ms = max_smax(&scores(&obs.bids, preds)?)?;
    if ms.argmax != obs.winner {
        return Ok(0.0);
    }
    // With an all-zero score vector the price is zero, so the ratio is too.
    let ratio = if preds[obs.winner] > 0.0 {
        ms.smax / preds[obs.winner]
    } else {
        0.0
    };
    Ok((1.0 - obs.click() * ratio) / p_winner)
}

/// Optimistic squared error `(f_{i_t} - c)^2 / (4 eta) - smax_j b_j f_j`.
pub fn optsq_loss(preds: &[f64], obs: &RoundObservation, eta: f64) -> Result<f64> {
    let sq = sq_loss(preds, obs, eta)?;
    let ms = max_smax(&scores(&obs.bids, preds)?)?;
    Ok(sq - ms.smax)
}

/// The squared-error part alone, `(f_{i_t} - c)^2 / (4 eta)`.
pub fn sq_loss(preds: &[f64], obs: &RoundObservation, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    if preds.len() != obs.bids.len() {
        return Err(AuctionError::Dimension {
            expected: obs.bids.len(),
            got: preds.len(),
        });
    }
    let r = preds[obs.winner] - obs.click();
    Ok(r * r / (4.0 * eta))
}

/// Gradient of [`optsq_loss`] for a sigmoid-linear predictor:
/// `(f_{i_t} - c) / (2 eta) * df_{i_t} - b_k * df_k` with `k` the runner-up under
/// the lowest-index tie rule.
pub fn optsq_gradient(
    theta: &SigmoidLinearPredictor,
    obs: &RoundObservation,
    eta: f64,
) -> Result<Vec<f64>> {
    estimator_gradient(theta, obs, eta, Estimator::OptSq)
}

/// Gradient of the OptSq or squared-error loss with respect to the parameters.
pub fn estimator_gradient(
    theta: &SigmoidLinearPredictor,
    obs: &RoundObservation,
    eta: f64,
    estimator: Estimator,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; theta.params().len()];
    accumulate_estimator_gradient(theta, obs, eta, estimator, 1.0, &mut grad)?;
    Ok(grad)
}

fn accumulate_estimator_gradient(
    theta: &SigmoidLinearPredictor,
    obs: &RoundObservation,
    eta: f64,
    estimator: Estimator,
    scale: f64,
    out: &mut [f64],
) -> Result<()> {
    check_eta(eta)?;
    let ctx = &obs.context;
    let f_win = theta.predict(ctx, obs.winner)?;
    theta.accumulate_gradient(
        ctx,
        obs.winner,
        scale * (f_win - obs.click()) / (2.0 * eta),
        out,
    )?;
    match estimator {
        Estimator::OptSq => {
            let preds = theta.predict_all(ctx)?;
            let k = max_smax(&scores(&obs.bids, &preds)?)?.argsmax;
            theta.accumulate_gradient(ctx, k, -scale * obs.bids[k], out)?;
        }
        Estimator::SqAblation => {}
        Estimator::Ips => {
            return Err(AuctionError::Config(
                "the IPS estimator has no parametric gradient".into(),
            ))
        }
    }
    Ok(())
}

/// Cumulative estimated losses of a finite class plus the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteEwState {
    pub cumulative_losses: Vec<f64>,
    pub learning_rate: f64,
}

impl FiniteEwState {
    pub fn new(class_size: usize, learning_rate: f64) -> Result<Self> {
        if class_size == 0 {
            return Err(AuctionError::InvalidParameter(
                "empty predictor class".into(),
            ));
        }
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(AuctionError::InvalidParameter(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        Ok(Self {
            cumulative_losses: vec![0.0; class_size],
            learning_rate,
        })
    }

    /// Normalized sampling weights, shifted by the minimum loss before exponentiating.
    pub fn weights(&self) -> Vec<f64> {
        let min = self
            .cumulative_losses
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let mut w: Vec<f64> = self
            .cumulative_losses
            .iter()
            .map(|l| (-self.learning_rate * (l - min)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        for x in &mut w {
            *x /= total;
        }
        w
    }

    /// Inverse-CDF sample from the weights with `uniform_draw` in `[0, 1)`.
    pub fn sample(&self, uniform_draw: f64) -> usize {
        sample_categorical(&self.weights(), uniform_draw)
    }

    pub fn add_losses(&mut self, losses: &[f64]) {
        for (c, l) in self.cumulative_losses.iter_mut().zip(losses) {
            *c += l;
        }
    }
}

/// Smallest index whose cumulative weight exceeds `uniform_draw`.
pub fn sample_categorical(weights: &[f64], uniform_draw: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if uniform_draw < acc {
            return i;
        }
    }
    // Rounding left the total just under the draw: take the last positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Probability under `weights` that each ad wins the auction.
pub fn winner_probabilities<C: FiniteClass + ?Sized>(
    class: &C,
    weights: &[f64],
    context: &ContextMatrix,
    bids: &[f64],
) -> Result<Vec<f64>> {
    if weights.len() != class.len() {
        return Err(AuctionError::Dimension {
            expected: class.len(),
            got: weights.len(),
        });
    }
    let mut p = vec![0.0; context.num_ads()];
    let mut buf = Vec::with_capacity(context.num_ads());
    for (k, &q) in weights.iter().enumerate() {
        class.predict_into(k, context, &mut buf)?;
        let winner = max_smax(&scores(bids, &buf)?)?.argmax;
        p[winner] += q;
    }
    Ok(p)
}

/// Exact exponential weights over a finite class.
pub struct FiniteExpWeights<C> {
    class: C,
    state: FiniteEwState,
    estimator: Estimator,
    sampled: Option<usize>,
}

impl<C: FiniteClass> FiniteExpWeights<C> {
    pub fn new(class: C, learning_rate: f64, estimator: Estimator) -> Result<Self> {
        if estimator != Estimator::Ips {
            check_eta(learning_rate)?;
        }
        let state = FiniteEwState::new(class.len(), learning_rate)?;
        Ok(Self {
            class,
            state,
            estimator,
            sampled: None,
        })
    }

    pub fn state(&self) -> &FiniteEwState {
        &self.state
    }

    pub fn class(&self) -> &C {
        &self.class
    }

    /// Predictor index sampled for the current round.
    pub fn sampled(&self) -> Option<usize> {
        self.sampled
    }

    /// Loss estimate of every predictor for one observed round under the current weights.
    pub fn round_losses(&self, obs: &RoundObservation) -> Result<Vec<f64>> {
        let eta = self.state.learning_rate;
        let mut buf = Vec::with_capacity(obs.bids.len());
        let p_winner = match self.estimator {
            Estimator::Ips => {
                let p = winner_probabilities(
                    &self.class,
                    &self.state.weights(),
                    &obs.context,
                    &obs.bids,
                )?;
                p[obs.winner]
            }
            _ => 1.0,
        };
        (0..self.class.len())
            .map(|k| {
                self.class.predict_into(k, &obs.context, &mut buf)?;
                match self.estimator {
                    Estimator::Ips => ips_loss(&buf, obs, p_winner),
                    Estimator::OptSq => optsq_loss(&buf, obs, eta),
                    Estimator::SqAblation => sq_loss(&buf, obs, eta),
                }
            })
            .collect()
    }
}

impl<C: FiniteClass> Learner for FiniteExpWeights<C> {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        let k = self.state.sample(rng.random());
        self.sampled = Some(k);
        let mut preds = Vec::with_capacity(context.num_ads());
        self.class.predict_into(k, context, &mut preds)?;
        Ok(preds)
    }

    fn observe(&mut self, _t: usize, feedback: &RoundFeedback<'_>) -> Result<()> {
        let obs = RoundObservation::from_feedback(feedback)?;
        let losses = self.round_losses(&obs)?;
        self.state.add_losses(&losses);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgldConfig {
    pub learning_rate: f64,
    pub step_size: f64,
    pub steps_per_round: usize,
    /// Re-draw the chain's starting point every round instead of warm-starting.
    pub restart: bool,
    pub bound: f64,
    pub estimator: Estimator,
}

impl Default for SgldConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.25,
            step_size: 0.01,
            steps_per_round: 32,
            restart: false,
            bound: 1.0,
            estimator: Estimator::OptSq,
        }
    }
}

/// One Langevin step: a history index and a standard-normal noise vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SgldDraw {
    pub history_index: usize,
    pub noise: Vec<f64>,
}

/// Exponential weights over the sigmoid-linear class, sampled by SGLD.
///
/// At round `t >= 2` the chain runs `steps_per_round` updates
/// `theta <- clamp(theta - alpha * eta * grad loss_s(theta) + sqrt(2 alpha / t) * noise)`
/// with `s` uniform over past rounds, then predicts with the resulting `theta`.
#[derive(Debug, Clone)]
pub struct SgldExpWeights {
    config: SgldConfig,
    theta: Option<SigmoidLinearPredictor>,
    history: Vec<RoundObservation>,
}

impl SgldExpWeights {
    pub fn new(config: SgldConfig) -> Result<Self> {
        check_eta(config.learning_rate)?;
        if !(config.step_size > 0.0) {
            return Err(AuctionError::InvalidParameter(format!(
                "SGLD step size must be positive, got {}",
                config.step_size
            )));
        }
        if config.steps_per_round == 0 {
            return Err(AuctionError::InvalidParameter(
                "SGLD needs at least one step per round".into(),
            ));
        }
        if config.estimator == Estimator::Ips {
            return Err(AuctionError::Config(
                "the IPS estimator requires a finite predictor class".into(),
            ));
        }
        Ok(Self {
            config,
            theta: None,
            history: Vec::new(),
        })
    }

    /// Start from a given parameter vector instead of a random one.
    pub fn with_theta(mut self, theta: SigmoidLinearPredictor) -> Self {
        self.theta = Some(theta);
        self
    }

    pub fn config(&self) -> &SgldConfig {
        &self.config
    }

    pub fn theta(&self) -> Option<&SigmoidLinearPredictor> {
        self.theta.as_ref()
    }

    pub fn history(&self) -> &[RoundObservation] {
        &self.history
    }

    pub fn push_observation(&mut self, obs: RoundObservation) {
        self.history.push(obs);
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if self.history.is_empty() {
            return Err(AuctionError::State(format!(
                "round {t} needs past observations but the history is empty"
            )));
        }
        if self.history.len() != t - 1 {
            return Err(AuctionError::State(format!(
                "round {t} expects {} past observations, found {}",
                t - 1,
                self.history.len()
            )));
        }
        Ok(())
    }

    /// Apply one Langevin update at round `t`.
    pub fn sgld_step(&mut self, t: usize, draw: &SgldDraw) -> Result<()> {
        let theta = self
            .theta
            .as_mut()
            .ok_or_else(|| AuctionError::State("SGLD chain is not initialized".into()))?;
        let obs = self
            .history
            .get(draw.history_index)
            .ok_or(AuctionError::IndexOutOfRange {
                index: draw.history_index,
                len: self.history.len(),
            })?;
        if draw.noise.len() != theta.params().len() {
            return Err(AuctionError::Dimension {
                expected: theta.params().len(),
                got: draw.noise.len(),
            });
        }
        let cfg = &self.config;
        let mut grad = vec![0.0; theta.params().len()];
        accumulate_estimator_gradient(
            theta,
            obs,
            cfg.learning_rate,
            cfg.estimator,
            1.0,
            &mut grad,
        )?;
        let drift = cfg.step_size * cfg.learning_rate;
        let diffusion = (2.0 * cfg.step_size / t as f64).sqrt();
        for ((p, g), e) in theta.params_mut().iter_mut().zip(&grad).zip(&draw.noise) {
            *p += -drift * g + diffusion * e;
        }
        theta.clamp();
        Ok(())
    }

    /// Run a full round of updates from explicit draws (one per step).
    pub fn sgld_round_with_draws(&mut self, t: usize, draws: &[SgldDraw]) -> Result<()> {
        if t < 2 {
            return Ok(());
        }
        self.check_round(t)?;
        if draws.len() != self.config.steps_per_round {
            return Err(AuctionError::Dimension {
                expected: self.config.steps_per_round,
                got: draws.len(),
            });
        }
        for d in draws {
            self.sgld_step(t, d)?;
        }
        Ok(())
    }

    /// Run a full round of updates, drawing the history index then the noise for each step.
    pub fn sgld_round(&mut self, t: usize, rng: &mut SimRng) -> Result<()> {
        if t < 2 {
            return Ok(());
        }
        self.check_round(t)?;
        let dim = self
            .theta
            .as_ref()
            .map(|p| p.params().len())
            .ok_or_else(|| AuctionError::State("SGLD chain is not initialized".into()))?;
        for _ in 0..self.config.steps_per_round {
            let history_index = rng.random_range(0..self.history.len());
            let noise = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            self.sgld_step(
                t,
                &SgldDraw {
                    history_index,
                    noise,
                },
            )?;
        }
        Ok(())
    }
}

impl Learner for SgldExpWeights {
    fn propose(&mut self, t: usize, context: &ContextMatrix, rng: &mut SimRng) -> Result<Vec<f64>> {
        let needs_init = match &self.theta {
            None => true,
            Some(p) => p.dim() != context.dim() || self.config.restart,
        };
        if needs_init {
            self.theta = Some(SigmoidLinearPredictor::uniform(
                context.dim(),
                self.config.bound,
                rng,
            ));
        }
        self.sgld_round(t, rng)?;
        self.theta
            .as_ref()
            .expect("initialized above")
            .predict_all(context)
    }

    fn observe(&mut self, _t: usize, feedback: &RoundFeedback<'_>) -> Result<()> {
        self.history
            .push(RoundObservation::from_feedback(feedback)?);
        Ok(())
    }
}
