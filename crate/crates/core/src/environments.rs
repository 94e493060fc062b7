//! Environments: the synthetic contextual dataset, the two-elevated-ads hard
//! instance, a stationary non-contextual instance, and trace files.
//!
//! A trace is a pure function of its [`EnvironmentSpec`] and master seed, and
//! stores the true CTR of every ad in every round next to the bids and
//! contexts, so learners can be replayed on it without regenerating.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::oracle_round_revenue;
use crate::error::{AuctionError, Result};
use crate::predictors::{ContextMatrix, CtrPredictor, PredictorRecord, SigmoidLinearPredictor};
use crate::rng::{substream, uniform_in, SimRng, Stream, RNG_ALGORITHM};

/// Synthetic contextual dataset with a fitted sigmoid-linear ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub dim: usize,
    pub horizon: usize,
    pub num_ads_range: (usize, usize),
    pub bid_range: (f64, f64),
    pub max_bid: f64,
    pub fake_ctr_range: (f64, f64),
    /// Bid given to the ad with the lowest true CTR in every round.
    pub lowest_ctr_bid_override: f64,
    pub bound: f64,
    pub fit_epochs: usize,
    pub fit_step: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            horizon: 10_000,
            num_ads_range: (5, 10),
            bid_range: (0.1, 1.0),
            max_bid: 1.0,
            fake_ctr_range: (0.2, 1.0),
            lowest_ctr_bid_override: 1.0,
            bound: 1.0,
            fit_epochs: 200,
            fit_step: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(AuctionError::Config(m));
        if self.horizon == 0 {
            return fail("horizon must be positive".into());
        }
        if self.dim == 0 {
            return fail("feature dimension must be positive".into());
        }
        let (nl, nh) = self.num_ads_range;
        if nl < 2 || nl > nh {
            return fail(format!(
                "num_ads_range must satisfy 2 <= low <= high, got ({nl}, {nh})"
            ));
        }
        let (bl, bh) = self.bid_range;
        if !(bl > 0.0 && bl <= bh && bh <= self.max_bid) {
            return fail(format!(
                "bid_range must satisfy 0 < low <= high <= max_bid = {}, got ({bl}, {bh})",
                self.max_bid
            ));
        }
        if !(self.lowest_ctr_bid_override > 0.0 && self.lowest_ctr_bid_override <= self.max_bid) {
            return fail(format!(
                "lowest_ctr_bid_override must lie in (0, max_bid], got {}",
                self.lowest_ctr_bid_override
            ));
        }
        let (cl, ch) = self.fake_ctr_range;
        if !(0.0..=1.0).contains(&cl) || !(0.0..=1.0).contains(&ch) || cl > ch {
            return fail(format!(
                "fake_ctr_range must lie in [0, 1], got ({cl}, {ch})"
            ));
        }
        if !(self.bound > 0.0) {
            return fail(format!(
                "parameter bound must be positive, got {}",
                self.bound
            ));
        }
        if !(self.fit_step > 0.0) {
            return fail(format!("fit_step must be positive, got {}", self.fit_step));
        }
        Ok(())
    }
}

/// Non-contextual instance with fixed CTRs drawn once and fresh bids each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationaryConfig {
    pub num_ads: usize,
    pub horizon: usize,
    pub ctr_range: (f64, f64),
    pub bid_range: (f64, f64),
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self {
            num_ads: 2,
            horizon: 2000,
            ctr_range: (0.2, 1.0),
            bid_range: (0.1, 1.0),
        }
    }
}

/// Which environment to build; serialized into trace headers and run outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    Synthetic(SyntheticConfig),
    HardInstance { num_ads: usize, horizon: usize },
    Stationary(StationaryConfig),
}

impl EnvironmentSpec {
    pub fn horizon(&self) -> usize {
        match self {
            EnvironmentSpec::Synthetic(c) => c.horizon,
            EnvironmentSpec::HardInstance { horizon, .. } => *horizon,
            EnvironmentSpec::Stationary(c) => c.horizon,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<EnvironmentTrace> {
        match self {
            EnvironmentSpec::Synthetic(c) => generate_synthetic(c, seed),
            EnvironmentSpec::HardInstance { num_ads, horizon } => {
                hard_instance(*num_ads, *horizon, seed)
            }
            EnvironmentSpec::Stationary(c) => stationary_instance(c, seed),
        }
    }
}

/// Hidden truth behind a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Contextual {
        predictor: PredictorRecord,
    },
    Fixed {
        rho: Vec<f64>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        elevated: Option<(usize, usize)>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        epsilon_gap: Option<f64>,
    },
}

/// One round as seen by the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub context: Arc<ContextMatrix>,
    pub bids: Vec<f64>,
    pub true_ctrs: Vec<f64>,
}

impl Round {
    pub fn num_ads(&self) -> usize {
        self.bids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentTrace {
    seed: u64,
    spec: EnvironmentSpec,
    truth: GroundTruth,
    rounds: Vec<Round>,
}

impl EnvironmentTrace {
    pub fn new(
        seed: u64,
        spec: EnvironmentSpec,
        truth: GroundTruth,
        rounds: Vec<Round>,
    ) -> Result<Self> {
        for (k, r) in rounds.iter().enumerate() {
            let n = r.context.num_ads();
            if r.bids.len() != n || r.true_ctrs.len() != n {
                return Err(AuctionError::Trace(format!(
                    "round {} has {n} ads but {} bids and {} CTRs",
                    k + 1,
                    r.bids.len(),
                    r.true_ctrs.len()
                )));
            }
            if r.true_ctrs.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(AuctionError::Trace(format!(
                    "round {} has a CTR outside [0, 1]",
                    k + 1
                )));
            }
        }
        Ok(Self {
            seed,
            spec,
            truth,
            rounds,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }

    pub fn horizon(&self) -> usize {
        self.rounds.len()
    }

    /// Feature dimension of the contexts (0 for non-contextual traces).
    pub fn dim(&self) -> usize {
        self.rounds.first().map_or(0, |r| r.context.dim())
    }

    /// Keep only the first `horizon` rounds.
    pub fn truncated(mut self, horizon: usize) -> Self {
        self.rounds.truncate(horizon);
        self
    }
}

fn uniform_vec(rng: &mut SimRng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| uniform_in(rng, lo, hi)).collect()
}

/// Mean squared error of `theta` against `targets` and its gradient.
fn fit_loss_and_gradient(
    theta: &SigmoidLinearPredictor,
    contexts: &[Arc<ContextMatrix>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    let count: usize = targets.iter().map(Vec::len).sum();
    let mut grad = vec![0.0; theta.params().len()];
    let mut loss = 0.0;
    for (ctx, ys) in contexts.iter().zip(targets) {
        for (i, y) in ys.iter().enumerate() {
            let r = theta.predict(ctx, i)? - y;
            loss += r * r;
            theta.accumulate_gradient(ctx, i, 2.0 * r / count as f64, &mut grad)?;
        }
    }
    Ok((loss / count as f64, grad))
}

/// Full-batch projected gradient descent on the mean squared error.
pub fn fit_ground_truth(
    init: SigmoidLinearPredictor,
    contexts: &[Arc<ContextMatrix>],
    targets: &[Vec<f64>],
    epochs: usize,
    step: f64,
) -> Result<SigmoidLinearPredictor> {
    if contexts.is_empty() {
        return Err(AuctionError::Config(
            "cannot fit a ground truth on an empty dataset".into(),
        ));
    }
    let mut theta = init;
    let (mut loss, mut grad) = fit_loss_and_gradient(&theta, contexts, targets)?;
    for epoch in 1..=epochs {
        for (p, g) in theta.params_mut().iter_mut().zip(&grad) {
            *p -= step * g;
        }
        theta.clamp();
        let (next, next_grad) = fit_loss_and_gradient(&theta, contexts, targets)?;
        if next > loss || !next.is_finite() {
            return Err(AuctionError::FitDiverged {
                epoch,
                before: loss,
                after: next,
            });
        }
        loss = next;
        grad = next_grad;
    }
    Ok(theta)
}

/// Generate the synthetic dataset and its fitted ground truth.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<EnvironmentTrace> {
    config.validate()?;
    let d = config.dim;
    let mut n_rng = substream(seed, Stream::NumAds);
    let mut x_rng = substream(seed, Stream::Context);
    let mut b_rng = substream(seed, Stream::Bids);
    let mut y_rng = substream(seed, Stream::FakeCtr);
    let mut fit_rng = substream(seed, Stream::Fit);

    let (nl, nh) = config.num_ads_range;
    let (bl, bh) = config.bid_range;
    let (cl, ch) = config.fake_ctr_range;
    let mut contexts = Vec::with_capacity(config.horizon);
    let mut bids = Vec::with_capacity(config.horizon);
    let mut fake = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        let n = n_rng.random_range(nl..=nh);
        let common = uniform_vec(&mut x_rng, d, -1.0, 1.0);
        let per_ad = uniform_vec(&mut x_rng, n * d, -1.0, 1.0);
        contexts.push(Arc::new(ContextMatrix::from_flat(common, per_ad, n)?));
        bids.push(uniform_vec(&mut b_rng, n, bl, bh));
        fake.push(uniform_vec(&mut y_rng, n, cl, ch));
    }

    let init = SigmoidLinearPredictor::uniform(d, config.bound, &mut fit_rng);
    let truth = fit_ground_truth(init, &contexts, &fake, config.fit_epochs, config.fit_step)?;

    let mut rounds = Vec::with_capacity(config.horizon);
    for (context, mut bids) in contexts.into_iter().zip(bids) {
        let true_ctrs = truth.predict_all(&context)?;
        let lowest =
            true_ctrs.iter().enumerate().fold(
                0,
                |best, (i, c)| if *c < true_ctrs[best] { i } else { best },
            );
        bids[lowest] = config.lowest_ctr_bid_override;
        rounds.push(Round {
            context,
            bids,
            true_ctrs,
        });
    }
    EnvironmentTrace::new(
        seed,
        EnvironmentSpec::Synthetic(config.clone()),
        GroundTruth::Contextual {
            predictor: PredictorRecord::from(&truth),
        },
        rounds,
    )
}

/// CTR gap of the hard instance, `sqrt(N / T) / 4`.
pub fn hard_instance_gap(num_ads: usize, horizon: usize) -> f64 {
    0.25 * (num_ads as f64 / horizon as f64).sqrt()
}

/// Two ads at `1/2 + gap`, the rest at `1/2`, unit bids every round.
pub fn hard_instance(num_ads: usize, horizon: usize, seed: u64) -> Result<EnvironmentTrace> {
    if num_ads < 3 || horizon < num_ads {
        return Err(AuctionError::InvalidParameter(format!(
            "hard instance needs T >= N >= 3, got N = {num_ads}, T = {horizon}"
        )));
    }
    let mut rng = substream(seed, Stream::Pair);
    let pairs = num_ads * (num_ads - 1) / 2;
    let mut k = rng.random_range(0..pairs);
    let mut pair = (0, 1);
    'outer: for i in 0..num_ads {
        for j in i + 1..num_ads {
            if k == 0 {
                pair = (i, j);
                break 'outer;
            }
            k -= 1;
        }
    }
    hard_instance_with_pair(num_ads, horizon, pair, seed)
}

/// Hard instance with an explicit elevated pair.
pub fn hard_instance_with_pair(
    num_ads: usize,
    horizon: usize,
    pair: (usize, usize),
    seed: u64,
) -> Result<EnvironmentTrace> {
    if num_ads < 3 || horizon < num_ads {
        return Err(AuctionError::InvalidParameter(format!(
            "hard instance needs T >= N >= 3, got N = {num_ads}, T = {horizon}"
        )));
    }
    let (i, j) = pair;
    if i == j || i >= num_ads || j >= num_ads {
        return Err(AuctionError::InvalidParameter(format!(
            "elevated pair ({i}, {j}) must be two distinct ads below {num_ads}"
        )));
    }
    let gap = hard_instance_gap(num_ads, horizon);
    let mut rho = vec![0.5; num_ads];
    rho[i] = 0.5 + gap;
    rho[j] = 0.5 + gap;
    let context = Arc::new(ContextMatrix::featureless(num_ads));
    let rounds = (0..horizon)
        .map(|_| Round {
            context: Arc::clone(&context),
            bids: vec![1.0; num_ads],
            true_ctrs: rho.clone(),
        })
        .collect();
    EnvironmentTrace::new(
        seed,
        EnvironmentSpec::HardInstance { num_ads, horizon },
        GroundTruth::Fixed {
            rho,
            elevated: Some((i.min(j), i.max(j))),
            epsilon_gap: Some(gap),
        },
        rounds,
    )
}

/// Fixed CTRs drawn once from `ctr_range`, bids drawn every round from `bid_range`.
pub fn stationary_instance(config: &StationaryConfig, seed: u64) -> Result<EnvironmentTrace> {
    let (cl, ch) = config.ctr_range;
    let (bl, bh) = config.bid_range;
    if config.num_ads < 2 || config.horizon == 0 {
        return Err(AuctionError::Config(format!(
            "stationary instance needs N >= 2 and T > 0, got N = {}, T = {}",
            config.num_ads, config.horizon
        )));
    }
    if !(0.0 <= cl && cl <= ch && ch <= 1.0) || !(0.0 <= bl && bl <= bh) {
        return Err(AuctionError::Config(format!(
            "invalid ranges: ctr ({cl}, {ch}), bid ({bl}, {bh})"
        )));
    }
    let mut ctr_rng = substream(seed, Stream::Ctrs);
    let mut bid_rng = substream(seed, Stream::Bids);
    let rho = uniform_vec(&mut ctr_rng, config.num_ads, cl, ch);
    let context = Arc::new(ContextMatrix::featureless(config.num_ads));
    let rounds = (0..config.horizon)
        .map(|_| Round {
            context: Arc::clone(&context),
            bids: uniform_vec(&mut bid_rng, config.num_ads, bl, bh),
            true_ctrs: rho.clone(),
        })
        .collect();
    EnvironmentTrace::new(
        seed,
        EnvironmentSpec::Stationary(config.clone()),
        GroundTruth::Fixed {
            rho,
            elevated: None,
            epsilon_gap: None,
        },
        rounds,
    )
}

/// A click happens iff `uniform_draw < true_ctr`.
pub fn sample_click(true_ctr: f64, uniform_draw: f64) -> bool {
    uniform_draw < true_ctr
}

/// Oracle revenue `smax_i b_i rho_i` of every round.
pub fn oracle_baseline_trace(trace: &EnvironmentTrace) -> Result<Vec<f64>> {
    trace
        .rounds()
        .iter()
        .map(|r| oracle_round_revenue(&r.bids, &r.true_ctrs))
        .collect()
}

/// Write a trace: `#` header lines, a column header, then one row per (round, ad).
pub fn write_trace<W: Write>(trace: &EnvironmentTrace, mut out: W) -> Result<()> {
    writeln!(out, "# seed={}", trace.seed)?;
    writeln!(out, "# rng={RNG_ALGORITHM}")?;
    writeln!(out, "# environment={}", to_json(&trace.spec)?)?;
    writeln!(out, "# truth={}", to_json(&trace.truth)?)?;
    let d = trace.dim();
    let mut header = String::from("t,ad,bid,true_ctr");
    for k in 0..d {
        header.push_str(&format!(",x_common_{k}"));
    }
    for k in 0..d {
        header.push_str(&format!(",x_ad_{k}"));
    }
    writeln!(out, "{header}")?;
    let mut line = String::new();
    for (t, r) in trace.rounds.iter().enumerate() {
        for i in 0..r.num_ads() {
            line.clear();
            line.push_str(&format!("{},{},{},{}", t + 1, i, r.bids[i], r.true_ctrs[i]));
            for v in r.context.common().iter().chain(r.context.ad(i)) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| AuctionError::Trace(e.to_string()))
}

fn header_value<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix("# ")
        .and_then(|l| l.strip_prefix(key))
        .and_then(|l| l.strip_prefix('='))
        .ok_or_else(|| {
            AuctionError::Trace(format!("expected header `# {key}=...`, found `{line}`"))
        })
}

/// Read a trace written by [`write_trace`].
pub fn read_trace<R: BufRead>(input: R) -> Result<EnvironmentTrace> {
    let mut lines = input.lines();
    let mut next = |what: &str| -> Result<String> {
        lines
            .next()
            .ok_or_else(|| AuctionError::Trace(format!("missing {what}")))?
            .map_err(AuctionError::from)
    };
    let seed_line = next("seed header")?;
    let seed: u64 = header_value(&seed_line, "seed")?
        .parse()
        .map_err(|e| AuctionError::Trace(format!("bad seed: {e}")))?;
    let rng_line = next("rng header")?;
    let rng = header_value(&rng_line, "rng")?;
    if rng != RNG_ALGORITHM {
        return Err(AuctionError::Trace(format!(
            "trace was generated with `{rng}`, this build uses `{RNG_ALGORITHM}`"
        )));
    }
    let env_line = next("environment header")?;
    let spec: EnvironmentSpec = serde_json::from_str(header_value(&env_line, "environment")?)
        .map_err(|e| AuctionError::Trace(format!("bad environment header: {e}")))?;
    let truth_line = next("truth header")?;
    let truth: GroundTruth = serde_json::from_str(header_value(&truth_line, "truth")?)
        .map_err(|e| AuctionError::Trace(format!("bad truth header: {e}")))?;
    let columns = next("column header")?;
    let width = columns.split(',').count();
    if width < 4 || (width - 4) % 2 != 0 {
        return Err(AuctionError::Trace(format!(
            "bad column header `{columns}`"
        )));
    }
    let d = (width - 4) / 2;

    struct Pending {
        common: Vec<f64>,
        per_ad: Vec<f64>,
        bids: Vec<f64>,
        ctrs: Vec<f64>,
    }
    let mut rounds: Vec<Round> = Vec::new();
    let mut pending: Option<Pending> = None;
    let finish = |p: Pending, rounds: &mut Vec<Round>| -> Result<()> {
        let n = p.bids.len();
        rounds.push(Round {
            context: Arc::new(ContextMatrix::from_flat(p.common, p.per_ad, n)?),
            bids: p.bids,
            true_ctrs: p.ctrs,
        });
        Ok(())
    };
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |m: String| AuctionError::Trace(format!("row {}: {m}", row + 1));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(bad(format!(
                "expected {width} fields, found {}",
                fields.len()
            )));
        }
        let t: usize = fields[0]
            .parse()
            .map_err(|e| bad(format!("bad round: {e}")))?;
        let ad: usize = fields[1].parse().map_err(|e| bad(format!("bad ad: {e}")))?;
        let nums = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| bad(format!("bad number: {e}")))?;
        let current = rounds.len() + 1;
        if t == current + 1 && ad == 0 {
            if let Some(p) = pending.take() {
                finish(p, &mut rounds)?;
            }
        }
        let expected_t = rounds.len() + 1;
        if t != expected_t {
            return Err(bad(format!("expected round {expected_t}, found {t}")));
        }
        let common = &nums[2..2 + d];
        let p = pending.get_or_insert_with(|| Pending {
            common: common.to_vec(),
            per_ad: Vec::new(),
            bids: Vec::new(),
            ctrs: Vec::new(),
        });
        if ad != p.bids.len() {
            return Err(bad(format!("expected ad {}, found {ad}", p.bids.len())));
        }
        if p.common != common {
            return Err(bad("common features differ within a round".into()));
        }
        p.bids.push(nums[0]);
        p.ctrs.push(nums[1]);
        p.per_ad.extend_from_slice(&nums[2 + d..]);
    }
    if let Some(p) = pending.take() {
        finish(p, &mut rounds)?;
    }
    EnvironmentTrace::new(seed, spec, truth, rounds)
}
