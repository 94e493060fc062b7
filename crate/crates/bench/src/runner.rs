//! Runs every (algorithm, grid point, seed) combination of a config.
//!
//! Each seed's environment trace is generated once and shared by all
//! algorithms. Click draws and learner randomness come from the seed's own
//! substreams, so a run's output depends only on the config.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctr_auction::environments::EnvironmentTrace;
use ctr_auction::exp_weights::{FiniteExpWeights, SgldConfig, SgldExpWeights};
use ctr_auction::learner::{play_round, Learner};
use ctr_auction::predictors::{DiscretizedConstantClass, DEFAULT_ENUMERATION_BUDGET};
use ctr_auction::regression::{EpsilonGreedy, ExplorationMode, ExplorationPolicy, OgdOracle};
use ctr_auction::rng::{substream, Stream};
use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{FixedCtr, FixedWinner, RandomCtr};
use crate::config::{ExperimentConfig, GridPoint, LearnerSpec};
use crate::error::{BenchError, Result};

/// Oracle revenue and learner payment of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundLog {
    pub round: usize,
    pub oracle_revenue: f64,
    pub payment: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: String,
    pub grid_id: usize,
    pub hyperparameters: BTreeMap<String, f64>,
    pub seed: u64,
    /// `(round, cumulative regret)` at the record stride, always ending at `T`.
    pub trace: Vec<(usize, f64)>,
    pub final_regret: f64,
    pub wall_time: Duration,
    pub rounds: Option<Vec<RoundLog>>,
}

/// Build the learner for one grid point. `dim` is the trace's feature dimension.
pub fn build_learner(spec: &LearnerSpec, dim: usize, num_ads: usize) -> Result<Box<dyn Learner>> {
    Ok(match *spec {
        LearnerSpec::Sgld {
            estimator,
            learning_rate,
            step_size,
            steps_per_round,
            restart,
            bound,
        } => Box::new(SgldExpWeights::new(SgldConfig {
            learning_rate,
            step_size,
            steps_per_round,
            restart,
            bound,
            estimator,
        })?),
        LearnerSpec::Finite {
            estimator,
            grid,
            learning_rate,
        } => Box::new(FiniteExpWeights::new(
            DiscretizedConstantClass::new(grid, num_ads, DEFAULT_ENUMERATION_BUDGET)?,
            learning_rate,
            estimator,
        )?),
        LearnerSpec::EpsilonGreedy {
            epsilon,
            ogd_step,
            sigma,
            bound,
        } => {
            let mode = match sigma {
                Some(sigma) => ExplorationMode::SigmaMixture { sigma },
                None => ExplorationMode::OneHot,
            };
            Box::new(EpsilonGreedy::new(
                OgdOracle::zeros(dim, bound, ogd_step)?,
                ExplorationPolicy::new(epsilon, mode)?,
            ))
        }
        LearnerSpec::FixedCtr(value) => Box::new(FixedCtr { value }),
        LearnerSpec::RandomCtr => Box::new(RandomCtr),
        LearnerSpec::FixedWinner(ad) => Box::new(FixedWinner { ad }),
    })
}

/// Drive one learner over one trace.
pub fn run_single(
    algorithm: &str,
    point: &GridPoint,
    seed: u64,
    trace: &EnvironmentTrace,
    stride: usize,
    keep_rounds: bool,
) -> Result<RunResult> {
    let start = Instant::now();
    let num_ads = trace.rounds().first().map_or(0, |r| r.num_ads());
    let mut learner = build_learner(&point.learner, trace.dim(), num_ads)?;
    let mut click_rng = substream(seed, Stream::Clicks);
    let mut learner_rng = substream(seed, Stream::Learner);
    let horizon = trace.horizon();
    let mut cum = 0.0;
    let mut points = Vec::with_capacity(horizon / stride + 1);
    let mut rounds = keep_rounds.then(|| Vec::with_capacity(horizon));
    for (k, round) in trace.rounds().iter().enumerate() {
        let t = k + 1;
        let r = play_round(&mut learner, t, round, click_rng.random(), &mut learner_rng)?;
        cum += r.oracle_revenue - r.outcome.payment;
        if t % stride == 0 || t == horizon {
            points.push((t, cum));
        }
        if let Some(log) = rounds.as_mut() {
            log.push(RoundLog {
                round: t,
                oracle_revenue: r.oracle_revenue,
                payment: r.outcome.payment,
                cum_regret: cum,
            });
        }
    }
    Ok(RunResult {
        algorithm: algorithm.to_owned(),
        grid_id: point.grid_id,
        hyperparameters: point.hyperparameters.clone(),
        seed,
        trace: points,
        final_regret: cum,
        wall_time: start.elapsed(),
        rounds,
    })
}

/// Worker count: the explicit value, else `AUCTION_BENCH_WORKERS`, else all cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("AUCTION_BENCH_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|k| *k > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Generate each seed's trace, then run everything. Results are sorted by
/// algorithm (config order), grid id and seed.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<RunResult>> {
    config.validate()?;
    let pool = pool(workers)?;
    let traces: Vec<(u64, Arc<EnvironmentTrace>)> = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| Ok((seed, Arc::new(config.environment.generate(seed)?))))
            .collect::<Result<_>>()
    })?;
    run_on_traces(config, &traces, &pool)
}

/// Run every algorithm on a fixed trace, once per config seed.
pub fn run_replay(
    config: &ExperimentConfig,
    trace: EnvironmentTrace,
    workers: usize,
) -> Result<Vec<RunResult>> {
    let trace = Arc::new(trace);
    let traces: Vec<_> = config
        .seeds
        .iter()
        .map(|&s| (s, Arc::clone(&trace)))
        .collect();
    run_on_traces(config, &traces, &pool(workers)?)
}

fn run_on_traces(
    config: &ExperimentConfig,
    traces: &[(u64, Arc<EnvironmentTrace>)],
    pool: &rayon::ThreadPool,
) -> Result<Vec<RunResult>> {
    let mut tasks = Vec::new();
    for (order, alg) in config.algorithms.iter().enumerate() {
        for point in alg.grid(&config.environment)? {
            for (seed, trace) in traces {
                tasks.push((
                    order,
                    alg.name.clone(),
                    point.clone(),
                    *seed,
                    Arc::clone(trace),
                ));
            }
        }
    }
    let stride = config.stride();
    let mut results: Vec<(usize, RunResult)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(order, name, point, seed, trace)| {
                run_single(name, point, *seed, trace, stride, config.per_round_log)
                    .map(|r| (*order, r))
            })
            .collect::<Result<_>>()
    })?;
    results.sort_by(|(oa, a), (ob, b)| {
        oa.cmp(ob)
            .then(a.grid_id.cmp(&b.grid_id))
            .then(a.seed.cmp(&b.seed))
    });
    Ok(results.into_iter().map(|(_, r)| r).collect())
}
