//! Experiment configuration files.
//!
//! A config is a TOML document naming an environment, a list of algorithms
//! with hyperparameter grids, and the seeds to run. Every list-valued
//! hyperparameter is a grid axis; the runner takes the Cartesian product.
//!
//! ```toml
//! seeds = [0, 1, 2, 3]
//!
//! [environment]
//! kind = "synthetic"
//! dim = 16
//! horizon = 2000
//!
//! [[algorithms]]
//! name = "OptSq"
//! kind = "sgld_exp_weights"
//! estimator = "optsq"
//! learning_rate = [0.0625, 0.125, 0.25]
//! step_size = [0.001, 0.01]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ctr_auction::environments::EnvironmentSpec;
use ctr_auction::exp_weights::Estimator;
use ctr_auction::predictors::{DiscretizedConstantClass, DEFAULT_ENUMERATION_BUDGET};
use ctr_auction::regression::epsilon_formula;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub seeds: Vec<u64>,
    /// Record every k-th round's cumulative regret; defaults to `T / 200`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
    #[serde(default)]
    pub selection: Selection,
    /// Also write `rounds.csv` with each round's oracle revenue and payment.
    #[serde(default)]
    pub per_round_log: bool,
    /// Output directory used when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// How the reported grid point is chosen per algorithm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// One grid point for all seeds: the lowest mean final regret.
    #[default]
    Joint,
    /// The lowest final regret separately for every seed.
    PerSeed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: AlgorithmKind,
}

// `name` is split off by hand so the variants can reject unknown keys.
impl<'de> Deserialize<'de> for AlgorithmSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let mut table = toml::Table::deserialize(deserializer)?;
        let kind_name = table
            .get("kind")
            .and_then(|k| k.as_str())
            .map(str::to_owned)
            .ok_or_else(|| D::Error::custom("algorithm needs a `kind`"))?;
        let name = match table.remove("name") {
            Some(toml::Value::String(s)) => s,
            Some(other) => {
                return Err(D::Error::custom(format!(
                    "algorithm name must be a string, got {other}"
                )))
            }
            None => kind_name,
        };
        let kind = toml::Value::Table(table)
            .try_into::<AlgorithmKind>()
            .map_err(|e| D::Error::custom(format!("algorithm `{name}`: {}", e.message())))?;
        Ok(Self { name, kind })
    }
}

fn default_steps() -> usize {
    32
}

fn default_bound() -> f64 {
    1.0
}

fn default_fixed_ctr() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmKind {
    /// Exponential weights over the sigmoid-linear class, sampled by SGLD.
    SgldExpWeights {
        estimator: Estimator,
        learning_rate: Vec<f64>,
        step_size: Vec<f64>,
        #[serde(default = "default_steps")]
        steps_per_round: usize,
        #[serde(default)]
        sgld_restart: bool,
        #[serde(default = "default_bound")]
        bound: f64,
    },
    /// Exact exponential weights over the discretized constant class.
    FiniteExpWeights {
        estimator: Estimator,
        grid: u32,
        learning_rate: Vec<f64>,
    },
    /// Epsilon-greedy over an online-gradient-descent regression oracle.
    EpsilonGreedy {
        /// Explicit exploration rates.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<Vec<f64>>,
        /// Multipliers of `T^(-1/3)`; the default grid is `[1, 2, 4]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon_scale: Option<Vec<f64>>,
        /// Use `(N * reg_sq / T)^(1/3)` with `N` the largest ad count.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reg_sq: Option<f64>,
        ogd_step: Vec<f64>,
        /// Mix exploration vectors with `sigma / 2` instead of using one-hot vectors.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
        #[serde(default = "default_bound")]
        bound: f64,
    },
    /// The same CTR for every ad: a second-price auction on bids alone.
    FixedCtr {
        #[serde(default = "default_fixed_ctr")]
        value: f64,
    },
    /// Independent uniform CTR estimates every round.
    RandomCtr,
    /// Always makes `ad` the winner (non-contextual environments only).
    FixedWinner { ad: usize },
}

/// One concrete hyperparameter setting of an algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub grid_id: usize,
    pub hyperparameters: BTreeMap<String, f64>,
    pub learner: LearnerSpec,
}

/// Everything needed to build a learner for one run.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerSpec {
    Sgld {
        estimator: Estimator,
        learning_rate: f64,
        step_size: f64,
        steps_per_round: usize,
        restart: bool,
        bound: f64,
    },
    Finite {
        estimator: Estimator,
        grid: u32,
        learning_rate: f64,
    },
    EpsilonGreedy {
        epsilon: f64,
        ogd_step: f64,
        sigma: Option<f64>,
        bound: f64,
    },
    FixedCtr(f64),
    RandomCtr,
    FixedWinner(usize),
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(BenchError::Config(msg.into()))
}

fn non_empty(name: &str, field: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return config_err(format!("algorithm `{name}`: `{field}` grid is empty"));
    }
    Ok(())
}

impl AlgorithmSpec {
    /// Expand the grid in row-major order of the axes as declared.
    pub fn grid(&self, env: &EnvironmentSpec) -> Result<Vec<GridPoint>> {
        let name = &self.name;
        let horizon = env.horizon();
        let mut points = Vec::new();
        let mut push = |hp: Vec<(&str, f64)>, learner: LearnerSpec| {
            points.push(GridPoint {
                grid_id: points.len(),
                hyperparameters: hp.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
                learner,
            })
        };
        match &self.kind {
            AlgorithmKind::SgldExpWeights {
                estimator,
                learning_rate,
                step_size,
                steps_per_round,
                sgld_restart,
                bound,
            } => {
                non_empty(name, "learning_rate", learning_rate)?;
                non_empty(name, "step_size", step_size)?;
                if *estimator == Estimator::Ips {
                    return config_err(format!(
                        "algorithm `{name}`: the IPS estimator needs a finite class; use finite_exp_weights"
                    ));
                }
                for &eta in learning_rate {
                    for &alpha in step_size {
                        push(
                            vec![("learning_rate", eta), ("step_size", alpha)],
                            LearnerSpec::Sgld {
                                estimator: *estimator,
                                learning_rate: eta,
                                step_size: alpha,
                                steps_per_round: *steps_per_round,
                                restart: *sgld_restart,
                                bound: *bound,
                            },
                        );
                    }
                }
            }
            AlgorithmKind::FiniteExpWeights {
                estimator,
                grid,
                learning_rate,
            } => {
                non_empty(name, "learning_rate", learning_rate)?;
                for &eta in learning_rate {
                    push(
                        vec![("learning_rate", eta)],
                        LearnerSpec::Finite {
                            estimator: *estimator,
                            grid: *grid,
                            learning_rate: eta,
                        },
                    );
                }
            }
            AlgorithmKind::EpsilonGreedy {
                epsilon,
                epsilon_scale,
                reg_sq,
                ogd_step,
                sigma,
                bound,
            } => {
                non_empty(name, "ogd_step", ogd_step)?;
                let given = [epsilon.is_some(), epsilon_scale.is_some(), reg_sq.is_some()]
                    .iter()
                    .filter(|x| **x)
                    .count();
                if given > 1 {
                    return config_err(format!(
                        "algorithm `{name}`: give at most one of `epsilon`, `epsilon_scale`, `reg_sq`"
                    ));
                }
                let base = (horizon.max(1) as f64).powf(-1.0 / 3.0);
                let eps: Vec<f64> = if let Some(e) = epsilon {
                    e.clone()
                } else if let Some(r) = reg_sq {
                    let n = max_ads(env);
                    vec![epsilon_formula(horizon, n, *r)
                        .map_err(|e| BenchError::Config(e.to_string()))?]
                } else {
                    epsilon_scale
                        .clone()
                        .unwrap_or_else(|| vec![1.0, 2.0, 4.0])
                        .iter()
                        .map(|s| (s * base).min(1.0))
                        .collect()
                };
                non_empty(name, "epsilon", &eps)?;
                for &e in &eps {
                    for &step in ogd_step {
                        push(
                            vec![("epsilon", e), ("ogd_step", step)],
                            LearnerSpec::EpsilonGreedy {
                                epsilon: e,
                                ogd_step: step,
                                sigma: *sigma,
                                bound: *bound,
                            },
                        );
                    }
                }
            }
            AlgorithmKind::FixedCtr { value } => {
                push(vec![("value", *value)], LearnerSpec::FixedCtr(*value))
            }
            AlgorithmKind::RandomCtr => push(vec![], LearnerSpec::RandomCtr),
            AlgorithmKind::FixedWinner { ad } => {
                push(vec![("ad", *ad as f64)], LearnerSpec::FixedWinner(*ad))
            }
        }
        Ok(points)
    }
}

fn max_ads(env: &EnvironmentSpec) -> usize {
    match env {
        EnvironmentSpec::Synthetic(c) => c.num_ads_range.1,
        EnvironmentSpec::HardInstance { num_ads, .. } => *num_ads,
        EnvironmentSpec::Stationary(c) => c.num_ads,
    }
}

fn fixed_ads(env: &EnvironmentSpec) -> Option<usize> {
    match env {
        EnvironmentSpec::Synthetic(_) => None,
        EnvironmentSpec::HardInstance { num_ads, .. } => Some(*num_ads),
        EnvironmentSpec::Stationary(c) => Some(c.num_ads),
    }
}

fn min_bid(env: &EnvironmentSpec) -> f64 {
    match env {
        EnvironmentSpec::Synthetic(c) => c.bid_range.0.min(c.lowest_ctr_bid_override),
        EnvironmentSpec::HardInstance { .. } => 1.0,
        EnvironmentSpec::Stationary(c) => c.bid_range.0,
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parse `text` after applying `key=value` overrides (dotted keys, TOML values).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table =
            toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let config: Self = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| BenchError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn horizon(&self) -> usize {
        self.environment.horizon()
    }

    pub fn stride(&self) -> usize {
        self.record_stride.unwrap_or(self.horizon() / 200).max(1)
    }

    /// Check everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return config_err("at least one algorithm is required");
        }
        if self.seeds.is_empty() {
            return config_err("at least one seed is required");
        }
        let unique: std::collections::BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            return config_err("seeds must be distinct");
        }
        let mut names = std::collections::BTreeSet::new();
        for a in &self.algorithms {
            if !names.insert(a.name.as_str()) {
                return config_err(format!("duplicate algorithm name `{}`", a.name));
            }
        }
        match &self.environment {
            EnvironmentSpec::Synthetic(c) => c.validate()?,
            EnvironmentSpec::HardInstance { num_ads, horizon } => {
                if *num_ads < 3 || horizon < num_ads {
                    return config_err(format!(
                        "hard instance needs T >= N >= 3, got N = {num_ads}, T = {horizon}"
                    ));
                }
            }
            EnvironmentSpec::Stationary(c) => {
                if c.num_ads < 2 || c.horizon == 0 {
                    return config_err("stationary instance needs N >= 2 and T > 0");
                }
            }
        }
        for a in &self.algorithms {
            let name = &a.name;
            for p in a.grid(&self.environment)? {
                validate_learner(name, &p.learner, &self.environment)?;
            }
        }
        Ok(())
    }
}

fn validate_learner(name: &str, spec: &LearnerSpec, env: &EnvironmentSpec) -> Result<()> {
    let bad = |m: String| config_err(format!("algorithm `{name}`: {m}"));
    match spec {
        LearnerSpec::Sgld {
            learning_rate,
            step_size,
            steps_per_round,
            bound,
            ..
        } => {
            if !(*learning_rate > 0.0 && *learning_rate <= 1.0) {
                return bad(format!("learning_rate {learning_rate} outside (0, 1]"));
            }
            if !(*step_size > 0.0) || *steps_per_round == 0 || !(*bound > 0.0) {
                return bad("step_size, steps_per_round and bound must be positive".into());
            }
            if matches!(env, EnvironmentSpec::Synthetic(_)) {
                Ok(())
            } else {
                bad("the sigmoid-linear class needs a contextual environment".into())
            }
        }
        LearnerSpec::Finite {
            estimator,
            grid,
            learning_rate,
        } => {
            let Some(n) = fixed_ads(env) else {
                return bad("constant classes need a fixed number of ads".into());
            };
            if !(*learning_rate > 0.0) {
                return bad(format!("learning_rate {learning_rate} must be positive"));
            }
            if *estimator != Estimator::Ips && *learning_rate > 1.0 {
                return bad(format!("learning_rate {learning_rate} outside (0, 1]"));
            }
            DiscretizedConstantClass::new(*grid, n, DEFAULT_ENUMERATION_BUDGET)
                .map(|_| ())
                .or_else(|e| bad(e.to_string()))
        }
        LearnerSpec::EpsilonGreedy {
            epsilon,
            ogd_step,
            sigma,
            bound,
        } => {
            if !(0.0..=1.0).contains(epsilon) {
                return bad(format!("epsilon {epsilon} outside [0, 1]"));
            }
            if !(*ogd_step > 0.0) || !(*bound > 0.0) {
                return bad("ogd_step and bound must be positive".into());
            }
            if let Some(s) = sigma {
                if !(*s > 0.0 && *s <= 1.0) {
                    return bad(format!("sigma {s} outside (0, 1]"));
                }
                if *s > min_bid(env) {
                    return bad(format!(
                        "sigma {s} exceeds the minimum bid {}; the explored ad could lose",
                        min_bid(env)
                    ));
                }
            }
            if matches!(env, EnvironmentSpec::Synthetic(_)) {
                Ok(())
            } else {
                bad("the regression oracle needs a contextual environment".into())
            }
        }
        LearnerSpec::FixedCtr(v) => {
            if *v > 0.0 && *v <= 1.0 {
                Ok(())
            } else {
                bad(format!("fixed CTR {v} outside (0, 1]"))
            }
        }
        LearnerSpec::RandomCtr => Ok(()),
        LearnerSpec::FixedWinner(ad) => match fixed_ads(env) {
            Some(n) if *ad < n => Ok(()),
            Some(n) => bad(format!("ad {ad} out of range for {n} ads")),
            None => bad("fixed_winner needs a fixed number of ads".into()),
        },
    }
}

/// Set `a.b.c = value` in a TOML table. Numeric segments index arrays
/// (`algorithms.0.step_size`). Values parse as TOML, falling back to a string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| BenchError::Config(format!("override `{assignment}` is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut root = toml::Value::Table(std::mem::take(doc));
    let result = (|| {
        let mut current = &mut root;
        for p in path {
            current = match current {
                toml::Value::Array(a) => {
                    let i: usize = p.parse().map_err(|_| {
                        BenchError::Config(format!("override `{key}`: `{p}` is not an index"))
                    })?;
                    a.get_mut(i).ok_or_else(|| {
                        BenchError::Config(format!("override `{key}`: index {i} out of range"))
                    })?
                }
                toml::Value::Table(t) => t
                    .entry(p.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new())),
                _ => return config_err(format!("override `{key}`: cannot descend into `{p}`")),
            };
        }
        match current {
            toml::Value::Table(t) => {
                t.insert(last.to_string(), value);
                Ok(())
            }
            _ => config_err(format!("override `{key}`: parent is not a table")),
        }
    })();
    if let toml::Value::Table(t) = root {
        *doc = t;
    }
    result
}
