//! Benchmark harness: runs CTR learners over seeded environments and
//! hyperparameter grids and writes plot-ready regret curves.

pub mod baselines;
pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod summary;

pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use runner::{run_experiment, run_replay, RunResult};
pub use summary::{summarize, summarize_results, Summary};
