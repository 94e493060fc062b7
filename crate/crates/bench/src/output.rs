//! Result files: `results.csv`, `summary.csv`, `run.json` and the optional `rounds.csv`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ctr_auction::rng::RNG_ALGORITHM;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::runner::RunResult;
use crate::summary::{RunCurve, Summary};

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SIDECAR_FILE: &str = "run.json";
pub const ROUNDS_FILE: &str = "rounds.csv";

#[derive(Serialize)]
struct ResultRow<'a> {
    algorithm: &'a str,
    grid_id: usize,
    seed: u64,
    round: usize,
    cum_regret: f64,
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

pub fn write_results(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = writer(path)?;
    for r in results {
        for &(round, cum_regret) in &r.trace {
            w.serialize(ResultRow {
                algorithm: &r.algorithm,
                grid_id: r.grid_id,
                seed: r.seed,
                round,
                cum_regret,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut w = writer(path)?;
    for row in &summary.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_round_log(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "algorithm",
        "grid_id",
        "seed",
        "round",
        "oracle_revenue",
        "payment",
        "cum_regret",
    ])?;
    for r in results {
        for log in r.rounds.iter().flatten() {
            w.write_record([
                r.algorithm.clone(),
                r.grid_id.to_string(),
                r.seed.to_string(),
                log.round.to_string(),
                log.oracle_revenue.to_string(),
                log.payment.to_string(),
                log.cum_regret.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Config echo, grids, RNG identifier, selected grid points and wall times.
pub fn write_sidecar(
    path: &Path,
    config: &ExperimentConfig,
    results: &[RunResult],
    summary: &Summary,
) -> Result<()> {
    let mut grids = Vec::new();
    for alg in &config.algorithms {
        for p in alg.grid(&config.environment)? {
            grids.push(json!({
                "algorithm": alg.name,
                "grid_id": p.grid_id,
                "hyperparameters": p.hyperparameters,
            }));
        }
    }
    let runs: Vec<_> = results
        .iter()
        .map(|r| {
            json!({
                "algorithm": r.algorithm,
                "grid_id": r.grid_id,
                "seed": r.seed,
                "final_regret": r.final_regret,
                "wall_time_secs": r.wall_time.as_secs_f64(),
            })
        })
        .collect();
    let doc = json!({
        "config": config,
        "rng_algorithm": RNG_ALGORITHM,
        "record_stride": config.stride(),
        "grids": grids,
        "best": summary.best,
        "runs": runs,
    });
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), &doc)?;
    Ok(())
}

/// Write all outputs of a run into `dir`.
pub fn write_all(
    dir: &Path,
    config: &ExperimentConfig,
    results: &[RunResult],
    summary: &Summary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_results(&dir.join(RESULTS_FILE), results)?;
    write_summary(&dir.join(SUMMARY_FILE), summary)?;
    write_sidecar(&dir.join(SIDECAR_FILE), config, results, summary)?;
    if config.per_round_log {
        write_round_log(&dir.join(ROUNDS_FILE), results)?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct ReadRow {
    algorithm: String,
    grid_id: usize,
    seed: u64,
    round: usize,
    cum_regret: f64,
}

/// Read `results.csv` back into per-run curves, keeping file order.
pub fn read_results(path: &Path) -> Result<Vec<RunCurve>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut curves: Vec<RunCurve> = Vec::new();
    for row in reader.deserialize() {
        let row: ReadRow = row?;
        match curves.last_mut() {
            Some(c)
                if c.algorithm == row.algorithm
                    && c.grid_id == row.grid_id
                    && c.seed == row.seed =>
            {
                if c.points.last().is_some_and(|p| p.0 >= row.round) {
                    return Err(BenchError::Config(format!(
                        "{}: rounds of {} / grid {} / seed {} are not increasing",
                        path.display(),
                        row.algorithm,
                        row.grid_id,
                        row.seed
                    )));
                }
                c.points.push((row.round, row.cum_regret));
            }
            _ => curves.push(RunCurve {
                algorithm: row.algorithm,
                grid_id: row.grid_id,
                seed: row.seed,
                points: vec![(row.round, row.cum_regret)],
            }),
        }
    }
    Ok(curves)
}
