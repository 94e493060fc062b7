use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auction_bench::config::Selection;
use auction_bench::output::{self, read_results};
use auction_bench::runner::{resolve_workers, run_experiment, run_replay};
use auction_bench::summary::{summarize, summarize_results, Summary};
use auction_bench::{BenchError, ExperimentConfig, Result, RunResult};
use clap::{Parser, Subcommand, ValueEnum};
use ctr_auction::environments::{read_trace, write_trace};

#[derive(Parser)]
#[command(
    name = "auction-bench",
    version,
    about = "Regret benchmarks for CTR learning in pay-per-click auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Output directory (defaults to the config's `output`, then `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "AUCTION_BENCH_WORKERS")]
    workers: Option<usize>,
    /// Config override such as `environment.horizon=500`; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Joint,
    PerSeed,
}

#[derive(Subcommand)]
enum Command {
    /// Run every algorithm, grid point and seed of a config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run a config's algorithms on a saved trace instead of generated ones.
    Replay {
        trace: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Recompute the summary table from a results CSV and print it.
    Summarize {
        results: PathBuf,
        #[arg(long, value_enum, default_value = "joint")]
        selection: SelectionArg,
    },
    /// Write the environment trace of one seed to a file.
    Trace {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn out_dir(config: &ExperimentConfig, args: &RunArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn report(summary: &Summary, dir: &Path) {
    for b in &summary.best {
        eprintln!(
            "{:<24} mean final regret {:.3}",
            b.algorithm, b.mean_final_regret
        );
    }
    eprintln!("wrote {}", dir.display());
}

fn finish(config: &ExperimentConfig, args: &RunArgs, results: &[RunResult]) -> Result<()> {
    let summary = summarize_results(results, config.selection);
    let dir = out_dir(config, args);
    output::write_all(&dir, config, results, &summary)?;
    report(&summary, &dir);
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, args } => {
            let config = ExperimentConfig::load(&config, &args.overrides)?;
            let results = run_experiment(&config, resolve_workers(args.workers))?;
            finish(&config, &args, &results)
        }
        Command::Replay {
            trace,
            config,
            args,
        } => {
            let config = ExperimentConfig::load(&config, &args.overrides)?;
            let file = File::open(&trace)
                .map_err(|e| BenchError::Config(format!("cannot open {}: {e}", trace.display())))?;
            let trace = read_trace(BufReader::new(file))?;
            let results = run_replay(&config, trace, resolve_workers(args.workers))?;
            finish(&config, &args, &results)
        }
        Command::Summarize { results, selection } => {
            let curves = read_results(&results)?;
            let selection = match selection {
                SelectionArg::Joint => Selection::Joint,
                SelectionArg::PerSeed => Selection::PerSeed,
            };
            let summary = summarize(&curves, selection);
            let mut w = csv::Writer::from_writer(std::io::stdout().lock());
            for row in &summary.rows {
                w.serialize(row)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Trace {
            config,
            seed,
            out,
            overrides,
        } => {
            let config = ExperimentConfig::load(&config, &overrides)?;
            let trace = config.environment.generate(seed)?;
            write_trace(&trace, BufWriter::new(File::create(&out)?))?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
