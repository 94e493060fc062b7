use std::fs;

use auction_bench::baselines::{baseline_fixed_ctr, baseline_random_ctr};
use auction_bench::config::{apply_override, Selection};
use auction_bench::output::{read_results, write_all, RESULTS_FILE, ROUNDS_FILE, SUMMARY_FILE};
use auction_bench::runner::{run_experiment, run_replay};
use auction_bench::{summarize, summarize_results, BenchError, ExperimentConfig};
use ctr_auction::auction::allocate;
use ctr_auction::environments::{generate_synthetic, SyntheticConfig};
use ctr_auction::rng::{substream, Stream};

const SMALL_SYNTHETIC: &str = r#"
seeds = [0, 1, 2, 3]
record_stride = 20

[environment]
kind = "synthetic"
dim = 4
horizon = 200
num_ads_range = [3, 5]
fit_epochs = 20
"#;

fn config(algorithms: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!("{SMALL_SYNTHETIC}\n{algorithms}")).unwrap()
}

const FIVE: &str = r#"
[[algorithms]]
name = "optsq"
kind = "sgld_exp_weights"
estimator = "optsq"
learning_rate = [0.25]
step_size = [0.01]
steps_per_round = 2

[[algorithms]]
name = "eps_greedy"
kind = "epsilon_greedy"
ogd_step = [0.01]

[[algorithms]]
name = "sq_ablation"
kind = "sgld_exp_weights"
estimator = "sq_ablation"
learning_rate = [0.25]
step_size = [0.01]
steps_per_round = 2

[[algorithms]]
name = "fixed_ctr"
kind = "fixed_ctr"

[[algorithms]]
name = "random_ctr"
kind = "random_ctr"
"#;

#[test]
fn five_algorithms_give_five_result_groups() {
    let cfg = config(FIVE);
    let results = run_experiment(&cfg, 1).unwrap();
    let summary = summarize_results(&results, Selection::Joint);
    let groups: Vec<&str> = summary.best.iter().map(|b| b.algorithm.as_str()).collect();
    assert_eq!(
        groups,
        [
            "optsq",
            "eps_greedy",
            "sq_ablation",
            "fixed_ctr",
            "random_ctr"
        ]
    );
    // eps-greedy defaults to three epsilon values.
    assert_eq!(results.len(), 4 * (1 + 3 + 1 + 1 + 1));
    for r in &results {
        let rounds: Vec<usize> = r.trace.iter().map(|p| p.0).collect();
        assert!(rounds.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*rounds.last().unwrap(), 200);
        assert_eq!(r.trace.last().unwrap().1, r.final_regret);
    }
}

#[test]
fn three_learning_rates_times_four_seeds_is_twelve_runs() {
    let cfg = config(
        r#"
[[algorithms]]
kind = "sgld_exp_weights"
estimator = "optsq"
learning_rate = [0.0625, 0.125, 0.25]
step_size = [0.01]
steps_per_round = 1
"#,
    );
    let results = run_experiment(&cfg, 2).unwrap();
    assert_eq!(results.len(), 12);
    let grids: std::collections::BTreeSet<usize> = results.iter().map(|r| r.grid_id).collect();
    assert_eq!(grids.len(), 3);
    assert!(results.iter().all(|r| r.algorithm == "sgld_exp_weights"));
}

#[test]
fn identical_configs_give_identical_files_for_any_worker_count() {
    let cfg = config(FIVE);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (dir, workers) in [(&a, 1), (&b, 3)] {
        let results = run_experiment(&cfg, workers).unwrap();
        let summary = summarize_results(&results, cfg.selection);
        write_all(dir.path(), &cfg, &results, &summary).unwrap();
    }
    for file in [RESULTS_FILE, SUMMARY_FILE] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs");
    }
}

#[test]
fn results_csv_round_trips_through_summarize() {
    let cfg = config(FIVE);
    let results = run_experiment(&cfg, 1).unwrap();
    let summary = summarize_results(&results, cfg.selection);
    let dir = tempfile::tempdir().unwrap();
    write_all(dir.path(), &cfg, &results, &summary).unwrap();
    let curves = read_results(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(summarize(&curves, cfg.selection), summary);
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["seeds"], serde_json::json!([0, 1, 2, 3]));
}

#[test]
fn per_round_log_sums_to_the_recorded_regret() {
    let mut cfg = config(FIVE);
    cfg.per_round_log = true;
    let results = run_experiment(&cfg, 1).unwrap();
    for r in &results {
        let rounds = r.rounds.as_ref().unwrap();
        let mut cum = 0.0;
        for log in rounds {
            cum += log.oracle_revenue - log.payment;
            assert!((cum - log.cum_regret).abs() < 1e-9);
        }
        for &(t, value) in &r.trace {
            assert_eq!(rounds[t - 1].cum_regret, value);
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let summary = summarize_results(&results, cfg.selection);
    write_all(dir.path(), &cfg, &results, &summary).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join(ROUNDS_FILE)).unwrap();
    assert_eq!(reader.records().count(), results.len() * 200);
}

#[test]
fn fixed_ctr_winner_is_the_top_bidder() {
    let trace = generate_synthetic(
        &SyntheticConfig {
            dim: 4,
            horizon: 500,
            fit_epochs: 20,
            ..SyntheticConfig::default()
        },
        7,
    )
    .unwrap();
    let mut overridden_wins = 0;
    for round in trace.rounds() {
        let n = round.num_ads();
        let est = baseline_fixed_ctr(0.5, n);
        assert!(est.iter().all(|&e| e == est[0]));
        let winner = allocate(&round.bids, &est).unwrap().winner;
        let top = round.bids.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(round.bids[winner], top);
        let lowest = (0..n)
            .min_by(|&a, &b| round.true_ctrs[a].total_cmp(&round.true_ctrs[b]))
            .unwrap();
        if round.bids.iter().filter(|&&b| b == top).count() == 1 {
            assert_eq!(winner, lowest);
            overridden_wins += 1;
        }
    }
    assert!(overridden_wins > 0);
}

#[test]
fn random_ctr_lets_every_ad_win() {
    let n = 6;
    let bids = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let mut rng = substream(3, Stream::Learner);
    let mut wins = [0usize; 6];
    for _ in 0..10_000 {
        let est = baseline_random_ctr(n, &mut rng);
        assert!(est.iter().all(|e| (0.0..=1.0).contains(e)));
        wins[allocate(&bids, &est).unwrap().winner] += 1;
    }
    assert!(wins.iter().all(|&w| w > 0), "{wins:?}");

    let mut again = substream(3, Stream::Learner);
    let mut first = substream(3, Stream::Learner);
    assert_eq!(
        baseline_random_ctr(n, &mut again),
        baseline_random_ctr(n, &mut first)
    );
}

#[test]
fn replay_runs_every_seed_on_the_saved_trace() {
    let cfg = config(
        r#"
[[algorithms]]
kind = "fixed_ctr"

[[algorithms]]
kind = "random_ctr"
"#,
    );
    let trace = cfg.environment.generate(0).unwrap();
    let results = run_replay(&cfg, trace, 1).unwrap();
    assert_eq!(results.len(), 8);
    // The fixed-CTR learner uses no randomness, so its regret differs across
    // seeds only through the clicks.
    assert!(
        results
            .iter()
            .filter(|r| r.algorithm == "fixed_ctr")
            .count()
            == 4
    );
}

fn config_error(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text).and_then(|c| c.validate()) {
        Err(BenchError::Config(m)) => m,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let ips_sgld = config_error(&format!(
        "{SMALL_SYNTHETIC}\n[[algorithms]]\nkind = \"sgld_exp_weights\"\nestimator = \"ips\"\n\
         learning_rate = [0.25]\nstep_size = [0.01]\n"
    ));
    assert!(
        ips_sgld.contains("ips") || ips_sgld.contains("IPS"),
        "{ips_sgld}"
    );

    let no_algorithms = config_error(&format!("{SMALL_SYNTHETIC}\nalgorithms = []\n"));
    assert!(no_algorithms.contains("algorithm"), "{no_algorithms}");

    config_error(&format!(
        "{SMALL_SYNTHETIC}\n[[algorithms]]\nkind = \"fixed_ctr\"\ncolour = 1\n"
    ));
    config_error(&format!(
        "{SMALL_SYNTHETIC}\n[[algorithms]]\nkind = \"finite_exp_weights\"\nestimator = \"ips\"\n\
         grid = 10\nlearning_rate = [0.1]\n"
    ));
    config_error(&format!("{SMALL_SYNTHETIC}\n[[algorithms]]\nkind = \"epsilon_greedy\"\nogd_step = [0.1]\nsigma = 0.5\n"));
    config_error(&(SMALL_SYNTHETIC.replace("seeds = [0, 1, 2, 3]", "seeds = [1, 1]") + FIVE));
}

#[test]
fn overrides_set_nested_keys_and_array_entries() {
    let text = format!("{SMALL_SYNTHETIC}\n{FIVE}");
    let cfg = ExperimentConfig::from_toml_with_overrides(
        &text,
        &[
            "environment.horizon=50".into(),
            "algorithms.0.step_size=[0.5, 0.25]".into(),
            "output=elsewhere".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.horizon(), 50);
    assert_eq!(cfg.output.as_deref(), Some("elsewhere"));
    assert_eq!(cfg.algorithms[0].grid(&cfg.environment).unwrap().len(), 2);

    let mut doc = toml::Table::new();
    assert!(apply_override(&mut doc, "no_equals_sign").is_err());
}

#[test]
fn record_stride_defaults_to_two_hundred_points() {
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "{}\n[[algorithms]]\nkind = \"fixed_ctr\"\n",
        SMALL_SYNTHETIC
            .replace("record_stride = 20", "")
            .replace("horizon = 200", "horizon = 1000")
    ))
    .unwrap();
    assert_eq!(cfg.stride(), 5);
    let results = run_experiment(&cfg, 1).unwrap();
    assert_eq!(results[0].trace.len(), 200);
}
