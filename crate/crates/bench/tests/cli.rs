use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seeds = [0, 1]
record_stride = 10

[environment]
kind = "hard_instance"
num_ads = 4
horizon = 100

[[algorithms]]
name = "ips"
kind = "finite_exp_weights"
estimator = "ips"
grid = 4
learning_rate = [0.1, 0.2]

[[algorithms]]
kind = "fixed_ctr"
"#;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auction-bench"))
        .args(args)
        .env_remove("AUCTION_BENCH_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn utf8(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn run_writes_results_and_summarize_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = bench(&[
        "run",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert!(o.status.success(), "{}", utf8(&o.stderr));
    assert!(utf8(&o.stderr).contains("mean final regret"));
    for f in ["results.csv", "summary.csv", "run.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(results.starts_with("algorithm,grid_id,seed,round,cum_regret"));
    // Two grid points and one baseline, two seeds, ten recorded rounds each.
    assert_eq!(results.lines().count(), 1 + (2 + 1) * 2 * 10);

    let o = bench(&["summarize", out.join("results.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", utf8(&o.stderr));
    assert_eq!(
        utf8(&o.stdout),
        fs::read_to_string(out.join("summary.csv")).unwrap()
    );

    let o = bench(&[
        "summarize",
        out.join("results.csv").to_str().unwrap(),
        "--selection",
        "per-seed",
    ]);
    assert!(o.status.success());
}

#[test]
fn overrides_and_worker_variable_are_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_auction-bench"))
        .args(["run", &config, "--out", out.to_str().unwrap()])
        .args([
            "--override",
            "environment.horizon=40",
            "--override",
            "seeds=[5]",
        ])
        .env("AUCTION_BENCH_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", utf8(&o.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    let last = results.lines().last().unwrap();
    assert!(last.ends_with(&format!(",{}", last.split(',').nth(4).unwrap())));
    assert!(results
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(2) == Some("5")));
    assert!(results
        .lines()
        .skip(1)
        .any(|l| l.split(',').nth(3) == Some("40")));
}

#[test]
fn trace_then_replay_matches_a_direct_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &CONFIG.replace("seeds = [0, 1]", "seeds = [3]"));
    let trace = dir.path().join("trace.csv");
    let o = bench(&[
        "trace",
        &config,
        "--seed",
        "3",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", utf8(&o.stderr));
    assert!(fs::read_to_string(&trace).unwrap().starts_with('#'));

    let (direct, replayed) = (dir.path().join("direct"), dir.path().join("replayed"));
    assert!(bench(&["run", &config, "--out", direct.to_str().unwrap()])
        .status
        .success());
    let o = bench(&[
        "replay",
        trace.to_str().unwrap(),
        &config,
        "--out",
        replayed.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", utf8(&o.stderr));
    assert_eq!(
        fs::read(direct.join("results.csv")).unwrap(),
        fs::read(replayed.join("results.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = [
        CONFIG.replace("estimator = \"ips\"", "estimator = \"bogus\""),
        CONFIG.replace("seeds = [0, 1]", "seeds = []"),
        format!("{CONFIG}\n[[algorithms]]\nkind = \"sgld_exp_weights\"\nestimator = \"optsq\"\nlearning_rate = [0.25]\nstep_size = [0.01]\n"),
        "not toml at all [".to_owned(),
    ];
    for text in &bad {
        let config = write_config(dir.path(), text);
        let o = bench(&["run", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}\n{}", utf8(&o.stderr));
        assert!(
            !out.exists(),
            "nothing may be written for an invalid config"
        );
    }
    let config = write_config(dir.path(), CONFIG);
    let o = bench(&["run", &config, "--override", "missing_equals"]);
    assert_eq!(o.status.code(), Some(2));
    let o = bench(&["run", dir.path().join("absent.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), CONFIG);
    // The output directory cannot be created under a regular file.
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = bench(&[
        "run",
        &config,
        "--out",
        blocker.join("out").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", utf8(&o.stderr));

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "algorithm,grid_id\nx,not-a-number\n").unwrap();
    let o = bench(&["summarize", garbage.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", utf8(&o.stderr));
}
