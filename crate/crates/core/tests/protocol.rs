use std::sync::Arc;

use ctr_auction::auction::{max_smax, oracle_round_revenue};
use ctr_auction::environments::{
    generate_synthetic, hard_instance_with_pair, read_trace, write_trace, GroundTruth,
    SyntheticConfig,
};
use ctr_auction::exp_weights::{
    ips_loss, winner_probabilities, Estimator, FiniteEwState, FiniteExpWeights, RoundObservation,
};
use ctr_auction::learner::{play_round, run_learner, Learner, RoundFeedback};
use ctr_auction::predictors::{
    ConstantPredictor, ContextMatrix, CtrPredictor, DiscretizedConstantClass, FiniteClass,
    FinitePredictorClass, SigmoidLinearPredictor,
};
use ctr_auction::regression::{EpsilonGreedy, ExplorationPolicy, RegressionOracle};
use ctr_auction::rng::{substream, SimRng, Stream};
use ctr_auction::Result;
use proptest::prelude::*;
use rand::Rng;

fn small_config(horizon: usize) -> SyntheticConfig {
    SyntheticConfig {
        dim: 4,
        horizon,
        fit_epochs: 30,
        ..SyntheticConfig::default()
    }
}

/// Exhaustive expectation of the IPS loss over the winner and the click.
fn ips_expectation(
    class: &FinitePredictorClass<ConstantPredictor>,
    weights: &[f64],
    f: usize,
    bids: &[f64],
    rho: &[f64],
) -> f64 {
    let n = bids.len();
    let ctx = Arc::new(ContextMatrix::featureless(n));
    let p = winner_probabilities(class, weights, &ctx, bids).unwrap();
    let mut preds = Vec::new();
    class.predict_into(f, &ctx, &mut preds).unwrap();
    let mut total = 0.0;
    for i in 0..n {
        if p[i] == 0.0 {
            continue;
        }
        for (clicked, prob) in [(true, rho[i]), (false, 1.0 - rho[i])] {
            let obs = RoundObservation::new(Arc::clone(&ctx), bids.to_vec(), i, clicked).unwrap();
            total += p[i] * prob * ips_loss(&preds, &obs, p[i]).unwrap();
        }
    }
    total
}

proptest! {
    #[test]
    fn ips_loss_is_unbiased(seed in any::<u64>(), n in 2usize..=5, size in 1usize..=8) {
        let mut rng = substream(seed, Stream::Learner);
        let class = FinitePredictorClass::new(
            (0..size)
                .map(|_| ConstantPredictor { theta: (0..n).map(|_| rng.random_range(0.05..=1.0)).collect() })
                .collect(),
        ).unwrap();
        let raw: Vec<f64> = (0..size).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let bids: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=1.0)).collect();
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        for f in 0..size {
            let theta = &class.predictors()[f].theta;
            let scores: Vec<f64> = bids.iter().zip(theta).map(|(b, t)| b * t).collect();
            let ms = max_smax(&scores).unwrap();
            let closed = 1.0 - rho[ms.argmax] * ms.smax / theta[ms.argmax];
            let got = ips_expectation(&class, &weights, f, &bids, &rho);
            prop_assert!((got - closed).abs() < 1e-10, "f {f}: {got} vs {closed}");
        }
    }
}

#[test]
fn winner_probabilities_match_sampling_frequencies() {
    let class = DiscretizedConstantClass::new(3, 3, 1_000_000).unwrap();
    let mut state = FiniteEwState::new(class.len(), 0.7).unwrap();
    let mut rng = substream(21, Stream::Learner);
    let losses: Vec<f64> = (0..class.len())
        .map(|_| rng.random_range(0.0..3.0))
        .collect();
    state.add_losses(&losses);
    let ctx = ContextMatrix::featureless(3);
    let bids = [0.4, 0.9, 0.7];
    let p = winner_probabilities(&class, &state.weights(), &ctx, &bids).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

    let draws = 100_000;
    let mut counts = [0usize; 3];
    let mut preds = Vec::new();
    let weights = state.weights();
    for _ in 0..draws {
        let k = ctr_auction::exp_weights::sample_categorical(&weights, rng.random());
        class.predict_into(k, &ctx, &mut preds).unwrap();
        let scores: Vec<f64> = bids.iter().zip(&preds).map(|(b, f)| b * f).collect();
        counts[max_smax(&scores).unwrap().argmax] += 1;
    }
    for i in 0..3 {
        let freq = counts[i] as f64 / draws as f64;
        let sd = (p[i] * (1.0 - p[i]) / draws as f64).sqrt();
        assert!(
            (freq - p[i]).abs() <= 3.0 * sd + 1e-12,
            "ad {i}: {freq} vs {}",
            p[i]
        );
    }
}

struct KnownTruth(SigmoidLinearPredictor);

impl RegressionOracle for KnownTruth {
    fn predict_all(&self, context: &ContextMatrix) -> Result<Vec<f64>> {
        self.0.predict_all(context)
    }

    fn observe(&mut self, _context: &ContextMatrix, _ad: usize, _clicked: bool) -> Result<()> {
        Ok(())
    }
}

#[test]
fn greedy_with_a_perfect_oracle_earns_the_oracle_revenue() {
    let trace = generate_synthetic(&small_config(100), 3).unwrap();
    let GroundTruth::Contextual { predictor } = trace.truth() else {
        panic!("synthetic traces are contextual");
    };
    let truth = predictor.to_sigmoid_linear().unwrap();
    let mut learner =
        EpsilonGreedy::new(KnownTruth(truth), ExplorationPolicy::one_hot(0.0).unwrap());
    let mut rng = substream(3, Stream::Learner);
    for (k, round) in trace.rounds().iter().enumerate() {
        let r = play_round(&mut learner, k + 1, round, 0.5, &mut rng).unwrap();
        let oracle = oracle_round_revenue(&round.bids, &round.true_ctrs).unwrap();
        assert!((r.expected_payment - oracle).abs() < 1e-12);
    }
}

#[test]
fn one_hot_exploration_pays_nothing() {
    let trace = generate_synthetic(&small_config(50), 4).unwrap();
    let mut learner = EpsilonGreedy::new(
        ctr_auction::regression::OgdOracle::zeros(4, 1.0, 0.01).unwrap(),
        ExplorationPolicy::one_hot(1.0).unwrap(),
    );
    let mut rng = substream(4, Stream::Learner);
    for (k, round) in trace.rounds().iter().enumerate() {
        let r = play_round(&mut learner, k + 1, round, 0.0, &mut rng).unwrap();
        assert_eq!(r.outcome.payment, 0.0);
        assert_eq!(r.outcome.price_per_click, 0.0);
    }
}

struct AlwaysAd(usize);

impl Learner for AlwaysAd {
    fn propose(
        &mut self,
        _t: usize,
        context: &ContextMatrix,
        _rng: &mut SimRng,
    ) -> Result<Vec<f64>> {
        let mut e = vec![0.5; context.num_ads()];
        e[self.0] = 1.0;
        Ok(e)
    }

    fn observe(&mut self, _t: usize, _feedback: &RoundFeedback<'_>) -> Result<()> {
        Ok(())
    }
}

#[test]
fn fixed_non_elevated_ad_has_at_least_gap_regret_per_round() {
    let (n, horizon) = (5, 2000);
    let trace = hard_instance_with_pair(n, horizon, (1, 3), 0).unwrap();
    let gap = 0.25 * (n as f64 / horizon as f64).sqrt();
    let mut learner = AlwaysAd(0);
    let mut rng = substream(0, Stream::Learner);
    let mut expected_regret = 0.0;
    for (k, round) in trace.rounds().iter().enumerate() {
        let r = play_round(&mut learner, k + 1, round, 0.0, &mut rng).unwrap();
        assert_eq!(r.outcome.winner, 0);
        assert!((r.oracle_revenue - (0.5 + gap)).abs() < 1e-15);
        let per_round = r.oracle_revenue - r.expected_payment;
        assert!(per_round >= gap - 1e-15);
        expected_regret += per_round;
    }
    assert!(expected_regret >= gap * horizon as f64 - 1e-9);
}

#[test]
fn ledger_matches_round_by_round_sum() {
    let trace = generate_synthetic(&small_config(80), 8).unwrap();
    let class = FinitePredictorClass::new(vec![
        ConstantPredictor {
            theta: vec![0.5; 10],
        },
        ConstantPredictor {
            theta: (0..10).map(|i| 0.1 + 0.08 * i as f64).collect(),
        },
    ])
    .unwrap();
    // Constant predictors are sized for 10 ads; truncate to each round's ad count.
    struct Truncating(FiniteExpWeights<FinitePredictorClass<ConstantPredictor>>);
    impl Learner for Truncating {
        fn propose(
            &mut self,
            t: usize,
            context: &ContextMatrix,
            rng: &mut SimRng,
        ) -> Result<Vec<f64>> {
            let full = ContextMatrix::featureless(10);
            let mut p = self.0.propose(t, &full, rng)?;
            p.truncate(context.num_ads());
            Ok(p)
        }
        fn observe(&mut self, _t: usize, _feedback: &RoundFeedback<'_>) -> Result<()> {
            Ok(())
        }
    }
    let mut learner = Truncating(FiniteExpWeights::new(class, 0.5, Estimator::OptSq).unwrap());
    let run = |learner: &mut Truncating| {
        run_learner(
            learner,
            &trace,
            &mut substream(8, Stream::Clicks),
            &mut substream(8, Stream::Learner),
        )
        .unwrap()
    };
    let ledger = run(&mut learner);
    let sum: f64 = ledger
        .records()
        .iter()
        .map(|r| r.oracle_revenue - r.payment)
        .sum();
    assert!((ledger.cumulative_regret() - sum).abs() < 1e-9);
    assert_eq!(ledger.len(), 80);
}

#[test]
fn synthetic_trace_survives_a_file_round_trip() {
    let trace = generate_synthetic(&small_config(60), 12).unwrap();
    let dir = std::env::temp_dir().join(format!("ctr-auction-trace-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("trace.csv");
    write_trace(
        &trace,
        std::io::BufWriter::new(std::fs::File::create(&path).unwrap()),
    )
    .unwrap();
    let back = read_trace(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(back, trace);
}
