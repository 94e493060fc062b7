//! Mean and spread of cumulative regret across seeds at the best grid point.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::Selection;
use crate::runner::RunResult;

/// One run's recorded regret curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurve {
    pub algorithm: String,
    pub grid_id: usize,
    pub seed: u64,
    pub points: Vec<(usize, f64)>,
}

impl RunCurve {
    pub fn final_regret(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.1)
    }
}

impl From<&RunResult> for RunCurve {
    fn from(r: &RunResult) -> Self {
        Self {
            algorithm: r.algorithm.clone(),
            grid_id: r.grid_id,
            seed: r.seed,
            points: r.trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub round: usize,
    pub mean: f64,
    pub std: f64,
}

/// Grid point(s) reported for an algorithm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestChoice {
    pub algorithm: String,
    /// `(seed, grid_id)` pairs; the grid id is shared under joint selection.
    pub grid_by_seed: Vec<(u64, usize)>,
    pub mean_final_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub best: Vec<BestChoice>,
}

impl Summary {
    /// Mean final regret of `algorithm` at its selected grid point.
    pub fn final_mean(&self, algorithm: &str) -> Option<f64> {
        self.best
            .iter()
            .find(|b| b.algorithm == algorithm)
            .map(|b| b.mean_final_regret)
    }

    /// Summary row of `algorithm` at `round`.
    pub fn at(&self, algorithm: &str, round: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.algorithm == algorithm && r.round == round)
    }
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn algorithms_in_order(curves: &[RunCurve]) -> Vec<&str> {
    let mut seen = Vec::new();
    for c in curves {
        if !seen.contains(&c.algorithm.as_str()) {
            seen.push(c.algorithm.as_str());
        }
    }
    seen
}

fn select<'a>(curves: &[&'a RunCurve], selection: Selection) -> Vec<&'a RunCurve> {
    match selection {
        Selection::Joint => {
            let mut by_grid: BTreeMap<usize, Vec<&RunCurve>> = BTreeMap::new();
            for c in curves {
                by_grid.entry(c.grid_id).or_default().push(c);
            }
            let mut best: Option<(f64, Vec<&RunCurve>)> = None;
            for (_, group) in by_grid {
                let finals: Vec<f64> = group.iter().map(|c| c.final_regret()).collect();
                let m = mean_std(&finals).0;
                if best.as_ref().is_none_or(|(b, _)| m < *b) {
                    best = Some((m, group));
                }
            }
            best.map(|b| b.1).unwrap_or_default()
        }
        Selection::PerSeed => {
            let mut by_seed: BTreeMap<u64, &RunCurve> = BTreeMap::new();
            for c in curves {
                let entry = by_seed.entry(c.seed).or_insert(c);
                let better = c.final_regret() < entry.final_regret()
                    || (c.final_regret() == entry.final_regret() && c.grid_id < entry.grid_id);
                if better {
                    *entry = c;
                }
            }
            by_seed.into_values().collect()
        }
    }
}

pub fn summarize(curves: &[RunCurve], selection: Selection) -> Summary {
    let mut rows = Vec::new();
    let mut best = Vec::new();
    for alg in algorithms_in_order(curves) {
        let mine: Vec<&RunCurve> = curves.iter().filter(|c| c.algorithm == alg).collect();
        let chosen = select(&mine, selection);
        let mut by_round: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &chosen {
            for &(round, v) in &c.points {
                by_round.entry(round).or_default().push(v);
            }
        }
        for (round, vals) in by_round {
            let (mean, std) = mean_std(&vals);
            rows.push(SummaryRow {
                algorithm: alg.to_owned(),
                round,
                mean,
                std,
            });
        }
        let finals: Vec<f64> = chosen.iter().map(|c| c.final_regret()).collect();
        best.push(BestChoice {
            algorithm: alg.to_owned(),
            grid_by_seed: chosen.iter().map(|c| (c.seed, c.grid_id)).collect(),
            mean_final_regret: mean_std(&finals).0,
        });
    }
    Summary { rows, best }
}

pub fn summarize_results(results: &[RunResult], selection: Selection) -> Summary {
    let curves: Vec<RunCurve> = results.iter().map(RunCurve::from).collect();
    summarize(&curves, selection)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(alg: &str, grid_id: usize, seed: u64, vals: &[f64]) -> RunCurve {
        RunCurve {
            algorithm: alg.into(),
            grid_id,
            seed,
            points: vals
                .iter()
                .enumerate()
                .map(|(k, v)| ((k + 1) * 10, *v))
                .collect(),
        }
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        let (m, s) = mean_std(&[10.0, 14.0]);
        assert_eq!(m, 12.0);
        assert!((s - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn joint_selection_picks_lowest_mean_final() {
        let curves = vec![
            curve("a", 0, 0, &[1.0, 10.0]),
            curve("a", 0, 1, &[1.0, 2.0]),
            curve("a", 1, 0, &[1.0, 5.0]),
            curve("a", 1, 1, &[1.0, 5.0]),
        ];
        let s = summarize(&curves, Selection::Joint);
        assert_eq!(s.best[0].grid_by_seed, vec![(0, 1), (1, 1)]);
        assert_eq!(s.final_mean("a"), Some(5.0));
        assert_eq!(s.at("a", 20).unwrap().std, 0.0);

        let s = summarize(&curves, Selection::PerSeed);
        assert_eq!(s.best[0].grid_by_seed, vec![(0, 1), (1, 0)]);
        assert_eq!(s.final_mean("a"), Some(3.5));
    }

    #[test]
    fn algorithms_keep_first_appearance_order() {
        let curves = vec![curve("z", 0, 0, &[1.0]), curve("b", 0, 0, &[2.0])];
        let s = summarize(&curves, Selection::Joint);
        assert_eq!(s.rows[0].algorithm, "z");
        assert_eq!(s.rows[1].algorithm, "b");
    }
}
