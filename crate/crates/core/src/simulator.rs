//! Monte Carlo study of stopping policies against categorical answer
//! distributions estimated from sample pools.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::{sequential_testing_blocking, RunOptions};
use crate::seed::SeedPath;
use crate::solvers::{CategoricalDist, CostModel, MockSolver, ProblemSpec, SamplePool};
use crate::stopping::{CompiledPolicy, PolicyFamily, StoppingPolicy};
use crate::tally::{normalize_answer, AnswerKey, VoteTally};

/// A categorical answer distribution with its mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDistribution {
    pub dist: CategoricalDist,
    pub source_question: String,
    /// Argmax of the probabilities, earliest category on ties.
    pub true_mode: AnswerKey,
    pub gold: Option<AnswerKey>,
}

impl SyntheticDistribution {
    pub fn new(
        source_question: impl Into<String>,
        entries: Vec<(AnswerKey, f64)>,
        gold: Option<AnswerKey>,
    ) -> Result<Self> {
        let dist = CategoricalDist::new(entries)?;
        let mut best: Option<(&AnswerKey, f64)> = None;
        for (k, p) in dist.iter() {
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((k, p));
            }
        }
        let true_mode = best.expect("non-empty distribution").0.clone();
        Ok(SyntheticDistribution {
            dist,
            source_question: source_question.into(),
            true_mode,
            gold,
        })
    }

    pub fn prob(&self, key: &AnswerKey) -> f64 {
        self.dist
            .iter()
            .find(|(k, _)| *k == key)
            .map_or(0.0, |(_, p)| p)
    }
}

/// Maximum-likelihood distribution of a pool's normalized answers.
pub fn estimate_distribution(pool: &SamplePool) -> Result<SyntheticDistribution> {
    if pool.samples.is_empty() {
        return Err(Error::domain(format!(
            "sample pool '{}' is empty",
            pool.question_id
        )));
    }
    let tally: VoteTally = pool.samples.iter().map(|s| normalize_answer(s)).collect();
    let n = tally.total() as f64;
    let entries = tally
        .entries()
        .iter()
        .map(|e| (e.key.clone(), e.count as f64 / n))
        .collect();
    SyntheticDistribution::new(
        pool.question_id.clone(),
        entries,
        pool.gold_answer.as_deref().map(normalize_answer),
    )
}

/// A mock solver answering each pool's question from its estimated distribution.
pub fn mock_solver_from_pools(pools: &[SamplePool], cost: CostModel) -> Result<MockSolver> {
    let by_question = pools
        .iter()
        .map(|p| Ok((p.question_id.clone(), estimate_distribution(p)?.dist)))
        .collect::<Result<_>>()?;
    Ok(MockSolver::per_question(by_question, cost))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub avg_runs: f64,
    /// Fraction of trials whose answer equals the distribution's mode.
    pub consistency: f64,
    /// Fraction of trials whose answer equals the gold answer, if known.
    pub hit_gold: Option<f64>,
}

/// Seed of one trial, keyed by question, policy and trial index.
fn trial_seed(master: u64, question: &str, policy: &StoppingPolicy, trial: u64) -> u64 {
    let policy_key = serde_json::to_string(policy).expect("policy serializes");
    SeedPath::new(master)
        .label(question)
        .label(&policy_key)
        .index(trial)
        .value()
}

/// Runs the scheduler `trials` times against a mock solver drawing from `dist`.
pub fn simulate_question(
    dist: &SyntheticDistribution,
    policy: &CompiledPolicy,
    trials: u64,
    seed: u64,
) -> Result<QuestionOutcome> {
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    let solver = MockSolver::single(dist.dist.clone(), CostModel::default());
    let problem = ProblemSpec::new(dist.source_question.clone(), "");
    let (runs, consistent, hits) = (0..trials)
        .into_par_iter()
        .map(|t| {
            let options = RunOptions {
                run_seed: trial_seed(seed, &dist.source_question, policy.policy(), t),
                max_in_flight: usize::MAX,
            };
            let trace = sequential_testing_blocking(&problem, policy, &solver, options)?;
            let answer = trace.final_answer.as_ref();
            Ok((
                trace.n_samples(),
                (answer == Some(&dist.true_mode)) as u64,
                (dist.gold.is_some() && answer == dist.gold.as_ref()) as u64,
            ))
        })
        .try_reduce(|| (0, 0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1, a.2 + b.2)))?;
    let n = trials as f64;
    Ok(QuestionOutcome {
        avg_runs: runs as f64 / n,
        consistency: consistent as f64 / n,
        hit_gold: dist.gold.as_ref().map(|_| hits as f64 / n),
    })
}

/// One grid value of a sweep, averaged over questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub policy_label: String,
    pub param_value: f64,
    pub avg_runs: f64,
    pub consistency: f64,
    /// Present when every pool has a gold answer.
    pub accuracy: Option<f64>,
}

/// Built-in grids. Self-consistency, AdaCons and mSPRT use the standard
/// sweep ranges; p-value and SPRT grids cover comparable lead thresholds.
pub fn default_grid(family: PolicyFamily) -> Vec<f64> {
    match family {
        PolicyFamily::SelfConsistency => (1..=40).map(f64::from).collect(),
        PolicyFamily::AdaCons => vec![0.74, 0.8, 0.85, 0.9, 0.95, 0.99, 0.995, 0.999, 0.9999],
        PolicyFamily::Msprt => (0..10).map(|i| f64::from(94_979 + 2 * i) / 1e5).collect(),
        PolicyFamily::Sprt => (0..9).map(|i| f64::from(94_990 + i) / 1e5).collect(),
        PolicyFamily::PValue => vec![0.2, 0.1, 0.05, 0.01, 0.005, 0.001],
    }
}

/// Simulates every grid value of `family` on every pool. Points are
/// macro-averaged over pools and returned sorted by `avg_runs`.
pub fn sweep(
    pools: &[SamplePool],
    family: PolicyFamily,
    grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::domain("sweep grid is empty"));
    }
    if pools.is_empty() {
        return Err(Error::domain("sweep needs at least one sample pool"));
    }
    let policies = grid
        .iter()
        .map(|&v| family.with_param(v).and_then(CompiledPolicy::new))
        .collect::<Result<Vec<_>>>()?;
    let dists = pools
        .iter()
        .map(estimate_distribution)
        .collect::<Result<Vec<_>>>()?;
    let all_gold = dists.iter().all(|d| d.gold.is_some());

    let mut points = Vec::with_capacity(grid.len());
    for (&param, policy) in grid.iter().zip(&policies) {
        let outcomes = dists
            .par_iter()
            .map(|d| simulate_question(d, policy, trials, seed))
            .collect::<Result<Vec<_>>>()?;
        let m = outcomes.len() as f64;
        points.push(SweepPoint {
            policy_label: family.name().to_string(),
            param_value: param,
            avg_runs: outcomes.iter().map(|o| o.avg_runs).sum::<f64>() / m,
            consistency: outcomes.iter().map(|o| o.consistency).sum::<f64>() / m,
            accuracy: all_gold.then(|| outcomes.iter().filter_map(|o| o.hit_gold).sum::<f64>() / m),
        });
    }
    points.sort_by(|a, b| {
        a.avg_runs
            .total_cmp(&b.avg_runs)
            .then(a.param_value.total_cmp(&b.param_value))
    });
    Ok(points)
}

pub const SWEEP_CSV_HEADER: [&str; 5] = ["policy", "param", "avg_runs", "consistency", "accuracy"];

/// Writes sweep points as CSV with header `policy,param,avg_runs,consistency,accuracy`.
pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(SWEEP_CSV_HEADER).map_err(to_err)?;
    for p in points {
        w.write_record([
            p.policy_label.clone(),
            format!("{}", p.param_value),
            format!("{:.6}", p.avg_runs),
            format!("{:.6}", p.consistency),
            p.accuracy.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pools of 40 draws from Dirichlet(1, …, 1) distributions over 2 to 8
/// answers. The gold answer is the argmax of the generating distribution.
pub fn synthetic_suite(n_pools: usize, seed: u64) -> Vec<SamplePool> {
    const POOL_SIZE: usize = 40;
    (0..n_pools)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                SeedPath::new(seed).label("suite").index(i as u64).value(),
            );
            let k: usize = rng.gen_range(2..=8);
            let probs: Vec<f64> = Dirichlet::new(&vec![1.0; k])
                .expect("valid concentration")
                .sample(&mut rng);
            let keys: Vec<AnswerKey> = (0..k)
                .map(|j| AnswerKey::from_canonical(format!("{}", 10 + j)))
                .collect();
            let dist =
                CategoricalDist::new(keys.iter().cloned().zip(probs.iter().copied()).collect())
                    .expect("dirichlet draw is a distribution");
            let gold = probs
                .iter()
                .enumerate()
                .fold(0, |best, (j, &p)| if p > probs[best] { j } else { best });
            let samples = (0..POOL_SIZE)
                .map(|_| dist.sample(&mut rng).as_str().to_string())
                .collect();
            SamplePool::new(
                format!("synthetic-{i:04}"),
                samples,
                Some(keys[gold].as_str().to_string()),
            )
            .expect("non-empty pool")
        })
        .collect()
}

/// Gap between the two largest answer counts of a pool.
pub fn top_two_gap(pool: &SamplePool) -> u64 {
    let tally: VoteTally = pool.samples.iter().map(|s| normalize_answer(s)).collect();
    let top = tally.top_two();
    top.n_first - top.n_second
}
