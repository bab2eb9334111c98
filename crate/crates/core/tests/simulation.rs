//! Monte Carlo behaviour of the scheduler and simulator.

use proptest::prelude::*;
use seqvote::fixtures::torus_pool;
use seqvote::scheduler::{sequential_testing_blocking, RunOptions, StopReason};
use seqvote::simulator::{estimate_distribution, simulate_question, sweep, SyntheticDistribution};
use seqvote::solvers::{CategoricalDist, CostModel, MockSolver, ProblemSpec, SamplePool};
use seqvote::stopping::{CompiledPolicy, PolicyFamily, StoppingPolicy};
use seqvote::tally::AnswerKey;

fn key(s: &str) -> AnswerKey {
    AnswerKey::from_canonical(s)
}

fn two_way(p: f64) -> SyntheticDistribution {
    SyntheticDistribution::new(
        "two-way",
        vec![(key("a"), p), (key("b"), 1.0 - p)],
        Some(key("a")),
    )
    .unwrap()
}

fn msprt(beta: f64) -> CompiledPolicy {
    CompiledPolicy::new(PolicyFamily::Msprt.with_param(beta).unwrap()).unwrap()
}

#[test]
fn msprt_cost_falls_as_beta_rises_on_torus() {
    let dist = estimate_distribution(&torus_pool()).unwrap();
    let runs: Vec<f64> = [0.94979, 0.94989, 0.94997]
        .into_iter()
        .map(|b| {
            simulate_question(&dist, &msprt(b), 400, 11)
                .unwrap()
                .avg_runs
        })
        .collect();
    assert!(runs[0] > runs[1] && runs[1] > runs[2], "{runs:?}");
}

#[test]
fn lopsided_question_is_answered_fast_and_consistently() {
    let out = simulate_question(&two_way(0.85), &msprt(0.94994), 2000, 3).unwrap();
    assert!(out.consistency > 0.95, "{out:?}");
    assert!(out.avg_runs < 6.0, "{out:?}");
    assert_eq!(out.hit_gold, Some(out.consistency));
}

#[test]
fn simulation_is_reproducible() {
    let d = two_way(0.6);
    let policy = CompiledPolicy::new(StoppingPolicy::adacons(0.95)).unwrap();
    let a = simulate_question(&d, &policy, 300, 99).unwrap();
    let b = simulate_question(&d, &policy, 300, 99).unwrap();
    assert_eq!(a, b);
}

#[test]
fn self_consistency_sweep_spends_exactly_n() {
    let pool = SamplePool::new("p", vec!["1".into(), "2".into(), "1".into()], None).unwrap();
    let points = sweep(
        &[pool],
        PolicyFamily::SelfConsistency,
        &[1.0, 5.0, 12.0],
        50,
        0,
    )
    .unwrap();
    let runs: Vec<f64> = points.iter().map(|p| p.avg_runs).collect();
    assert_eq!(runs, vec![1.0, 5.0, 12.0]);
    assert!(points.iter().all(|p| p.accuracy.is_none()));
}

#[test]
fn near_uniform_question_hits_the_budget() {
    let dist = CategoricalDist::new(vec![(key("x"), 0.5), (key("y"), 0.5)]).unwrap();
    let solver = MockSolver::single(dist, CostModel::default());
    let policy =
        CompiledPolicy::new(StoppingPolicy::sprt_calibrated().with_max_samples(20)).unwrap();
    let exhausted = (0..200)
        .map(|seed| {
            let options = RunOptions {
                run_seed: seed,
                ..RunOptions::default()
            };
            sequential_testing_blocking(&ProblemSpec::new("u", ""), &policy, &solver, options)
                .unwrap()
        })
        .filter(|t| t.stop_reason == StopReason::BudgetExhausted)
        .count();
    // A fair ±1 walk stays within two of its start for 20 steps in roughly
    // one run out of fourteen.
    assert!(exhausted > 0 && exhausted < 100, "{exhausted}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Under the calibrated rules a run either ends with a lead of at least
    /// three or spends its whole budget.
    #[test]
    fn stop_implies_lead_or_budget(p in 0.3f64..0.9, seed in any::<u64>(), msprt_rule in any::<bool>()) {
        let dist = CategoricalDist::new(vec![(key("a"), p), (key("b"), (1.0 - p) * 0.7), (key("c"), (1.0 - p) * 0.3)]).unwrap();
        let solver = MockSolver::single(dist, CostModel::default());
        let base = if msprt_rule { StoppingPolicy::msprt_calibrated() } else { StoppingPolicy::sprt_calibrated() };
        let policy = CompiledPolicy::new(base.with_max_samples(30)).unwrap();
        let options = RunOptions { run_seed: seed, ..RunOptions::default() };
        let trace = sequential_testing_blocking(&ProblemSpec::new("q", ""), &policy, &solver, options).unwrap();
        let top = trace.tally().top_two();
        let (n1, n2) = (top.n_first, top.n_second);
        match trace.stop_reason {
            StopReason::StopDominant => prop_assert!(n1 - n2 >= 3),
            StopReason::BudgetExhausted => prop_assert_eq!(trace.n_samples(), 30),
            StopReason::StopNoDominance => prop_assert!(false, "calibrated rules never accept the null"),
        }
        prop_assert_eq!(trace.turn_batches.iter().sum::<u64>(), trace.n_samples());
        prop_assert!(trace.n_samples() <= 30);
    }
}
