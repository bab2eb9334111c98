//! The sequential sampling loop.
//!
//! Each turn asks the policy for the smallest batch that could end the run if
//! every new sample agreed with the current leader, dispatches that batch
//! concurrently, waits for all of it, and re-evaluates. Decisions only ever
//! see whole turns.

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::solvers::{ProblemSpec, QueryContext, QueryRecord, Solver};
use crate::stopping::{CompiledPolicy, Decision};
use crate::tally::{AnswerKey, VoteTally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    StopDominant,
    StopNoDominance,
    BudgetExhausted,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::StopDominant => "stop_dominant",
            StopReason::StopNoDominance => "stop_no_dominance",
            StopReason::BudgetExhausted => "budget_exhausted",
        }
    }

    /// The rule's decision at the moment the run ended.
    pub fn decision(self) -> Decision {
        match self {
            StopReason::StopDominant => Decision::StopDominant,
            StopReason::StopNoDominance => Decision::StopNoDominance,
            StopReason::BudgetExhausted => Decision::Continue,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnPlan {
    pub batch_size: u64,
    pub turn_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<QueryRecord>,
    pub turn_batches: Vec<u64>,
    pub stop_reason: StopReason,
    pub final_answer: Option<AnswerKey>,
}

impl RunTrace {
    /// Tally of the successful records, in dispatch order.
    pub fn tally(&self) -> VoteTally {
        self.records
            .iter()
            .filter(|r| !r.is_error())
            .map(|r| r.answer.clone())
            .collect()
    }

    /// Samples charged against the budget, failed queries included.
    pub fn n_samples(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn n_errors(&self) -> u64 {
        self.records.iter().filter(|r| r.is_error()).count() as u64
    }

    pub fn prompt_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.prompt_tokens).sum()
    }

    pub fn completion_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.completion_tokens).sum()
    }

    /// Sum over turns of the slowest query in the turn: the wall time of the
    /// run when each turn is fully concurrent.
    pub fn critical_path_ms(&self) -> u64 {
        let mut total = 0;
        let mut offset = 0usize;
        for &k in &self.turn_batches {
            let turn = &self.records[offset..offset + k as usize];
            total += turn.iter().map(|r| r.latency_ms).max().unwrap_or(0);
            offset += k as usize;
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Seed for the solver's per-sample draws.
    pub run_seed: u64,
    /// Ceiling on in-flight queries within one turn.
    pub max_in_flight: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            run_seed: 0,
            max_in_flight: usize::MAX,
        }
    }
}

/// Plans the next turn from the current tally, or `None` when the run is over.
pub fn plan_turn(
    policy: &CompiledPolicy,
    tally: &VoteTally,
    n_observed: u64,
    turn_index: u64,
) -> Result<std::result::Result<TurnPlan, StopReason>> {
    let top = tally.top_two();
    match policy.decide(top.n_first, top.n_second, n_observed)? {
        Decision::StopDominant => return Ok(Err(StopReason::StopDominant)),
        Decision::StopNoDominance => return Ok(Err(StopReason::StopNoDominance)),
        Decision::Continue => {}
    }
    let batch_size = policy.determine_trial(top.n_first, top.n_second, n_observed)?;
    if batch_size == 0 {
        return Ok(Err(StopReason::BudgetExhausted));
    }
    Ok(Ok(TurnPlan {
        batch_size,
        turn_index,
    }))
}

pub async fn sequential_testing<S: Solver>(
    problem: &ProblemSpec,
    policy: &CompiledPolicy,
    solver: &S,
    options: RunOptions,
) -> Result<RunTrace> {
    let max_samples = policy.policy().max_samples;
    let mut tally = VoteTally::new();
    let mut records: Vec<QueryRecord> = Vec::new();
    let mut turn_batches = Vec::new();

    let stop_reason = loop {
        let observed = records.len() as u64;
        let plan = match plan_turn(policy, &tally, observed, turn_batches.len() as u64)? {
            Ok(plan) => plan,
            Err(reason) => break reason,
        };
        debug_assert!(observed + plan.batch_size <= max_samples);

        let batch: Vec<QueryRecord> = stream::iter(0..plan.batch_size)
            .map(|i| {
                solver.solve(
                    problem,
                    QueryContext {
                        run_seed: options.run_seed,
                        sample_index: observed + i,
                        turn_index: plan.turn_index,
                    },
                )
            })
            .buffered(options.max_in_flight.max(1))
            .collect()
            .await;

        for record in &batch {
            if !record.is_error() {
                tally.push(record.answer.clone());
            }
        }
        records.extend(batch);
        turn_batches.push(plan.batch_size);
    };

    Ok(RunTrace {
        final_answer: tally.mode(),
        records,
        turn_batches,
        stop_reason,
    })
}

/// Runs [`sequential_testing`] on the current thread. Only suitable for
/// solvers whose futures do not need an async runtime (mock and replay).
pub fn sequential_testing_blocking<S: Solver>(
    problem: &ProblemSpec,
    policy: &CompiledPolicy,
    solver: &S,
    options: RunOptions,
) -> Result<RunTrace> {
    futures::executor::block_on(sequential_testing(problem, policy, solver, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{CategoricalDist, CostModel, MockSolver};
    use crate::stopping::StoppingPolicy;

    struct Alternating;

    impl Solver for Alternating {
        async fn solve(&self, _p: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
            let answer = if ctx.sample_index.is_multiple_of(2) {
                "a"
            } else {
                "b"
            };
            QueryRecord {
                raw_text: answer.into(),
                answer: AnswerKey::from_canonical(answer),
                prompt_tokens: 1,
                completion_tokens: 2,
                latency_ms: ctx.sample_index,
                turn_index: ctx.turn_index,
                sample_index: ctx.sample_index,
                error: None,
            }
        }
    }

    struct AlwaysFails;

    impl Solver for AlwaysFails {
        async fn solve(&self, _p: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
            QueryRecord::failed(ctx, "boom")
        }
    }

    fn constant(answer: &str) -> MockSolver {
        MockSolver::single(
            CategoricalDist::degenerate(AnswerKey::from_canonical(answer)),
            CostModel::constant(10, 100),
        )
    }

    fn run<S: Solver>(policy: StoppingPolicy, solver: &S) -> RunTrace {
        let compiled = CompiledPolicy::new(policy).unwrap();
        sequential_testing_blocking(
            &ProblemSpec::new("q", "?"),
            &compiled,
            solver,
            RunOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn constant_solver_calibrated_sprt() {
        let trace = run(StoppingPolicy::sprt_calibrated(), &constant("A"));
        assert_eq!(trace.n_samples(), 3);
        assert_eq!(trace.turn_batches, vec![3]);
        assert_eq!(trace.final_answer.as_ref().unwrap().as_str(), "A");
        assert_eq!(trace.stop_reason, StopReason::StopDominant);
        assert_eq!(trace.prompt_tokens() + trace.completion_tokens(), 330);
    }

    #[test]
    fn constant_solver_pvalue() {
        let trace = run(StoppingPolicy::pvalue(0.05), &constant("A"));
        assert_eq!(trace.n_samples(), 5);
        assert_eq!(trace.final_answer.as_ref().unwrap().as_str(), "A");
    }

    #[test]
    fn alternating_solver_exhausts_budget() {
        let trace = run(
            StoppingPolicy::sprt_calibrated().with_max_samples(40),
            &Alternating,
        );
        assert_eq!(trace.n_samples(), 40);
        assert_eq!(trace.stop_reason, StopReason::BudgetExhausted);
        assert_eq!(trace.final_answer.as_ref().unwrap().as_str(), "a");
        assert_eq!(trace.turn_batches.iter().sum::<u64>(), 40);
        // every turn proposes 3 − lead samples; lead is 0 or 1 here
        assert!(trace.turn_batches.iter().all(|&k| k <= 3));
    }

    #[test]
    fn self_consistency_is_a_single_turn() {
        let trace = run(StoppingPolicy::self_consistency(40), &Alternating);
        assert_eq!(trace.turn_batches, vec![40]);
        assert_eq!(trace.critical_path_ms(), 39);
    }

    #[test]
    fn failures_count_against_budget() {
        let trace = run(
            StoppingPolicy::sprt_calibrated().with_max_samples(10),
            &AlwaysFails,
        );
        assert_eq!(trace.n_samples(), 10);
        assert_eq!(trace.n_errors(), 10);
        assert_eq!(trace.final_answer, None);
        assert_eq!(trace.stop_reason, StopReason::BudgetExhausted);
    }

    #[test]
    fn turn_indices_follow_batches() {
        let trace = run(
            StoppingPolicy::sprt_calibrated().with_max_samples(12),
            &Alternating,
        );
        let mut offset = 0;
        for (turn, &k) in trace.turn_batches.iter().enumerate() {
            for r in &trace.records[offset..offset + k as usize] {
                assert_eq!(r.turn_index, turn as u64);
            }
            offset += k as usize;
        }
        let indices: Vec<u64> = trace.records.iter().map(|r| r.sample_index).collect();
        assert_eq!(indices, (0..12).collect::<Vec<_>>());
    }
}
