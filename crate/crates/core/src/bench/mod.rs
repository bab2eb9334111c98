//! Benchmark execution, persisted results, metrics and reports.

pub mod dataset;
mod metrics;
mod report;
mod results;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scheduler::{sequential_testing, RunOptions, RunTrace};
use crate::seed::SeedPath;
use crate::solvers::{ProblemSpec, Solver};
use crate::stopping::CompiledPolicy;
use crate::tally::{AnswerKey, VoteTally};

pub use dataset::{load_dataset, parse_dataset, BenchmarkDataset};
pub use metrics::{accuracy, token_reduction, total_tokens, TokenConvention};
pub use report::{emit_report, write_meta_sidecar, ReportFiles};
pub use results::{
    load_results, ResultsHeader, ResultsWriter, RESULTS_SCHEMA, RESULTS_SCHEMA_VERSION,
};

/// Outcome of one policy on one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub problem_id: String,
    pub policy_label: String,
    pub dataset: String,
    pub final_answer: AnswerKey,
    /// Present iff the question has a gold answer.
    pub correct: Option<bool>,
    /// Equals the sum of `turn_batches`; failed queries are included.
    pub n_samples: u64,
    pub turn_batches: Vec<u64>,
    pub total_prompt_tokens: u64,
    pub total_completion_tokens: u64,
    /// `stop_dominant`, `stop_no_dominance`, `budget_exhausted`, or `error`.
    pub decision_kind: String,
    /// Critical-path latency: the slowest query of each turn, summed.
    pub wall_ms: u64,
    /// Successful answers in dispatch order.
    pub answers: Vec<AnswerKey>,
    pub n_errors: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunResult {
    pub fn from_trace(
        problem: &ProblemSpec,
        dataset: &str,
        policy_label: &str,
        trace: &RunTrace,
    ) -> Self {
        let final_answer = trace.final_answer.clone().unwrap_or_else(AnswerKey::empty);
        RunResult {
            problem_id: problem.id.clone(),
            policy_label: policy_label.to_string(),
            dataset: dataset.to_string(),
            correct: problem.gold_answer.as_ref().map(|g| *g == final_answer),
            final_answer,
            n_samples: trace.n_samples(),
            turn_batches: trace.turn_batches.clone(),
            total_prompt_tokens: trace.prompt_tokens(),
            total_completion_tokens: trace.completion_tokens(),
            decision_kind: trace.stop_reason.as_str().to_string(),
            wall_ms: trace.critical_path_ms(),
            answers: trace
                .records
                .iter()
                .filter(|r| !r.is_error())
                .map(|r| r.answer.clone())
                .collect(),
            n_errors: trace.n_errors(),
            error: None,
        }
    }

    /// A run that could not be carried out at all.
    pub fn failed(
        problem: &ProblemSpec,
        dataset: &str,
        policy_label: &str,
        message: String,
    ) -> Self {
        RunResult {
            problem_id: problem.id.clone(),
            policy_label: policy_label.to_string(),
            dataset: dataset.to_string(),
            final_answer: AnswerKey::empty(),
            correct: problem.gold_answer.as_ref().map(|_| false),
            n_samples: 0,
            turn_batches: Vec::new(),
            total_prompt_tokens: 0,
            total_completion_tokens: 0,
            decision_kind: "error".to_string(),
            wall_ms: 0,
            answers: Vec::new(),
            n_errors: 0,
            error: Some(message),
        }
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_prompt_tokens + self.total_completion_tokens
    }

    pub fn tally(&self) -> VoteTally {
        self.answers.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub master_seed: u64,
    /// Questions in flight at once.
    pub parallel_questions: usize,
    /// Queries in flight at once within a question's turn.
    pub max_in_flight: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            master_seed: 0,
            parallel_questions: 1,
            max_in_flight: 64,
        }
    }
}

/// Seed for one question's run. Independent of the policy, so every policy
/// sees the same draw sequence for a given question.
pub fn question_seed(master_seed: u64, problem_id: &str) -> u64 {
    SeedPath::new(master_seed).label(problem_id).value()
}

/// Runs `policy` on every question not already present in `sink`, appending
/// each result as soon as it and all earlier questions are done. Results are
/// written in dataset order regardless of completion order. Returns the
/// newly computed results.
pub async fn run_benchmark<S: Solver>(
    dataset: &BenchmarkDataset,
    policy: &CompiledPolicy,
    solver: &S,
    options: BenchOptions,
    mut sink: Option<&mut ResultsWriter>,
) -> Result<Vec<RunResult>> {
    let label = policy.policy().label();
    let pending: Vec<&ProblemSpec> = dataset
        .problems
        .iter()
        .filter(|p| sink.as_ref().is_none_or(|s| !s.contains(&p.id)))
        .collect();
    let skipped = dataset.problems.len() - pending.len();
    if skipped > 0 {
        tracing::info!(skipped, "resuming: questions already in results file");
    }

    let label_ref = label.as_str();
    let name = dataset.name.as_str();
    let mut runs = stream::iter(pending)
        .map(|problem| async move {
            let run_options = RunOptions {
                run_seed: question_seed(options.master_seed, &problem.id),
                max_in_flight: options.max_in_flight,
            };
            match sequential_testing(problem, policy, solver, run_options).await {
                Ok(trace) => RunResult::from_trace(problem, name, label_ref, &trace),
                Err(e) => {
                    tracing::warn!(problem = %problem.id, error = %e, "run failed");
                    RunResult::failed(problem, name, label_ref, e.to_string())
                }
            }
        })
        .buffered(options.parallel_questions.max(1));

    let mut out = Vec::new();
    while let Some(result) = runs.next().await {
        if let Some(writer) = sink.as_deref_mut() {
            writer.append(&result)?;
        }
        out.push(result);
    }
    Ok(out)
}
