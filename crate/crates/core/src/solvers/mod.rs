//! Answer sources: a live chat-completions client, a seeded categorical mock,
//! and a replay solver over cached sample pools.

mod llm;
mod mock;
pub(crate) mod pool;
mod replay;

use std::future::Future;

use serde::{Deserialize, Serialize};

use crate::tally::AnswerKey;

pub use llm::{EndpointConfig, LlmSolver};
pub use mock::{CategoricalDist, CostModel, MockSolver};
pub use pool::{load_pools, write_pools, SamplePool};
pub use replay::{ReplayMode, ReplaySolver};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelHints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_effort: Option<ReasoningEffort>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasoningEffort {
    Low,
    Medium,
    High,
}

impl ReasoningEffort {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasoningEffort::Low => "low",
            ReasoningEffort::Medium => "medium",
            ReasoningEffort::High => "high",
        }
    }
}

/// One question to answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub id: String,
    pub prompt: String,
    pub gold_answer: Option<AnswerKey>,
    #[serde(default)]
    pub model_hints: ModelHints,
}

impl ProblemSpec {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ProblemSpec {
            id: id.into(),
            prompt: prompt.into(),
            gold_answer: None,
            model_hints: ModelHints::default(),
        }
    }

    pub fn with_gold(mut self, gold: AnswerKey) -> Self {
        self.gold_answer = Some(gold);
        self
    }
}

/// One solver response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub raw_text: String,
    pub answer: AnswerKey,
    pub prompt_tokens: u64,
    /// Includes reasoning tokens whenever the upstream reports them.
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub turn_index: u64,
    pub sample_index: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QueryRecord {
    pub fn failed(ctx: QueryContext, message: impl Into<String>) -> Self {
        QueryRecord {
            raw_text: String::new(),
            answer: AnswerKey::empty(),
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 0,
            turn_index: ctx.turn_index,
            sample_index: ctx.sample_index,
            error: Some(message.into()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Position of a query within a run. Deterministic solvers key their random
/// draws on `(run_seed, sample_index)`, so draws do not depend on completion
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryContext {
    pub run_seed: u64,
    pub sample_index: u64,
    pub turn_index: u64,
}

/// A source of answers. Implementations must tolerate concurrent calls.
pub trait Solver: Send + Sync {
    fn solve(
        &self,
        problem: &ProblemSpec,
        ctx: QueryContext,
    ) -> impl Future<Output = QueryRecord> + Send;
}

impl<S: Solver> Solver for &S {
    fn solve(
        &self,
        problem: &ProblemSpec,
        ctx: QueryContext,
    ) -> impl Future<Output = QueryRecord> + Send {
        (**self).solve(problem, ctx)
    }
}

/// Runtime choice between the three solver kinds.
pub enum AnySolver {
    Llm(LlmSolver),
    Mock(MockSolver),
    Replay(ReplaySolver),
}

impl Solver for AnySolver {
    async fn solve(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        match self {
            AnySolver::Llm(s) => s.solve(problem, ctx).await,
            AnySolver::Mock(s) => s.solve(problem, ctx).await,
            AnySolver::Replay(s) => s.solve(problem, ctx).await,
        }
    }
}
