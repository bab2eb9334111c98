use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ProblemSpec, QueryContext, QueryRecord, Solver};
use crate::error::{Error, Result};
use crate::tally::AnswerKey;

/// A categorical distribution over answers, sampled by inverse CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    keys: Vec<AnswerKey>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl CategoricalDist {
    /// Probabilities must be non-negative and sum to 1 within 1e−9.
    pub fn new(entries: Vec<(AnswerKey, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::domain("categorical distribution has no categories"));
        }
        let mut sum = 0.0;
        for (key, p) in &entries {
            if !(*p >= 0.0) || !p.is_finite() {
                return Err(Error::domain(format!("probability of '{key}' is {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        let mut cumulative = Vec::with_capacity(entries.len());
        let mut acc = 0.0;
        for (_, p) in &entries {
            acc += p;
            cumulative.push(acc);
        }
        let (keys, probs) = entries.into_iter().unzip();
        Ok(CategoricalDist {
            keys,
            probs,
            cumulative,
        })
    }

    pub fn degenerate(key: AnswerKey) -> Self {
        CategoricalDist {
            keys: vec![key],
            probs: vec![1.0],
            cumulative: vec![1.0],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AnswerKey, f64)> {
        self.keys.iter().zip(self.probs.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Maps a uniform draw in [0, 1) to a category.
    pub fn pick(&self, u: f64) -> &AnswerKey {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // zero-probability tail categories are never returned
        let idx = idx.min(self.keys.len() - 1);
        &self.keys[idx]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &AnswerKey {
        self.pick(rng.gen::<f64>())
    }
}

/// Synthetic token and latency accounting for mock draws.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    /// Completion-token overrides for specific answers.
    #[serde(default, skip_serializing_if = "HashMap::is_empty")]
    pub completion_tokens_by_answer: HashMap<AnswerKey, u64>,
}

impl CostModel {
    pub fn constant(prompt_tokens: u64, completion_tokens: u64) -> Self {
        CostModel {
            prompt_tokens,
            completion_tokens,
            ..Default::default()
        }
    }

    fn completion_for(&self, answer: &AnswerKey) -> u64 {
        self.completion_tokens_by_answer
            .get(answer)
            .copied()
            .unwrap_or(self.completion_tokens)
    }
}

/// Draws answers from per-question categorical distributions.
#[derive(Debug, Clone)]
pub struct MockSolver {
    by_question: HashMap<String, CategoricalDist>,
    fallback: Option<CategoricalDist>,
    cost: CostModel,
}

impl MockSolver {
    /// The same distribution for every question.
    pub fn single(dist: CategoricalDist, cost: CostModel) -> Self {
        MockSolver {
            by_question: HashMap::new(),
            fallback: Some(dist),
            cost,
        }
    }

    pub fn per_question(by_question: HashMap<String, CategoricalDist>, cost: CostModel) -> Self {
        MockSolver {
            by_question,
            fallback: None,
            cost,
        }
    }

    pub fn with_fallback(mut self, dist: CategoricalDist) -> Self {
        self.fallback = Some(dist);
        self
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    /// Deterministic draw for `(run_seed, sample_index)`.
    pub fn draw(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        let Some(dist) = self.by_question.get(&problem.id).or(self.fallback.as_ref()) else {
            return QueryRecord::failed(
                ctx,
                format!("no mock distribution for question '{}'", problem.id),
            );
        };
        let mut rng = stream_rng(ctx);
        let answer = dist.sample(&mut rng).clone();
        QueryRecord {
            raw_text: answer.as_str().to_string(),
            prompt_tokens: self.cost.prompt_tokens,
            completion_tokens: self.cost.completion_for(&answer),
            latency_ms: self.cost.latency_ms,
            turn_index: ctx.turn_index,
            sample_index: ctx.sample_index,
            answer,
            error: None,
        }
    }
}

pub(super) fn stream_rng(ctx: QueryContext) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.run_seed);
    rng.set_stream(ctx.sample_index);
    rng
}

impl Solver for MockSolver {
    async fn solve(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        self.draw(problem, ctx)
    }
}
