use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mock::stream_rng;
use super::{ProblemSpec, QueryContext, QueryRecord, SamplePool, Solver};
use crate::error::{Error, Result};
use crate::tally::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayMode {
    /// Uniform draws from the pool.
    WithReplacement,
    /// The pool in recorded order; sample `i` of a run is pool entry `i`.
    Sequential,
}

/// Serves answers out of cached sample pools.
#[derive(Debug, Clone)]
pub struct ReplaySolver {
    pools: HashMap<String, SamplePool>,
    mode: ReplayMode,
}

impl ReplaySolver {
    pub fn new(pools: Vec<SamplePool>, mode: ReplayMode) -> Result<Self> {
        let mut map = HashMap::with_capacity(pools.len());
        for pool in pools {
            if pool.samples.is_empty() {
                return Err(Error::domain(format!(
                    "sample pool '{}' is empty",
                    pool.question_id
                )));
            }
            map.insert(pool.question_id.clone(), pool);
        }
        Ok(ReplaySolver { pools: map, mode })
    }

    pub fn mode(&self) -> ReplayMode {
        self.mode
    }

    pub fn draw(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        let Some(pool) = self.pools.get(&problem.id) else {
            return QueryRecord::failed(
                ctx,
                format!("no sample pool for question '{}'", problem.id),
            );
        };
        let index = match self.mode {
            ReplayMode::WithReplacement => stream_rng(ctx).gen_range(0..pool.samples.len()),
            ReplayMode::Sequential => {
                if ctx.sample_index >= pool.samples.len() as u64 {
                    return QueryRecord::failed(
                        ctx,
                        format!(
                            "sample pool '{}' depleted after {} samples",
                            pool.question_id,
                            pool.samples.len()
                        ),
                    );
                }
                ctx.sample_index as usize
            }
        };
        let raw = &pool.samples[index];
        QueryRecord {
            raw_text: raw.clone(),
            answer: normalize_answer(raw),
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 0,
            turn_index: ctx.turn_index,
            sample_index: ctx.sample_index,
            error: None,
        }
    }
}

impl Solver for ReplaySolver {
    async fn solve(&self, problem: &ProblemSpec, ctx: QueryContext) -> QueryRecord {
        self.draw(problem, ctx)
    }
}
