use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};

/// Which tokens count toward a policy's cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenConvention {
    #[default]
    PromptPlusCompletion,
    CompletionOnly,
}

impl TokenConvention {
    pub fn of(self, r: &RunResult) -> u64 {
        match self {
            TokenConvention::PromptPlusCompletion => r.total_tokens(),
            TokenConvention::CompletionOnly => r.total_completion_tokens,
        }
    }
}

/// Corpus-level token total over all samples of all questions.
pub fn total_tokens<'a>(
    results: impl IntoIterator<Item = &'a RunResult>,
    convention: TokenConvention,
) -> u64 {
    results.into_iter().map(|r| convention.of(r)).sum()
}

/// `(baseline − method) / baseline × 100`.
pub fn token_reduction(method_tokens: u64, baseline_tokens: u64) -> Result<f64> {
    if baseline_tokens == 0 {
        return Err(Error::domain(
            "token reduction against a zero-token baseline",
        ));
    }
    let b = baseline_tokens as f64;
    Ok((b - method_tokens as f64) / b * 100.0)
}

/// Fraction of questions answered correctly. Every result needs a gold answer.
pub fn accuracy<'a>(results: impl IntoIterator<Item = &'a RunResult>) -> Result<f64> {
    let mut n = 0u64;
    let mut hits = 0u64;
    for r in results {
        let correct = r.correct.ok_or_else(|| {
            Error::domain(format!("question '{}' has no gold answer", r.problem_id))
        })?;
        n += 1;
        hits += correct as u64;
    }
    if n == 0 {
        return Err(Error::domain("accuracy of an empty result set"));
    }
    Ok(hits as f64 / n as f64)
}
