//! Answer normalization and the empirical categorical distribution over answers.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized answer string. Two samples vote for the same answer iff their
/// keys are equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct AnswerKey(String);

impl AnswerKey {
    /// Wraps an already-canonical string without normalizing it.
    pub fn from_canonical(s: impl Into<String>) -> Self {
        AnswerKey(s.into())
    }

    pub fn empty() -> Self {
        AnswerKey(String::new())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for AnswerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Trim, lowercase, then either canonicalize a plain decimal literal
/// (`"007.50"` → `"7.5"`) or collapse internal whitespace runs.
pub fn normalize_answer(raw: &str) -> AnswerKey {
    let lowered = raw.trim().to_lowercase();
    if let Some(number) = canonical_decimal(&lowered) {
        return AnswerKey(number);
    }
    AnswerKey(lowered.split_whitespace().collect::<Vec<_>>().join(" "))
}

/// `[+-]? digits [. digits]` or `[+-]? . digits`; anything else is not a
/// decimal literal.
fn canonical_decimal(s: &str) -> Option<String> {
    let (negative, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let all_digits = |t: &str| t.bytes().all(|c| c.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return None;
    }
    let int_trimmed = int_part.trim_start_matches('0');
    let frac_trimmed = frac_part.trim_end_matches('0');
    let int_canon = if int_trimmed.is_empty() {
        "0"
    } else {
        int_trimmed
    };
    let mut out = String::with_capacity(s.len());
    if negative && !(int_canon == "0" && frac_trimmed.is_empty()) {
        out.push('-');
    }
    out.push_str(int_canon);
    if !frac_trimmed.is_empty() {
        out.push('.');
        out.push_str(frac_trimmed);
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyEntry {
    pub key: AnswerKey,
    pub count: u64,
    /// Sample index at which this answer was first observed.
    pub first_seen: u64,
}

/// Counts of normalized answers, kept in first-observation order.
#[derive(Debug, Clone, Default)]
pub struct VoteTally {
    entries: Vec<TallyEntry>,
    index: HashMap<AnswerKey, usize>,
    total: u64,
}

impl VoteTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: AnswerKey) {
        let sample_index = self.total;
        self.total += 1;
        match self.index.get(&key) {
            Some(&slot) => self.entries[slot].count += 1,
            None => {
                self.index.insert(key.clone(), self.entries.len());
                self.entries.push(TallyEntry {
                    key,
                    count: 1,
                    first_seen: sample_index,
                });
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.entries.len()
    }

    pub fn count(&self, key: &AnswerKey) -> u64 {
        self.index
            .get(key)
            .map_or(0, |&slot| self.entries[slot].count)
    }

    /// Entries in order of first observation.
    pub fn entries(&self) -> &[TallyEntry] {
        &self.entries
    }

    pub fn top_two(&self) -> TopTwo {
        let mut first: Option<&TallyEntry> = None;
        let mut second: Option<&TallyEntry> = None;
        // entries are in first_seen order, so strict comparisons keep the
        // earliest answer on ties
        for entry in &self.entries {
            if first.is_none_or(|f| entry.count > f.count) {
                second = first;
                first = Some(entry);
            } else if second.is_none_or(|s| entry.count > s.count) {
                second = Some(entry);
            }
        }
        TopTwo {
            first_key: first.map(|e| e.key.clone()),
            n_first: first.map_or(0, |e| e.count),
            second_key: second.map(|e| e.key.clone()),
            n_second: second.map_or(0, |e| e.count),
        }
    }

    pub fn mode(&self) -> Option<AnswerKey> {
        self.top_two().first_key
    }

    pub fn distribution_stats(&self) -> Result<DistributionStats> {
        if self.total == 0 {
            return Err(Error::domain("distribution_stats of an empty tally"));
        }
        let top = self.top_two();
        let n = self.total as f64;
        let entropy_nats = self
            .entries
            .iter()
            .map(|e| {
                let p = e.count as f64 / n;
                -p * p.ln()
            })
            .sum::<f64>()
            .max(0.0);
        let p1_over_p2 = if top.n_second == 0 {
            f64::INFINITY
        } else {
            top.n_first as f64 / top.n_second as f64
        };
        Ok(DistributionStats {
            p1: top.n_first as f64 / n,
            p2: top.n_second as f64 / n,
            p1_over_p2,
            entropy_nats,
            n_first: top.n_first,
            n_second: top.n_second,
            total: self.total,
            distinct: self.entries.len(),
        })
    }
}

impl FromIterator<AnswerKey> for VoteTally {
    fn from_iter<I: IntoIterator<Item = AnswerKey>>(iter: I) -> Self {
        let mut tally = VoteTally::new();
        for key in iter {
            tally.push(key);
        }
        tally
    }
}

/// The two most frequent answers; `n_first >= n_second`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopTwo {
    pub first_key: Option<AnswerKey>,
    pub n_first: u64,
    pub second_key: Option<AnswerKey>,
    pub n_second: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub p1: f64,
    pub p2: f64,
    /// n_first / n_second, +∞ when there is no second answer.
    pub p1_over_p2: f64,
    pub entropy_nats: f64,
    pub n_first: u64,
    pub n_second: u64,
    pub total: u64,
    pub distinct: usize,
}

impl DistributionStats {
    /// p1 / (p1 + p2), the alternative reading of the top-two ratio.
    pub fn p1_share_of_top_two(&self) -> f64 {
        self.p1 / (self.p1 + self.p2)
    }
}
