use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cached raw answers for one question.
///
/// JSONL form, one object per line: `{"id": str, "samples": [str, ...], "gold": str|null}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePool {
    #[serde(rename = "id")]
    pub question_id: String,
    pub samples: Vec<String>,
    #[serde(rename = "gold")]
    pub gold_answer: Option<String>,
}

impl SamplePool {
    pub fn new(
        question_id: impl Into<String>,
        samples: Vec<String>,
        gold_answer: Option<String>,
    ) -> Result<Self> {
        let question_id = question_id.into();
        if samples.is_empty() {
            return Err(Error::domain(format!(
                "sample pool '{question_id}' is empty"
            )));
        }
        Ok(SamplePool {
            question_id,
            samples,
            gold_answer,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn load_pools(path: &Path) -> Result<Vec<SamplePool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pools(&text, path)
}

pub(crate) fn parse_pools(text: &str, path: &Path) -> Result<Vec<SamplePool>> {
    let mut pools = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let pool: SamplePool = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if pool.samples.is_empty() {
            return Err(parse_err(format!(
                "pool '{}' has no samples",
                pool.question_id
            )));
        }
        if !seen.insert(pool.question_id.clone()) {
            return Err(parse_err(format!(
                "duplicate pool id '{}'",
                pool.question_id
            )));
        }
        pools.push(pool);
    }
    Ok(pools)
}

pub fn write_pools(path: &Path, pools: &[SamplePool]) -> Result<()> {
    let mut out = Vec::new();
    for pool in pools {
        serde_json::to_writer(&mut out, pool).expect("pool serializes");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}
