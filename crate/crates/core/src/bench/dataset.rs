use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::solvers::ProblemSpec;
use crate::tally::normalize_answer;

/// A named list of questions with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkDataset {
    pub name: String,
    pub problems: Vec<ProblemSpec>,
}

impl BenchmarkDataset {
    pub fn new(name: impl Into<String>, problems: Vec<ProblemSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &problems {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate problem id '{}'",
                    p.id
                )));
            }
        }
        Ok(BenchmarkDataset {
            name: name.into(),
            problems,
        })
    }

    pub fn len(&self) -> usize {
        self.problems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.problems.is_empty()
    }
}

#[derive(Deserialize)]
struct DatasetLine {
    id: String,
    question: String,
    #[serde(default)]
    answer: Option<String>,
}

/// Reads a JSONL dataset of `{"id", "question", "answer"}` objects. The
/// dataset is named after the file stem.
pub fn load_dataset(path: &Path) -> Result<BenchmarkDataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<BenchmarkDataset> {
    let mut problems = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(row.id.clone()) {
            return Err(Error::Validation(format!(
                "{}:{}: duplicate problem id '{}'",
                path.display(),
                i + 1,
                row.id
            )));
        }
        let mut problem = ProblemSpec::new(row.id, row.question);
        problem.gold_answer = row.answer.as_deref().map(normalize_answer);
        problems.push(problem);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(BenchmarkDataset { name, problems })
}
