//! Append-only JSONL results files.
//!
//! Line 1 is a [`ResultsHeader`]; every further line is one [`RunResult`].
//! A torn final line (from a crash mid-write) is dropped on reopen.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::error::{Error, Result};

pub const RESULTS_SCHEMA: &str = "seqvote.results";
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsHeader {
    pub schema: String,
    pub version: u32,
    pub tool_version: String,
    /// Fully resolved run configuration.
    pub config: serde_json::Value,
}

impl ResultsHeader {
    pub fn new(config: serde_json::Value) -> Self {
        ResultsHeader {
            schema: RESULTS_SCHEMA.to_string(),
            version: RESULTS_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
        }
    }
}

struct Parsed {
    header: ResultsHeader,
    results: Vec<RunResult>,
    /// Byte length of the well-formed prefix.
    valid_len: usize,
}

fn parse_results(text: &str, path: &Path) -> Result<Parsed> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut offset = 0;
    let mut header = None;
    let mut results = Vec::new();
    let mut valid_len = 0;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += raw.len();
        let torn = !raw.ends_with('\n');
        let line = raw.trim_end();
        if line.is_empty() {
            valid_len = offset;
            continue;
        }
        if header.is_none() {
            let h: ResultsHeader = serde_json::from_str(line)
                .map_err(|e| parse_err(i + 1, format!("bad header: {e}")))?;
            if h.schema != RESULTS_SCHEMA || h.version != RESULTS_SCHEMA_VERSION {
                return Err(parse_err(
                    i + 1,
                    format!("unsupported results schema {} v{}", h.schema, h.version),
                ));
            }
            if torn {
                break;
            }
            header = Some(h);
            valid_len = offset;
            continue;
        }
        if torn {
            tracing::warn!(path = %path.display(), bytes = raw.len(), "dropping torn final line");
            valid_len = start;
            break;
        }
        let r: RunResult =
            serde_json::from_str(line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        results.push(r);
        valid_len = offset;
    }
    let header = header.ok_or_else(|| parse_err(1, "missing results header".into()))?;
    Ok(Parsed {
        header,
        results,
        valid_len,
    })
}

pub fn load_results(path: &Path) -> Result<(ResultsHeader, Vec<RunResult>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = parse_results(&text, path)?;
    Ok((parsed.header, parsed.results))
}

/// Single writer for a results file.
pub struct ResultsWriter {
    path: PathBuf,
    file: File,
    done: HashSet<String>,
}

impl ResultsWriter {
    /// Creates the file, or reopens it for resumption. Reopening requires the
    /// stored configuration to equal `header.config`.
    pub fn open(path: &Path, header: &ResultsHeader) -> Result<Self> {
        let existing = match fs::read_to_string(path) {
            Ok(text) if !text.trim().is_empty() => Some(text),
            Ok(_) => None,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut done = HashSet::new();
        let file = match existing {
            Some(text) => {
                let parsed = parse_results(&text, path)?;
                if parsed.header.config != header.config {
                    return Err(Error::Config(format!(
                        "{} was written with a different configuration; choose another output path",
                        path.display()
                    )));
                }
                done.extend(parsed.results.into_iter().map(|r| r.problem_id));
                let file = OpenOptions::new()
                    .write(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?;
                file.set_len(parsed.valid_len as u64)
                    .map_err(|e| Error::io(path, e))?;
                drop(file);
                OpenOptions::new()
                    .append(true)
                    .open(path)
                    .map_err(|e| Error::io(path, e))?
            }
            None => {
                let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
                let mut line = serde_json::to_vec(header).expect("header serializes");
                line.push(b'\n');
                file.write_all(&line).map_err(|e| Error::io(path, e))?;
                file
            }
        };
        Ok(ResultsWriter {
            path: path.to_path_buf(),
            file,
            done,
        })
    }

    pub fn contains(&self, problem_id: &str) -> bool {
        self.done.contains(problem_id)
    }

    pub fn len(&self) -> usize {
        self.done.len()
    }

    pub fn is_empty(&self) -> bool {
        self.done.is_empty()
    }

    /// Writes one result as a single line and flushes it.
    pub fn append(&mut self, result: &RunResult) -> Result<()> {
        let mut line = serde_json::to_vec(result).expect("result serializes");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        self.done.insert(result.problem_id.clone());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tally::AnswerKey;
    use proptest::prelude::*;

    fn result(id: &str) -> RunResult {
        RunResult {
            problem_id: id.into(),
            policy_label: "sprt".into(),
            dataset: "d".into(),
            final_answer: AnswerKey::from_canonical("1"),
            correct: Some(true),
            n_samples: 3,
            turn_batches: vec![3],
            total_prompt_tokens: 1,
            total_completion_tokens: 2,
            decision_kind: "stop_dominant".into(),
            wall_ms: 0,
            answers: vec![AnswerKey::from_canonical("1"); 3],
            n_errors: 0,
            error: None,
        }
    }

    #[test]
    fn resume_skips_done_and_drops_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let header = ResultsHeader::new(serde_json::json!({"seed": 1}));
        {
            let mut w = ResultsWriter::open(&path, &header).unwrap();
            w.append(&result("a")).unwrap();
            w.append(&result("b")).unwrap();
        }
        let mut text = fs::read_to_string(&path).unwrap();
        text.push_str("{\"problem_id\":\"c\",\"pol");
        fs::write(&path, &text).unwrap();

        let mut w = ResultsWriter::open(&path, &header).unwrap();
        assert!(w.contains("a") && w.contains("b") && !w.contains("c"));
        w.append(&result("c")).unwrap();
        let (h, rs) = load_results(&path).unwrap();
        assert_eq!(h, header);
        let ids: Vec<_> = rs.iter().map(|r| r.problem_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn config_mismatch_refuses_resume() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        ResultsWriter::open(&path, &ResultsHeader::new(serde_json::json!({"seed": 1}))).unwrap();
        let err = ResultsWriter::open(&path, &ResultsHeader::new(serde_json::json!({"seed": 2})));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let header = serde_json::to_string(&ResultsHeader::new(serde_json::Value::Null)).unwrap();
        let text = format!(
            "{header}\nnot json\n{}\n",
            serde_json::to_string(&result("a")).unwrap()
        );
        assert!(matches!(
            parse_results(&text, Path::new("r")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn run_result_round_trips(
            id in "[a-z0-9-]{1,12}",
            answer in "[ -~]{0,10}",
            batches in proptest::collection::vec(1u64..50, 0..6),
            prompt in 0u64..1_000_000,
            completion in 0u64..1_000_000,
            correct in proptest::option::of(any::<bool>()),
        ) {
            let mut r = result(&id);
            r.final_answer = AnswerKey::from_canonical(answer.clone());
            r.n_samples = batches.iter().sum();
            r.turn_batches = batches;
            r.total_prompt_tokens = prompt;
            r.total_completion_tokens = completion;
            r.correct = correct;
            r.answers = vec![AnswerKey::from_canonical(answer)];
            let line = serde_json::to_string(&r).unwrap();
            let back: RunResult = serde_json::from_str(&line).unwrap();
            prop_assert_eq!(back, r);
        }
    }
}
