//! Report files: a per-policy summary CSV, per-question distribution stats,
//! and a plain-text table.
//!
//! `summary.csv` columns:
//! `dataset,policy,n_questions,accuracy_pct,total_prompt_tokens,total_completion_tokens,total_tokens,token_reduction_pct,avg_runs,n_errors`
//!
//! `question_stats.csv` columns:
//! `dataset,policy,problem_id,n_samples,n_first,n_second,p1,p2,p1_over_p2,entropy_nats,final_answer,correct`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::metrics::{accuracy, token_reduction, total_tokens, TokenConvention};
use super::RunResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    pub summary_csv: PathBuf,
    pub question_stats_csv: PathBuf,
    pub summary_txt: PathBuf,
}

struct SummaryRow {
    dataset: String,
    policy: String,
    n_questions: usize,
    accuracy_pct: Option<f64>,
    prompt_tokens: u64,
    completion_tokens: u64,
    tokens: u64,
    token_reduction_pct: f64,
    avg_runs: f64,
    n_errors: u64,
}

fn fmt_f64(x: f64) -> String {
    if x.is_infinite() {
        "inf".to_string()
    } else {
        format!("{x:.6}")
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `<path>.meta.json` next to an output file, holding the tool version
/// and the configuration that produced it.
pub fn write_meta_sidecar(path: &Path, config: &serde_json::Value) -> Result<PathBuf> {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    let meta_path = PathBuf::from(name);
    let meta = serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "config": config,
    });
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    Ok(meta_path)
}

fn summarize(
    results: &[RunResult],
    baseline_label: &str,
    convention: TokenConvention,
) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.dataset.as_str(), r.policy_label.as_str()))
            .or_default()
            .push(r);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (&(dataset, policy), rs) in &groups {
        let baseline = groups.get(&(dataset, baseline_label)).ok_or_else(|| {
            Error::Validation(format!(
                "no results for baseline policy '{baseline_label}' on dataset '{dataset}'"
            ))
        })?;
        let tokens = total_tokens(rs.iter().copied(), convention);
        let baseline_tokens = total_tokens(baseline.iter().copied(), convention);
        let all_gold = rs.iter().all(|r| r.correct.is_some());
        rows.push(SummaryRow {
            dataset: dataset.to_string(),
            policy: policy.to_string(),
            n_questions: rs.len(),
            accuracy_pct: if all_gold {
                Some(accuracy(rs.iter().copied())? * 100.0)
            } else {
                None
            },
            prompt_tokens: rs.iter().map(|r| r.total_prompt_tokens).sum(),
            completion_tokens: rs.iter().map(|r| r.total_completion_tokens).sum(),
            tokens,
            token_reduction_pct: if policy == baseline_label {
                0.0
            } else {
                token_reduction(tokens, baseline_tokens)?
            },
            avg_runs: rs.iter().map(|r| r.n_samples).sum::<u64>() as f64 / rs.len() as f64,
            n_errors: rs.iter().map(|r| r.n_errors).sum(),
        });
    }
    Ok(rows)
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "dataset",
        "policy",
        "n_questions",
        "accuracy_pct",
        "total_prompt_tokens",
        "total_completion_tokens",
        "total_tokens",
        "token_reduction_pct",
        "avg_runs",
        "n_errors",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.policy.clone(),
            r.n_questions.to_string(),
            r.accuracy_pct.map(fmt_f64).unwrap_or_default(),
            r.prompt_tokens.to_string(),
            r.completion_tokens.to_string(),
            r.tokens.to_string(),
            fmt_f64(r.token_reduction_pct),
            fmt_f64(r.avg_runs),
            r.n_errors.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_question_stats_csv(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "dataset",
        "policy",
        "problem_id",
        "n_samples",
        "n_first",
        "n_second",
        "p1",
        "p2",
        "p1_over_p2",
        "entropy_nats",
        "final_answer",
        "correct",
    ])
    .map_err(|e| csv_err(path, e))?;
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.dataset, &a.policy_label, &a.problem_id).cmp(&(
            &b.dataset,
            &b.policy_label,
            &b.problem_id,
        ))
    });
    for r in sorted {
        let stats = r.tally().distribution_stats().ok();
        let cell = |f: fn(&crate::tally::DistributionStats) -> String| {
            stats.as_ref().map(f).unwrap_or_default()
        };
        w.write_record([
            r.dataset.clone(),
            r.policy_label.clone(),
            r.problem_id.clone(),
            r.n_samples.to_string(),
            cell(|s| s.n_first.to_string()),
            cell(|s| s.n_second.to_string()),
            cell(|s| fmt_f64(s.p1)),
            cell(|s| fmt_f64(s.p2)),
            cell(|s| fmt_f64(s.p1_over_p2)),
            cell(|s| fmt_f64(s.entropy_nats)),
            r.final_answer.as_str().to_string(),
            r.correct.map(|c| c.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn render_table(rows: &[SummaryRow], baseline_label: &str, convention: TokenConvention) -> String {
    let header = [
        "dataset",
        "policy",
        "questions",
        "accuracy %",
        "tokens",
        "reduction %",
        "avg runs",
    ];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.policy.clone(),
                r.n_questions.to_string(),
                r.accuracy_pct
                    .map(|a| format!("{a:.1}"))
                    .unwrap_or_else(|| "-".into()),
                r.tokens.to_string(),
                format!("{:.1}", r.token_reduction_pct),
                format!("{:.2}", r.avg_runs),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let convention = match convention {
        TokenConvention::PromptPlusCompletion => "prompt + completion",
        TokenConvention::CompletionOnly => "completion only",
    };
    let _ = writeln!(out, "baseline: {baseline_label}    tokens: {convention}");
    let line = |cells: &[&str]| {
        cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(&header));
    let _ = writeln!(out, "{}", widths.map(|w| "-".repeat(w)).join("  "));
    for row in &body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{}", line(&cells));
    }
    out
}

/// Writes `summary.csv`, `question_stats.csv` and `summary.txt` into
/// `out_dir`, each CSV with a `.meta.json` sidecar. Token reduction is
/// measured per dataset against `baseline_label`.
pub fn emit_report(
    results: &[RunResult],
    baseline_label: &str,
    convention: TokenConvention,
    out_dir: &Path,
    config: &serde_json::Value,
) -> Result<ReportFiles> {
    let rows = summarize(results, baseline_label, convention)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = ReportFiles {
        summary_csv: out_dir.join("summary.csv"),
        question_stats_csv: out_dir.join("question_stats.csv"),
        summary_txt: out_dir.join("summary.txt"),
    };
    write_summary_csv(&files.summary_csv, &rows)?;
    write_meta_sidecar(&files.summary_csv, config)?;
    write_question_stats_csv(&files.question_stats_csv, results)?;
    write_meta_sidecar(&files.question_stats_csv, config)?;
    let table = render_table(&rows, baseline_label, convention);
    fs::write(&files.summary_txt, table).map_err(|e| Error::io(&files.summary_txt, e))?;
    Ok(files)
}
