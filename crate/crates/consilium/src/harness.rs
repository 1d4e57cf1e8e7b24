//! Offline benchmark harness: dataset loading, batched evaluation with
//! resume support, and result/summary/report emission.
//!
//! An evaluation run produces three artifacts inside its output directory:
//!
//! * `results.jsonl` — one [`ResultRow`] per query, in dataset order;
//! * `summary.json` — aggregate accuracy and usage ([`EvalSummary`]);
//! * `transcripts/<id>.json` — optional full decision + transcript per query.
//!
//! Reruns with `resume` enabled skip every query whose id already appears in
//! `results.jsonl`, issuing zero backend calls for skipped items, then append
//! only the missing rows and recompute the summary over the union.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use futures::StreamExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::ChatBackend;
use crate::error::{Error, Result};
use crate::orchestrator::{self, Resources, RunConfig};
use crate::types::{validate_query, Decision, Query, Transcript};

// ---------------------------------------------------------------------------
// Dataset loading
// ---------------------------------------------------------------------------

/// Loads a JSONL dataset of queries. Each non-blank line must be one JSON
/// object in the [`Query`] schema. Malformed lines and duplicate ids are
/// reported with their 1-based line number; structural oddities (missing
/// options, non-letter keys, ...) are logged as warnings but not fatal.
pub fn load_dataset(path: &Path) -> Result<Vec<Query>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut queries = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let q: Query = serde_json::from_str(line).map_err(|e| Error::Dataset {
            path: path.display().to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(q.id.clone()) {
            return Err(Error::Dataset {
                path: path.display().to_string(),
                line: line_no,
                message: format!("duplicate query id '{}'", q.id),
            });
        }
        for warning in validate_query(&q) {
            tracing::warn!(id = %q.id, line = line_no, "{warning}");
        }
        queries.push(q);
    }
    Ok(queries)
}

/// Selects up to `limit` queries without replacement using a seeded RNG,
/// then restores the original dataset order so evaluation output stays
/// stable regardless of how the sample was drawn.
pub fn sample_queries(queries: Vec<Query>, limit: usize, seed: u64) -> Vec<Query> {
    if limit >= queries.len() {
        return queries;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, queries.len(), limit).into_vec();
    picked.sort_unstable();
    let mut by_index: Vec<Option<Query>> = queries.into_iter().map(Some).collect();
    picked
        .into_iter()
        .filter_map(|i| by_index[i].take())
        .collect()
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Controls batch evaluation behaviour (not the per-query engine settings,
/// which live in [`RunConfig`]).
#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// Maximum number of queries evaluated concurrently.
    pub concurrency: usize,
    /// Directory receiving `results.jsonl`, `summary.json` and transcripts.
    pub out_dir: PathBuf,
    /// Skip queries already present in `results.jsonl` instead of starting
    /// from scratch.
    pub resume: bool,
    /// Write `transcripts/<id>.json` for each newly evaluated query.
    pub transcripts: bool,
}

impl EvalConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        EvalConfig {
            concurrency: 4,
            out_dir: out_dir.into(),
            resume: false,
            transcripts: false,
        }
    }
}

/// One line of `results.jsonl`: the outcome of a single query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRow {
    pub id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
    pub method: String,
    pub complexity: String,
    pub calls: u64,
    pub prompt_chars: u64,
    pub completion_chars: u64,
    pub estimated_cost: f64,
    pub elapsed_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Accuracy bucket used for per-complexity and per-method breakdowns.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Bucket {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Aggregate view over every row in `results.jsonl`. Contains no wall-clock
/// timing so that summaries are byte-identical across reruns; per-item
/// latency lives in the rows (and is zeroed for deterministic backends).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub total: usize,
    /// Rows that had a gold answer and therefore count toward accuracy.
    pub scored: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub by_complexity: BTreeMap<String, Bucket>,
    pub by_method: BTreeMap<String, Bucket>,
    pub calls: u64,
    pub prompt_chars: u64,
    pub completion_chars: u64,
    pub estimated_cost: f64,
    /// Rows carrying at least one diagnostic flag.
    pub flagged_items: usize,
}

/// Transcript artifact written per query when transcripts are enabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub id: String,
    pub decision: Decision,
    pub transcript: Transcript,
}

/// Evaluates `queries` through the orchestration engine and writes
/// `results.jsonl` / `summary.json` (and optionally transcripts) under the
/// configured output directory. Individual query failures do not abort the
/// batch: they become rows flagged `run-failed: ...` that score as incorrect.
///
/// Queries run up to `concurrency` at a time but results are emitted in
/// dataset order, so the output bytes are reproducible for deterministic
/// backends.
pub async fn run_eval(
    backend: &dyn ChatBackend,
    queries: &[Query],
    run_cfg: &RunConfig,
    resources: &Resources,
    eval_cfg: &EvalConfig,
) -> Result<EvalSummary> {
    fs::create_dir_all(&eval_cfg.out_dir).map_err(|e| Error::io(&eval_cfg.out_dir, e))?;
    let results_path = eval_cfg.out_dir.join("results.jsonl");

    let existing: Vec<ResultRow> = if eval_cfg.resume && results_path.exists() {
        load_results(&results_path)?
    } else {
        Vec::new()
    };
    let done: BTreeSet<&str> = existing.iter().map(|r| r.id.as_str()).collect();
    let todo: Vec<&Query> = queries.iter().filter(|q| !done.contains(q.id.as_str())).collect();

    let zero_elapsed = backend.deterministic();
    let outcomes: Vec<(ResultRow, Option<TranscriptFile>)> =
        futures::stream::iter(todo.iter().map(|q| async move {
            match orchestrator::run(backend, q, run_cfg, resources).await {
                Ok(output) => {
                    let mut decision = output.decision;
                    if zero_elapsed {
                        decision.elapsed_ms = 0;
                    }
                    let row = success_row(q, &decision);
                    let transcript = eval_cfg.transcripts.then(|| TranscriptFile {
                        id: q.id.clone(),
                        decision,
                        transcript: output.transcript,
                    });
                    (row, transcript)
                }
                Err(e) => (failure_row(q, run_cfg, &e), None),
            }
        }))
        .buffered(eval_cfg.concurrency.max(1))
        .collect()
        .await;

    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(eval_cfg.resume)
        .truncate(!eval_cfg.resume)
        .write(true)
        .open(&results_path)
        .map_err(|e| Error::io(&results_path, e))?;
    for (row, _) in &outcomes {
        let line = serde_json::to_string(row)?;
        writeln!(file, "{line}").map_err(|e| Error::io(&results_path, e))?;
    }
    file.flush().map_err(|e| Error::io(&results_path, e))?;

    if eval_cfg.transcripts {
        let dir = eval_cfg.out_dir.join("transcripts");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (_, transcript) in &outcomes {
            if let Some(t) = transcript {
                let path = dir.join(format!("{}.json", sanitize_id(&t.id)));
                let body = serde_json::to_string_pretty(t)?;
                fs::write(&path, body + "\n").map_err(|e| Error::io(&path, e))?;
            }
        }
    }

    let mut all_rows = existing;
    all_rows.extend(outcomes.into_iter().map(|(row, _)| row));
    let summary = summarize(&all_rows);
    let summary_path = eval_cfg.out_dir.join("summary.json");
    let body = serde_json::to_string_pretty(&summary)?;
    fs::write(&summary_path, body + "\n").map_err(|e| Error::io(&summary_path, e))?;
    Ok(summary)
}

/// Reads an existing `results.jsonl` back into rows (used for resume and for
/// report generation).
pub fn load_results(path: &Path) -> Result<Vec<ResultRow>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: ResultRow = serde_json::from_str(line).map_err(|e| Error::Dataset {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Computes the aggregate summary for a set of result rows.
pub fn summarize(rows: &[ResultRow]) -> EvalSummary {
    let mut summary = EvalSummary {
        total: rows.len(),
        scored: 0,
        correct: 0,
        accuracy: 0.0,
        by_complexity: BTreeMap::new(),
        by_method: BTreeMap::new(),
        calls: 0,
        prompt_chars: 0,
        completion_chars: 0,
        estimated_cost: 0.0,
        flagged_items: 0,
    };
    for row in rows {
        summary.calls += row.calls;
        summary.prompt_chars += row.prompt_chars;
        summary.completion_chars += row.completion_chars;
        summary.estimated_cost += row.estimated_cost;
        if !row.flags.is_empty() {
            summary.flagged_items += 1;
        }
        let hit = match row.correct {
            Some(c) => {
                summary.scored += 1;
                if c {
                    summary.correct += 1;
                }
                c
            }
            None => continue,
        };
        bucket_add(&mut summary.by_complexity, &row.complexity, hit);
        bucket_add(&mut summary.by_method, &row.method, hit);
    }
    if summary.scored > 0 {
        summary.accuracy = summary.correct as f64 / summary.scored as f64;
    }
    summary
}

fn bucket_add(map: &mut BTreeMap<String, Bucket>, key: &str, hit: bool) {
    let bucket = map.entry(key.to_string()).or_default();
    bucket.count += 1;
    if hit {
        bucket.correct += 1;
    }
    bucket.accuracy = bucket.correct as f64 / bucket.count as f64;
}

fn success_row(q: &Query, decision: &Decision) -> ResultRow {
    let gold = q.answer.as_ref().map(|a| a.as_str().to_string());
    let correct = gold.as_deref().map(|g| g == decision.answer.as_str());
    ResultRow {
        id: q.id.clone(),
        answer: decision.answer.as_str().to_string(),
        gold,
        correct,
        method: decision.method.clone(),
        complexity: decision.complexity.label().to_string(),
        calls: decision.stats.calls,
        prompt_chars: decision.stats.prompt_chars,
        completion_chars: decision.stats.completion_chars,
        estimated_cost: decision.stats.estimated_cost,
        elapsed_ms: decision.elapsed_ms,
        flags: decision.flags.clone(),
    }
}

/// A query whose run errored still yields a row: the fallback answer,
/// scored incorrect when a gold answer exists, flagged with the error.
fn failure_row(q: &Query, run_cfg: &RunConfig, err: &Error) -> ResultRow {
    let gold = q.answer.as_ref().map(|a| a.as_str().to_string());
    ResultRow {
        id: q.id.clone(),
        answer: q.answer_keys().fallback_answer().as_str().to_string(),
        correct: gold.as_deref().map(|_| false),
        gold,
        method: format!("{}", run_cfg.mode),
        complexity: "unknown".to_string(),
        calls: 0,
        prompt_chars: 0,
        completion_chars: 0,
        estimated_cost: 0.0,
        elapsed_ms: 0,
        flags: vec![format!("run-failed: {err}")],
    }
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Output format for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!(
                "unknown report format '{other}' (expected 'csv' or 'json')"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportFormat::Csv => write!(f, "csv"),
            ReportFormat::Json => write!(f, "json"),
        }
    }
}

/// JSON report document: the summary plus every row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDoc {
    pub summary: EvalSummary,
    pub items: Vec<ResultRow>,
}

/// Renders a report from an evaluation output directory. The CSV layout is
/// long-form (`section,id,key,value`) so it loads directly into spreadsheet
/// or dataframe tools without a fixed column schema.
pub fn emit_report(out_dir: &Path, format: ReportFormat) -> Result<String> {
    let rows = load_results(&out_dir.join("results.jsonl"))?;
    let summary_path = out_dir.join("summary.json");
    let summary = if summary_path.exists() {
        let raw = fs::read_to_string(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
        serde_json::from_str(&raw)?
    } else {
        summarize(&rows)
    };
    match format {
        ReportFormat::Json => {
            let doc = ReportDoc {
                summary,
                items: rows,
            };
            Ok(serde_json::to_string_pretty(&doc)? + "\n")
        }
        ReportFormat::Csv => render_csv(&summary, &rows),
    }
}

fn render_csv(summary: &EvalSummary, rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let put = |w: &mut csv::Writer<Vec<u8>>, section: &str, id: &str, key: &str, value: String| {
        w.write_record([section, id, key, value.as_str()])
            .map_err(|e| Error::Config(format!("csv write failed: {e}")))
    };
    w.write_record(["section", "id", "key", "value"])
        .map_err(|e| Error::Config(format!("csv write failed: {e}")))?;

    put(&mut w, "summary", "", "total", summary.total.to_string())?;
    put(&mut w, "summary", "", "scored", summary.scored.to_string())?;
    put(&mut w, "summary", "", "correct", summary.correct.to_string())?;
    put(&mut w, "summary", "", "accuracy", format_float(summary.accuracy))?;
    put(&mut w, "summary", "", "calls", summary.calls.to_string())?;
    put(&mut w, "summary", "", "prompt_chars", summary.prompt_chars.to_string())?;
    put(
        &mut w,
        "summary",
        "",
        "completion_chars",
        summary.completion_chars.to_string(),
    )?;
    put(
        &mut w,
        "summary",
        "",
        "estimated_cost",
        format_float(summary.estimated_cost),
    )?;
    put(
        &mut w,
        "summary",
        "",
        "flagged_items",
        summary.flagged_items.to_string(),
    )?;
    for (level, bucket) in &summary.by_complexity {
        put(&mut w, "complexity", level, "count", bucket.count.to_string())?;
        put(&mut w, "complexity", level, "correct", bucket.correct.to_string())?;
        put(&mut w, "complexity", level, "accuracy", format_float(bucket.accuracy))?;
    }
    for (method, bucket) in &summary.by_method {
        put(&mut w, "method", method, "count", bucket.count.to_string())?;
        put(&mut w, "method", method, "correct", bucket.correct.to_string())?;
        put(&mut w, "method", method, "accuracy", format_float(bucket.accuracy))?;
    }
    for row in rows {
        put(&mut w, "item", &row.id, "answer", row.answer.clone())?;
        if let Some(gold) = &row.gold {
            put(&mut w, "item", &row.id, "gold", gold.clone())?;
        }
        if let Some(correct) = row.correct {
            put(&mut w, "item", &row.id, "correct", correct.to_string())?;
        }
        put(&mut w, "item", &row.id, "method", row.method.clone())?;
        put(&mut w, "item", &row.id, "complexity", row.complexity.clone())?;
        put(&mut w, "item", &row.id, "calls", row.calls.to_string())?;
        put(
            &mut w,
            "item",
            &row.id,
            "estimated_cost",
            format_float(row.estimated_cost),
        )?;
        if !row.flags.is_empty() {
            put(&mut w, "item", &row.id, "flags", row.flags.join("; "))?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Config(format!("csv finalize failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv produced non-utf8: {e}")))
}

/// Fixed-precision float rendering so report bytes don't depend on float
/// formatting quirks.
fn format_float(v: f64) -> String {
    format!("{v:.6}")
}
