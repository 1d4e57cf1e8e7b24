//! Batch evaluation over a JSONL dataset: concurrent execution with
//! deterministic output order, per-item result rows, accuracy buckets by
//! complexity tier and by method, and crash-safe resume (a rerun skips
//! finished items without issuing a single backend call for them).
//!
//! Run with: cargo run --example eval_harness

use std::path::Path;

use consilium::backend::{ChatBackend, ScriptedBackend};
use consilium::harness::{load_dataset, run_eval, EvalConfig};
use consilium::orchestrator::{Resources, RunConfig};

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let queries = load_dataset(&assets.join("toy_dataset.jsonl"))?;
    println!("dataset: {} queries", queries.len());

    let out = tempfile::TempDir::new()?;
    let eval_cfg = EvalConfig {
        concurrency: 4,
        resume: true,
        transcripts: true,
        ..EvalConfig::new(out.path())
    };
    let run_cfg = RunConfig::default();
    let resources = Resources::default();

    // First pass: pretend the machine died after six items.
    let backend = ScriptedBackend::from_file(assets.join("demo_script.json"))?;
    run_eval(&backend, &queries[..6], &run_cfg, &resources, &eval_cfg).await?;
    println!(
        "partial run: 6 items, {} backend calls",
        backend.snapshot_stats().calls
    );

    // Second pass: same output directory, full dataset. Only the four
    // missing items run.
    let backend = ScriptedBackend::from_file(assets.join("demo_script.json"))?;
    let summary = run_eval(&backend, &queries, &run_cfg, &resources, &eval_cfg).await?;
    println!(
        "resume run:  4 items, {} backend calls",
        backend.snapshot_stats().calls
    );

    println!("\naccuracy {:.2} over {} scored items", summary.accuracy, summary.scored);
    for (tier, bucket) in &summary.by_complexity {
        println!("  tier {tier}: {}/{} correct", bucket.correct, bucket.count);
    }
    println!("total backend calls billed: {}", summary.calls);
    println!(
        "artifacts: results.jsonl, summary.json and {} transcript files in {}",
        queries.len(),
        out.path().display()
    );
    Ok(())
}
