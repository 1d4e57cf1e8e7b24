//! Complexity classification on its own: route a query to a tier (low /
//! moderate / high) without answering it, including the retry-then-fallback
//! behaviour on unparseable replies.
//!
//! Run with: cargo run --example classify

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{classify_complexity, Resources, RunConfig};
use consilium::types::{Query, Transcript};

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "chest-pain",
        "A 58-year-old with crushing chest pain and ST elevations. Immediate management?",
    )
    .with_options([
        ('A', "Immediate reperfusion"),
        ('B', "Outpatient stress test"),
        ('C', "Antacids and reassurance"),
        ('D', "Repeat troponin in a week"),
    ]);
    let cfg = RunConfig::default();
    let resources = Resources::default();

    // A clean reply for each tier: the classifier accepts either the
    // numbered form ("1) low") or a reply containing exactly one tier word.
    for reply in [
        "1) low — one experienced clinician can settle this directly.",
        "2) moderate — cardiology and emergency medicine may disagree on timing.",
        "3) high — several teams must coordinate before a decision.",
    ] {
        let backend = ScriptedBackend::fifo([reply]);
        let mut transcript = Transcript::new();
        let mut flags = Vec::new();
        let level =
            classify_complexity(&backend, &q, &cfg, &resources, &mut transcript, &mut flags)
                .await?;
        println!("reply {reply:60.60} -> {level:?} (flags: {flags:?})");
    }

    // Three unparseable replies in a row exhaust the retries; the engine
    // falls back to the middle tier and records a flag instead of failing.
    let backend = ScriptedBackend::fifo(["no idea", "hard to say", "ask someone else"]);
    let mut transcript = Transcript::new();
    let mut flags = Vec::new();
    let level =
        classify_complexity(&backend, &q, &cfg, &resources, &mut transcript, &mut flags).await?;
    println!("unparseable x3 -> {level:?} (flags: {flags:?})");
    Ok(())
}
