//! Session recording and replay: wrap any backend in a recorder that
//! appends every request/response pair to a JSONL session file, then
//! re-serve that file with the replay backend to reproduce the identical
//! decision offline — useful for debugging a puzzling live run after the
//! fact, or for turning one paid run into a permanent regression fixture.
//!
//! Run with: cargo run --example record_replay

use consilium::backend::{RecordingBackend, ReplayBackend, ScriptedBackend};
use consilium::orchestrator::{run, Resources, RunConfig};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "syncope",
        "An athlete faints during exertion; echo shows asymmetric septal \
         hypertrophy. Most appropriate next step?",
    )
    .with_options([
        ('A', "Beta blockade and activity restriction"),
        ('B', "Reassurance and full training"),
        ('C', "Empiric antiarrhythmics"),
        ('D', "Immediate septal myectomy"),
    ]);

    let dir = tempfile::TempDir::new()?;
    let session = dir.path().join("session.jsonl");
    let cfg = RunConfig::default();

    // Pass 1: any backend works as the source; here a scripted one stands in
    // for a live HTTP backend. The recorder forwards each call and appends
    // it to the session file as it completes.
    let source = ScriptedBackend::fifo([
        "1) low — one cardiologist can settle this.",
        "1. Cardiologist - hypertrophic cardiomyopathy management.",
        "Exertional syncope with HCM mandates restriction. Answer: A",
    ]);
    let recorder = RecordingBackend::create(source, &session)?;
    let first = run(&recorder, &q, &cfg, &Resources::default()).await?;
    println!(
        "recorded:  answer {} after {} calls",
        first.decision.answer.as_str(),
        first.decision.stats.calls
    );
    println!(
        "session:   {} exchange(s) in {}",
        std::fs::read_to_string(&session)?.lines().count(),
        session.display()
    );

    // Pass 2: re-serve the session. No script, no network — the replay
    // backend matches each request by its tag and position.
    let replay = ReplayBackend::open(&session)?;
    let second = run(&replay, &q, &cfg, &Resources::default()).await?;
    println!("replayed:  answer {}", second.decision.answer.as_str());

    assert_eq!(first.decision.answer, second.decision.answer);
    assert_eq!(first.transcript, second.transcript);
    println!("transcripts identical: yes");
    Ok(())
}
