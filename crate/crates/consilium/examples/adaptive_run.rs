//! The full adaptive pipeline end to end: classify, recruit, and answer,
//! with the collaboration pattern chosen by the measured complexity.
//!
//! Uses the bundled demo script, which answers by matching on the question
//! text, so the same backend serves any item of the toy dataset.
//!
//! Run with: cargo run --example adaptive_run

use std::path::Path;

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{run, Resources, RunConfig};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let backend = ScriptedBackend::from_file(assets.join("demo_script.json"))?;

    let q = Query::new(
        "q01",
        "A 34-year-old woman reports months of fatigue and brittle, spoon-shaped \
         nails. Blood work shows a microcytic hypochromic anemia. Which deficiency \
         is most likely responsible?",
    )
    .with_options([
        ('A', "Iron"),
        ('B', "Vitamin B12"),
        ('C', "Folate"),
        ('D', "Vitamin C"),
    ]);

    let out = run(&backend, &q, &RunConfig::default(), &Resources::default()).await?;

    println!("answer:     {}", out.decision.answer.as_str());
    println!("method:     {}", out.decision.method);
    println!("complexity: {:?}", out.decision.complexity);
    println!("calls:      {}", out.decision.stats.calls);
    println!("\ntranscript:");
    for e in out.transcript.events() {
        println!(
            "  [{:?}] {} -> {:?}: {:.60}",
            e.kind,
            e.speaker,
            e.recipient,
            e.raw.replace('\n', " ")
        );
    }
    Ok(())
}
