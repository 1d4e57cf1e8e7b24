//! Optional retrieval grounding: index a directory of text documents, pull
//! the k most relevant snippets for a query, and prepend them as a clearly
//! delimited reference block. In a full run the block is added only to the
//! complexity check and each expert's first prompt — recruiters and
//! follow-up turns never see it, and it never adds calls.
//!
//! Run with: cargo run --example grounded_prompts

use std::path::Path;

use consilium::backend::{ChatBackend, ScriptedBackend};
use consilium::orchestrator::{run, Resources, RunConfig};
use consilium::retrieval::{augment_prompt, index_corpus, retrieve};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/corpus");
    let index = index_corpus(&corpus_dir)?;

    // Direct use: rank snippets for a free-text query.
    let question = "microcytic anemia with spoon-shaped nails and low ferritin";
    println!("top snippets for: {question}");
    for s in retrieve(&index, question, 2) {
        println!("  [{}] score {:.3}", s.doc_id, s.score);
    }
    let snippets = retrieve(&index, question, 1);
    println!("\naugmented prompt:\n{}", augment_prompt("What is the diagnosis?", &snippets));

    // In-pipeline use: the same scripted run with retrieval on and off.
    let q = Query::new("iron", question).with_options([
        ('A', "Iron-deficiency anemia"),
        ('B', "Beta-thalassemia trait"),
        ('C', "Anemia of chronic disease"),
        ('D', "Sideroblastic anemia"),
    ]);
    let script = [
        "1) low — classic presentation, one generalist suffices.",
        "1. General Physician - broad primary-care background.",
        "Low ferritin with koilonychia settles it. Answer: A",
    ];
    for k in [0usize, 2] {
        let backend = ScriptedBackend::fifo(script);
        let mut cfg = RunConfig::default();
        cfg.retrieval_k = k;
        let resources = Resources { exemplars: Vec::new(), retrieval: Some(index.clone()) };
        run(&backend, &q, &cfg, &resources).await?;
        let grounded = backend
            .requests()
            .iter()
            .filter(|r| {
                r.messages.iter().any(|m| m.text.contains("### Reference knowledge"))
            })
            .count();
        println!(
            "retrieval_k = {k}: {} call(s), {grounded} grounded prompt(s)",
            backend.snapshot_stats().calls
        );
    }
    Ok(())
}
