//! The five single-expert strategies and their call budgets:
//!
//!   direct      1 call   one few-shot answer
//!   cot         1 call   one chain-of-thought answer
//!   cot-sc      k calls  k sampled chains, majority vote
//!   er          m+1      m reasoning paths plus one synthesis call
//!   medprompt   s calls  s choice-shuffled samples, vote over de-shuffled answers
//!
//! Forced solo modes never classify or recruit — the strategy is the whole
//! pipeline.
//!
//! Run with: cargo run --example solo_strategies

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{run, Mode, Resources, RunConfig, SoloStrategy};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "uti",
        "A healthy young woman with dysuria and frequency, no fever or flank pain. \
         Best management?",
    )
    .with_options([
        ('A', "Short-course oral antibiotics"),
        ('B', "Renal ultrasound"),
        ('C', "Intravenous antibiotics"),
        ('D', "Cystoscopy"),
    ]);

    let cases: &[(&str, SoloStrategy, Vec<&str>)] = &[
        ("direct", SoloStrategy::Direct, vec!["Answer: A"]),
        (
            "cot",
            SoloStrategy::Cot,
            vec!["Uncomplicated cystitis needs only a short oral course. Answer: A"],
        ),
        (
            "cot-sc",
            SoloStrategy::CotSc,
            vec![
                "Answer: A",
                "Answer: A",
                "Answer: B", // one stray chain is outvoted
                "Answer: A",
                "Answer: A",
            ],
        ),
        (
            "er",
            SoloStrategy::Er,
            vec![
                "Path 1: classic uncomplicated cystitis. Answer: A",
                "Path 2: no red flags for upper-tract disease. Answer: A",
                "Path 3: imaging adds nothing here. Answer: A",
                "Synthesis: all paths agree on oral therapy. Answer: A",
            ],
        ),
        (
            "medprompt",
            SoloStrategy::Medprompt,
            // Option letters are shuffled per sample, so the scripted letter
            // is read back through the per-sample permutation.
            vec!["Answer: A", "Answer: B", "Answer: C", "Answer: A", "Answer: B"],
        ),
    ];

    for (name, strategy, script) in cases {
        let backend = ScriptedBackend::fifo(script.clone());
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::Solo(*strategy);
        let out = run(&backend, &q, &cfg, &Resources::default()).await?;
        println!(
            "{name:>9}: answer {} in {} call(s), method {:?}",
            out.decision.answer.as_str(),
            out.decision.stats.calls,
            out.decision.method
        );
    }
    Ok(())
}
