//! The no-deliberation baseline: recruit a panel, collect one independent
//! opinion per expert, and merge them with a local vote rule — no
//! discussion rounds, no separate decision call. Useful as a control when
//! measuring what deliberation itself adds.
//!
//! Run with: cargo run --example independent_panel

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{run, GroupMethod, Mode, Resources, RunConfig};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "stroke-window",
        "A patient arrives 2 hours after sudden hemiparesis; CT shows no bleed. \
         Best immediate therapy?",
    )
    .with_options([
        ('A', "Intravenous thrombolysis"),
        ('B', "Aspirin alone"),
        ('C', "Therapeutic anticoagulation"),
        ('D', "Observation"),
    ]);

    let recruit = "1. Neurologist - acute stroke protocols\n\
                   2. Emergency Physician - door-to-needle timing\n\
                   3. Radiologist - bleed exclusion";
    // One recruitment call, then exactly one opinion per expert. Majority
    // and weighted voting ask for an answer; ranked voting asks each expert
    // to order every option.
    let opinions = [
        recruit,
        "Within the window and no bleed: lyse. Answer: A",
        "Protocol is clear at two hours. Answer: A",
        "Imaging does not contraindicate thrombolysis. Answer: B",
    ];
    let rankings = [
        recruit,
        "A > B > D > C — thrombolysis first, aspirin if contraindicated.",
        "A > B > C > D — the window decides it.",
        "B > A > D > C — I would confirm perfusion imaging first.",
    ];

    for method in [GroupMethod::Majority, GroupMethod::Weighted, GroupMethod::Borda] {
        let script = if method == GroupMethod::Borda { rankings } else { opinions };
        let backend = ScriptedBackend::fifo(script);
        let mut cfg = RunConfig::default();
        cfg.mode = Mode::Group(method);
        let out = run(&backend, &q, &cfg, &Resources::default()).await?;
        let tags = backend.request_tags();
        println!(
            "{method:?}: answer {} with {} calls (tags: {})",
            out.decision.answer.as_str(),
            out.decision.stats.calls,
            tags.join(", ")
        );
        assert!(
            !tags.iter().any(|t| t == "classify" || t == "decision"),
            "group mode neither classifies nor asks a decider"
        );
    }
    Ok(())
}
