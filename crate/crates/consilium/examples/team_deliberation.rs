//! A deliberating expert team: initial opinions, discussion turns, a
//! moderator review of stuck rounds, and the per-round disagreement
//! (entropy) trace that drives early stopping.
//!
//! The script below converges in the second round, so the run stops early
//! and the trailing rounds are never purchased.
//!
//! Run with: cargo run --example team_deliberation

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{run, Mode, Resources, RunConfig};
use consilium::types::Query;

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "tumour-board",
        "A resectable pancreatic head mass with borderline vessel contact. \
         Best initial treatment strategy?",
    )
    .with_options([
        ('A', "Upfront surgery"),
        ('B', "Neoadjuvant chemotherapy first"),
        ('C', "Definitive chemoradiation only"),
        ('D', "Best supportive care"),
    ]);

    let backend = ScriptedBackend::fifo([
        // Recruitment: three specialists, all peers.
        "1. Surgeon - hepatopancreatobiliary operations\n\
         2. Oncologist - systemic therapy planning\n\
         3. Radiologist - vascular involvement assessment\n\
         Surgeon == Oncologist == Radiologist",
        // Round 0: initial opinions disagree (entropy log2(3) ≈ 1.585 bits).
        "The mass is resectable today. Answer: A",
        "Vessel contact argues for chemotherapy first. Answer: B",
        "Imaging shows more contact than the report suggests. Answer: C",
        // Round 1, turn 1: the radiologist joins the oncologist.
        "I maintain that upfront surgery is feasible. Answer: A",
        "The vascular findings support my position. Answer: B",
        "On reflection the oncologist reads the scan as I do. Answer: B",
        // Moderator review after the non-converged round.
        "Surgeon: please address the degree of venous contact directly.",
        // Round 2, turn 1: the surgeon concedes; consensus reached, so the
        // configured third round never runs.
        "Given the venous contact I accept neoadjuvant therapy. Answer: B",
        "No change. Answer: B",
        "No change. Answer: B",
        // Final decision over the deliberation.
        "The panel converged on neoadjuvant chemotherapy. Answer: B",
    ]);

    let mut cfg = RunConfig::default();
    cfg.mode = Mode::Mdt; // skip classification; force the team pipeline
    cfg.rounds = 3;
    cfg.turns = 1;

    let out = run(&backend, &q, &cfg, &Resources::default()).await?;

    println!("answer: {}", out.decision.answer.as_str());
    println!("calls:  {} (early stop saved the unused round)", out.decision.stats.calls);
    println!("\ndisagreement per round:");
    for p in &out.decision.entropy_trace {
        println!("  round {}: {:.3} bits", p.round, p.bits);
    }
    println!("\nfinal stances:");
    for (agent, vote) in &out.decision.votes {
        println!("  {agent}: {}", vote.answer.as_str());
    }
    Ok(())
}
