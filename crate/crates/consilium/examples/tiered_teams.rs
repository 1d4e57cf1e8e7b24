//! The tiered-team pipeline for the hardest queries: three teams work in
//! sequence (initial assessment → specialist team → final review), each
//! member files an assessment, each lead files a report, and later teams
//! see the reports of earlier ones.
//!
//! Run with: cargo run --example tiered_teams

use consilium::backend::ScriptedBackend;
use consilium::orchestrator::{run, Mode, Resources, RunConfig};
use consilium::types::{EventKind, Query};

#[tokio::main(flavor = "current_thread")]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let q = Query::new(
        "icu-case",
        "A transplant recipient with fever, falling counts and new infiltrates \
         despite broad antibiotics. Next management step?",
    )
    .with_options([
        ('A', "Broaden antifungal coverage"),
        ('B', "Stop all immunosuppression"),
        ('C', "Urgent lung biopsy"),
        ('D', "Watchful waiting"),
    ]);

    let mut script = vec![
        // Recruitment: nine experts; the engine slices them into three
        // ordered teams of three.
        "1. Intensivist - critical-care stabilisation\n\
         2. Infectious Disease Specialist - opportunistic pathogens\n\
         3. Radiologist - infiltrate pattern reading\n\
         4. Transplant Physician - graft management\n\
         5. Pulmonologist - bronchoscopy and biopsy\n\
         6. Hematologist - cytopenia workup\n\
         7. Pharmacist - antimicrobial interactions\n\
         8. Microbiologist - culture interpretation\n\
         9. Palliative Care Physician - goals of care"
            .to_string(),
    ];
    for team in ["first", "second", "third"] {
        for member in 1..=3 {
            script.push(format!(
                "{team} team, member {member}: the halo sign points to an invasive \
                 fungal process. Answer: A"
            ));
        }
        script.push(format!(
            "{team} team report: findings favour empiric antifungal escalation."
        ));
    }
    script.push("All reports agree on antifungal coverage. Answer: A".to_string());

    let backend = ScriptedBackend::fifo(script);
    let mut cfg = RunConfig::default();
    cfg.mode = Mode::Ict; // skip classification; force the tiered pipeline
    cfg.n_max = 3; // team count for this pipeline

    let out = run(&backend, &q, &cfg, &Resources::default()).await?;

    println!("answer: {}", out.decision.answer.as_str());
    println!(
        "calls:  {} = recruit(1) + 3 teams x (3 assessments + 1 report) + decision(1)",
        out.decision.stats.calls
    );
    println!("\npipeline stages:");
    for e in out.transcript.events() {
        let marker = match e.kind {
            EventKind::Report => ">>",
            EventKind::Decision => "==",
            _ => "  ",
        };
        println!("{marker} [{:?}] {}", e.kind, e.speaker);
    }
    Ok(())
}
