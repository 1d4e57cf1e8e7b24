//! Parsing recruiter replies into expert rosters: numbered agent lists, the
//! hierarchy grammar (`==` groups peers, `>` points seniors at juniors), and
//! the communication graph the deliberation pipeline runs on.
//!
//! Run with: cargo run --example roster_parsing

use consilium::parsers::parse_roster;
use consilium::types::ExpertRoster;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A flat reply without a structure line: everyone is a peer.
    let flat = "1. Cardiologist - ischemia and arrhythmia\n\
                2. Endocrinologist - metabolic control\n\
                3. Nephrologist - renal dosing";
    show("flat list", flat)?;

    // Four peers jointly advising a fifth: the `==` clique contributes
    // C(4,2) = 6 peer edges, and each clique member points at the
    // specialist after `>`, adding 4 directed edges.
    let tiered = "1. Pulmonologist - airway and ventilation\n\
                  2. Neonatologist - newborn intensive care\n\
                  3. Medical Geneticist - inherited disease workup\n\
                  4. Pediatrician - general child health\n\
                  5. Cardiologist - congenital heart disease\n\
                  Pulmonologist == Neonatologist == Medical Geneticist == Pediatrician > Cardiologist";
    show("clique over one specialist", tiered)?;

    // A chain of groups: consecutive groups contribute the product of
    // their sizes in directed edges — here 2x2 + 2x1 = 6.
    let chain = "1. Intensivist - stabilisation\n\
                 2. Surgeon - operative planning\n\
                 3. Radiologist - imaging\n\
                 4. Pathologist - tissue diagnosis\n\
                 5. Pharmacist - drug interactions\n\
                 Intensivist == Surgeon > Radiologist == Pathologist > Pharmacist";
    show("group chain", chain)?;
    Ok(())
}

fn show(label: &str, text: &str) -> Result<(), Box<dyn std::error::Error>> {
    let parsed = parse_roster(text, 9)?;
    println!("{label}:");
    for w in &parsed.warnings {
        println!("  warning: {w}");
    }
    match parsed.value.expect("example rosters parse") {
        ExpertRoster::SinglePcp { agent } => {
            println!("  single expert: {} ({})", agent.role, agent.id)
        }
        ExpertRoster::Mdt { agents, graph } => {
            println!(
                "  {} agents, {} peer edge(s), {} directed edge(s)",
                agents.len(),
                graph.peer_count(),
                graph.directed_count()
            );
            for (from, to) in graph.directed_edges() {
                println!("    {} -> {}", agents[from].role, agents[to].role);
            }
        }
        ExpertRoster::IctTeams { teams } => {
            for t in teams {
                println!("  team {}: {} member(s)", t.name, t.members.len());
            }
        }
    }
    println!();
    Ok(())
}
