//! The three local vote rules used to merge expert answers: simple
//! majority, weight-summed voting, and ranked (Borda) counting. Ties always
//! break to the smaller answer in natural order, which keeps every rule
//! deterministic.
//!
//! Run with: cargo run --example voting

use consilium::aggregate::{borda, majority, weighted, Vote};
use consilium::types::CanonicalAnswer;

fn a(letter: char) -> CanonicalAnswer {
    CanonicalAnswer::letter(letter)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Majority: B wins 2-1-1.
    let votes = vec![
        Vote::new("cardiologist", a('B')),
        Vote::new("radiologist", a('B')),
        Vote::new("surgeon", a('A')),
        Vote::new("internist", a('C')),
    ];
    println!("majority [B,B,A,C]          -> {}", majority(&votes)?.as_str());

    // Majority tie: A and B both have two votes; the smaller answer wins.
    let tied = vec![
        Vote::new("e1", a('B')),
        Vote::new("e2", a('A')),
        Vote::new("e3", a('B')),
        Vote::new("e4", a('A')),
    ];
    println!("majority tie [B,A,B,A]      -> {}", majority(&tied)?.as_str());

    // Weighted: one senior opinion outweighs two juniors; agents without an
    // explicit weight count as 1.0.
    let weighted_votes = vec![
        Vote::weighted("attending", a('C'), 3.0),
        Vote::new("resident", a('A')),
        Vote::new("intern", a('A')),
    ];
    println!("weighted [C*3, A, A]        -> {}", weighted(&weighted_votes)?.as_str());

    // Ranked: every ballot ranks the same options; position i from the top
    // earns (m-1-i) points. B is nobody's first choice yet wins on breadth.
    let mut ballots = Vec::new();
    for (agent, order) in [
        ("e1", ['A', 'B', 'C']),
        ("e2", ['C', 'B', 'A']),
        ("e3", ['A', 'B', 'C']),
        ("e4", ['C', 'B', 'A']),
        ("e5", ['B', 'A', 'C']),
    ] {
        let ranking: Vec<CanonicalAnswer> = order.iter().map(|&c| a(c)).collect();
        let mut v = Vote::new(agent, ranking[0].clone());
        v.ranking = Some(ranking);
        ballots.push(v);
    }
    println!("ranked, B always near top   -> {}", borda(&ballots)?.as_str());

    // Malformed inputs are errors, not silent defaults.
    let negative = vec![Vote::weighted("rogue", a('A'), -1.0)];
    println!("negative weight             -> {}", weighted(&negative).unwrap_err());
    Ok(())
}
