//! The two numeric tools behind routing and early stopping:
//!
//! * `consensus_entropy` — disagreement of a stance multiset in bits; 0 means
//!   unanimity, log2(n) means an n-way split. Deliberation stops early when a
//!   round's entropy reaches zero.
//! * `expected_accuracy` — given per-problem success probabilities at each
//!   collaboration tier and the rates at which an imperfect router picks the
//!   best / middle / worst tier, the accuracy the router would achieve.
//!
//! Run with: cargo run --example entropy_and_routing

use consilium::metrics::{
    consensus_entropy, expected_accuracy, LevelSuccessRow, LevelSuccessTable,
};

fn main() {
    println!("disagreement in bits:");
    for stances in [
        vec!["A", "A", "A", "A"],
        vec!["A", "A", "B", "C"],
        vec!["A", "B", "C", "D"],
        vec!["yes", "no", "yes"],
    ] {
        println!("  {:?} -> {:.3}", stances, consensus_entropy(&stances));
    }

    // Success probabilities per problem at the three tiers (low, moderate,
    // high collaboration), e.g. measured on a validation split.
    let table = LevelSuccessTable {
        rows: vec![
            LevelSuccessRow { problem_id: "p1".into(), p: [0.9, 0.6, 0.3] },
            LevelSuccessRow { problem_id: "p2".into(), p: [0.2, 0.8, 0.5] },
            LevelSuccessRow { problem_id: "p3".into(), p: [0.4, 0.4, 0.7] },
        ],
    };

    println!("\nrouter quality -> expected accuracy:");
    for (label, a, b, c) in [
        ("oracle (always best tier)   ", 1.00, 0.00, 0.00),
        ("measured router (81/11/8)   ", 0.81, 0.11, 0.08),
        ("uniform random tier         ", 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0),
        ("adversarial (always worst)  ", 0.00, 0.00, 1.00),
    ] {
        println!("  {label} {:.4}", expected_accuracy(a, b, c, &table));
    }
}
