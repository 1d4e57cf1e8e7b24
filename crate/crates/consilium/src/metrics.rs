//! Run analytics: consensus entropy over stances, the expected-accuracy
//! model for complexity routing, and empirical per-level success estimation.

use serde::{Deserialize, Serialize};

use crate::backend::ChatBackend;
use crate::error::{Error, Result};
use crate::orchestrator::{run_level, Resources, RunConfig};
use crate::types::{ComplexityLevel, Query};

// ---- Consensus entropy ----

/// Shannon entropy (bits) of the empirical distribution over distinct
/// stances: H = -sum p_i * log2 p_i.
///
/// 0.0 for unanimity (and for a single or empty stance set); log2(n) when
/// all n stances differ. Invariant under relabeling.
pub fn consensus_entropy<S: AsRef<str>>(stances: &[S]) -> f64 {
    if stances.len() <= 1 {
        return 0.0;
    }
    let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for s in stances {
        *counts.entry(s.as_ref()).or_insert(0) += 1;
    }
    let n = stances.len() as f64;
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / n;
        h -= p * p.log2();
    }
    // -0.0 shows up when all mass is on one stance; normalize it away.
    if h == 0.0 {
        0.0
    } else {
        h
    }
}

// ---- Expected accuracy ----

/// Per-problem success probabilities for each complexity route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSuccessRow {
    pub problem_id: String,
    /// p for [Low, Moderate, High], each in [0, 1].
    pub p: [f64; 3],
}

/// One row per problem; the empirical backbone of the routing analysis.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelSuccessTable {
    pub rows: Vec<LevelSuccessRow>,
}

impl LevelSuccessTable {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        for row in &self.rows {
            for (i, p) in row.p.iter().enumerate() {
                if !(0.0..=1.0).contains(p) {
                    v.push(format!(
                        "problem '{}' level {} has p={p} outside [0,1]",
                        row.problem_id,
                        ComplexityLevel::ALL[i].label()
                    ));
                }
            }
        }
        v
    }
}

/// Expected accuracy of a router that picks the best / middle / worst route
/// with probability a / b / c: the mean over problems of
/// `a*p_best + b*p_mid + c*p_worst`, where best/mid/worst sort each
/// problem's per-level success probabilities (ties keep Low < Moderate <
/// High order). An empty table scores 0.0.
pub fn expected_accuracy(a: f64, b: f64, c: f64, table: &LevelSuccessTable) -> f64 {
    if table.rows.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for row in &table.rows {
        let mut idx = [0usize, 1, 2];
        // Stable by construction: equal probabilities keep level order.
        idx.sort_by(|&i, &j| row.p[j].partial_cmp(&row.p[i]).unwrap());
        total += a * row.p[idx[0]] + b * row.p[idx[1]] + c * row.p[idx[2]];
    }
    total / table.rows.len() as f64
}

// ---- Empirical level success ----

/// Run the forced pipeline for `level` on `q` `reps` times with distinct
/// seeds (base seed + rep index) and return the fraction answered
/// correctly. Requires a gold answer.
pub async fn estimate_level_success(
    backend: &dyn ChatBackend,
    q: &Query,
    level: ComplexityLevel,
    reps: u32,
    cfg: &RunConfig,
    resources: &Resources,
) -> Result<f64> {
    let gold = q
        .answer
        .clone()
        .ok_or_else(|| Error::MissingGold { id: q.id.clone() })?;
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    let mut correct = 0u32;
    for rep in 0..reps {
        let mut rep_cfg = cfg.clone();
        rep_cfg.seed = cfg.seed.wrapping_add(rep as u64);
        let output = run_level(backend, q, level, &rep_cfg, resources).await?;
        if output.decision.answer == gold {
            correct += 1;
        }
    }
    Ok(correct as f64 / reps as f64)
}
