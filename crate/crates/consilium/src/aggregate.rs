//! Combining expert opinions into one answer: majority, weighted and Borda
//! voting, a temperature ensemble that re-asks the decider at several
//! sampling temperatures, and the final-decision driver shared by the team
//! pipelines.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::backend::{ChatBackend, ChatRequest};
use crate::error::Result;
use crate::parsers::extract_answer;
use crate::prompts;
use crate::types::{CanonicalAnswer, Query, Report};

/// One ballot. `weight` defaults to 1.0 when absent; `ranking` is required
/// only by Borda counting.
#[derive(Debug, Clone, PartialEq)]
pub struct Vote {
    pub agent_id: String,
    pub answer: CanonicalAnswer,
    pub weight: Option<f64>,
    pub ranking: Option<Vec<CanonicalAnswer>>,
}

impl Vote {
    pub fn new(agent_id: impl Into<String>, answer: CanonicalAnswer) -> Self {
        Vote { agent_id: agent_id.into(), answer, weight: None, ranking: None }
    }

    pub fn weighted(agent_id: impl Into<String>, answer: CanonicalAnswer, weight: f64) -> Self {
        Vote { agent_id: agent_id.into(), answer, weight: Some(weight), ranking: None }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VoteError {
    #[error("cannot aggregate an empty vote set")]
    Empty,

    #[error("agent '{agent}' has a negative weight ({weight})")]
    NegativeWeight { agent: String, weight: f64 },

    #[error("agent '{agent}' is missing the ranking required for Borda counting")]
    MissingRanking { agent: String },

    #[error("agent '{agent}' has an invalid ranking: {reason}")]
    InvalidRanking { agent: String, reason: String },
}

// ---- Voting rules ----

/// Most-voted answer; ties break to the smaller answer in natural order
/// (letter order for options, lexicographic for yes/no/maybe).
pub fn majority(votes: &[Vote]) -> std::result::Result<CanonicalAnswer, VoteError> {
    if votes.is_empty() {
        return Err(VoteError::Empty);
    }
    let mut tally: BTreeMap<&CanonicalAnswer, usize> = BTreeMap::new();
    for v in votes {
        *tally.entry(&v.answer).or_insert(0) += 1;
    }
    // BTreeMap iterates keys in ascending order, so scanning with a strict
    // `>` keeps the smallest answer on ties.
    let mut best: Option<(&CanonicalAnswer, usize)> = None;
    for (ans, n) in tally {
        if best.map_or(true, |(_, bn)| n > bn) {
            best = Some((ans, n));
        }
    }
    Ok(best.unwrap().0.clone())
}

/// Sum of weights per answer; missing weights count 1.0, negative weights
/// are an error. Ties break like majority.
pub fn weighted(votes: &[Vote]) -> std::result::Result<CanonicalAnswer, VoteError> {
    if votes.is_empty() {
        return Err(VoteError::Empty);
    }
    let mut tally: BTreeMap<&CanonicalAnswer, f64> = BTreeMap::new();
    for v in votes {
        let w = v.weight.unwrap_or(1.0);
        if w < 0.0 {
            return Err(VoteError::NegativeWeight { agent: v.agent_id.clone(), weight: w });
        }
        *tally.entry(&v.answer).or_insert(0.0) += w;
    }
    let mut best: Option<(&CanonicalAnswer, f64)> = None;
    for (ans, w) in tally {
        if best.map_or(true, |(_, bw)| w > bw) {
            best = Some((ans, w));
        }
    }
    Ok(best.unwrap().0.clone())
}

/// Borda count: every vote must rank the same m answers (m >= 2); position
/// i from the top earns m-1-i points. Highest total wins, ties break to the
/// smaller answer.
pub fn borda(votes: &[Vote]) -> std::result::Result<CanonicalAnswer, VoteError> {
    if votes.is_empty() {
        return Err(VoteError::Empty);
    }
    let mut reference: Option<Vec<&CanonicalAnswer>> = None;
    let mut scores: BTreeMap<&CanonicalAnswer, usize> = BTreeMap::new();

    for v in votes {
        let ranking = v.ranking.as_ref().ok_or_else(|| VoteError::MissingRanking {
            agent: v.agent_id.clone(),
        })?;
        let m = ranking.len();
        if m < 2 {
            return Err(VoteError::InvalidRanking {
                agent: v.agent_id.clone(),
                reason: format!("ranking has {m} entries, need at least 2"),
            });
        }
        let mut sorted: Vec<&CanonicalAnswer> = ranking.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(VoteError::InvalidRanking {
                agent: v.agent_id.clone(),
                reason: "ranking repeats an answer".into(),
            });
        }
        match &reference {
            None => reference = Some(sorted),
            Some(r) => {
                if *r != sorted {
                    return Err(VoteError::InvalidRanking {
                        agent: v.agent_id.clone(),
                        reason: "ranking covers a different answer set than the other votes".into(),
                    });
                }
            }
        }
        for (i, ans) in ranking.iter().enumerate() {
            *scores.entry(ans).or_insert(0) += m - 1 - i;
        }
    }

    let mut best: Option<(&CanonicalAnswer, usize)> = None;
    for (ans, s) in scores {
        if best.map_or(true, |(_, bs)| s > bs) {
            best = Some((ans, s));
        }
    }
    Ok(best.unwrap().0.clone())
}

// ---- Temperature ensemble ----

/// Default sampling temperatures for the ensemble decider.
pub const DEFAULT_ENSEMBLE_TEMPS: [f64; 3] = [0.0, 0.5, 1.0];

pub struct EnsembleOutcome {
    pub answer: CanonicalAnswer,
    pub votes: Vec<Vote>,
    /// (temperature, raw response) per decider call.
    pub raws: Vec<(f64, String)>,
    pub flags: Vec<String>,
}

/// Ask the decider once per temperature and majority-vote the parsed
/// answers. Calls = `temps.len()`. Samples that fail to parse are excluded
/// from the vote; if all fail, the first option is chosen and flagged.
pub async fn temperature_ensemble(
    backend: &dyn ChatBackend,
    base: &ChatRequest,
    query: &Query,
    temps: &[f64],
) -> Result<EnsembleOutcome> {
    let keys = query.answer_keys();
    let mut votes = Vec::new();
    let mut raws = Vec::new();
    let mut flags = Vec::new();
    for (i, &t) in temps.iter().enumerate() {
        let req = base
            .clone()
            .with_temperature(t)
            .with_tag(format!("{}:t{i}", base.tag));
        let resp = backend.complete(&req).await?;
        let parsed = extract_answer(&resp.text, &keys, &query.options);
        match parsed.value {
            Some(ans) => votes.push(Vote::new(format!("ensemble-t{i}"), ans)),
            None => flags.push(format!("ensemble sample {i} (T={t}) unparseable, excluded")),
        }
        raws.push((t, resp.text));
    }
    let answer = if votes.is_empty() {
        flags.push("all ensemble samples unparseable; defaulted to first option".into());
        keys.fallback_answer()
    } else {
        majority(&votes).expect("non-empty votes")
    };
    Ok(EnsembleOutcome { answer, votes, raws, flags })
}

// ---- Final decision ----

/// What the final decider gets to look at.
pub enum Evidence<'a> {
    /// Low complexity: the solo answer stands, no extra call.
    Solo { answer: CanonicalAnswer, method: String },
    /// Moderate: the rendered interaction log of the team discussion.
    Discussion { log: String },
    /// High: the chain of team reports.
    Reports { reports: &'a [Report] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMethod {
    /// One decider call at the configured temperature.
    Direct,
    /// One decider call per ensemble temperature, then majority.
    TemperatureEnsemble,
}

#[derive(Debug, Clone)]
pub struct DecideConfig {
    pub method: DecisionMethod,
    pub temperature: f64,
    pub ensemble_temps: Vec<f64>,
    pub max_tokens: u32,
    pub seed: Option<u64>,
}

impl Default for DecideConfig {
    fn default() -> Self {
        DecideConfig {
            method: DecisionMethod::Direct,
            temperature: 0.0,
            ensemble_temps: DEFAULT_ENSEMBLE_TEMPS.to_vec(),
            max_tokens: 1024,
            seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinalDecision {
    pub answer: CanonicalAnswer,
    pub method: String,
    /// (tag, raw response) per decider call, for the transcript.
    pub raws: Vec<(String, String)>,
    pub flags: Vec<String>,
}

/// Produce the final answer from the pipeline's evidence. Solo evidence
/// passes through with zero calls; discussion and report evidence get a
/// decider call (or an ensemble of them) over the rendered evidence.
pub async fn final_decide(
    backend: &dyn ChatBackend,
    query: &Query,
    evidence: Evidence<'_>,
    cfg: &DecideConfig,
) -> Result<FinalDecision> {
    let (label, block) = match evidence {
        Evidence::Solo { answer, method } => {
            return Ok(FinalDecision { answer, method, raws: vec![], flags: vec![] });
        }
        Evidence::Discussion { log } => ("team discussion", log),
        Evidence::Reports { reports } => {
            let mut s = String::new();
            for r in reports {
                s.push_str(&format!("--- {} ---\n{}\n\n", r.team_name, r.body.trim()));
            }
            ("expert reports", s)
        }
    };

    let prompt = prompts::final_decision(&prompts::question_block(query), label, block.trim());
    let mut base = ChatRequest::new(prompts::decider_system(), prompt)
        .with_tag("decision")
        .with_temperature(cfg.temperature)
        .with_max_tokens(cfg.max_tokens);
    if let Some(seed) = cfg.seed {
        base = base.with_seed(seed);
    }

    match cfg.method {
        DecisionMethod::Direct => {
            let resp = backend.complete(&base).await?;
            let keys = query.answer_keys();
            let parsed = extract_answer(&resp.text, &keys, &query.options);
            let mut flags = Vec::new();
            let answer = match parsed.value {
                Some(a) => a,
                None => {
                    flags.push("final decision unparseable; defaulted to first option".into());
                    keys.fallback_answer()
                }
            };
            Ok(FinalDecision {
                answer,
                method: "direct".into(),
                raws: vec![("decision".into(), resp.text)],
                flags,
            })
        }
        DecisionMethod::TemperatureEnsemble => {
            let out = temperature_ensemble(backend, &base, query, &cfg.ensemble_temps).await?;
            Ok(FinalDecision {
                answer: out.answer,
                method: "temperature-ensemble".into(),
                raws: out
                    .raws
                    .into_iter()
                    .enumerate()
                    .map(|(i, (t, raw))| (format!("decision:t{i}(T={t})"), raw))
                    .collect(),
                flags: out.flags,
            })
        }
    }
}
