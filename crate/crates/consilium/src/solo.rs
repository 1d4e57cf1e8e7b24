//! Single-expert answering strategies: direct few-shot, chain-of-thought,
//! self-consistency sampling, reasoning-path synthesis, and a lightweight
//! choice-shuffling ensemble with similarity-picked exemplars.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{majority, Vote};
use crate::backend::{complete_all, ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::parsers::extract_answer;
use crate::prompts;
use crate::retrieval::tokenize;
use crate::types::{AnswerKeys, CanonicalAnswer, Query};

/// One worked example for few-shot prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    #[serde(default)]
    pub options: BTreeMap<char, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub answer: CanonicalAnswer,
}

/// Load exemplars from a JSON array file.
pub fn load_exemplars(path: impl AsRef<Path>) -> Result<Vec<Exemplar>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Knobs shared by the solo strategies.
#[derive(Debug, Clone)]
pub struct SoloConfig {
    /// System prompt for the answering expert.
    pub system: String,
    /// Temperature for single deterministic calls.
    pub temperature: f64,
    /// Temperature for sampled paths (self-consistency, reasoning paths).
    pub sample_temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// Optional grounding block prepended to the answer prompt.
    pub grounding: Option<String>,
}

impl Default for SoloConfig {
    fn default() -> Self {
        SoloConfig {
            system: "You are a medical expert. Answer the medical question accurately.".into(),
            temperature: 0.0,
            sample_temperature: 0.7,
            max_tokens: 1024,
            seed: 0,
            grounding: None,
        }
    }
}

/// What a solo strategy produced, with enough detail for transcripts.
#[derive(Debug, Clone)]
pub struct SoloOutcome {
    pub answer: CanonicalAnswer,
    pub method: String,
    pub votes: Vec<Vote>,
    /// (tag, raw response) per call, in call order.
    pub raws: Vec<(String, String)>,
    pub flags: Vec<String>,
}

fn apply_grounding(prompt: String, cfg: &SoloConfig) -> String {
    match &cfg.grounding {
        Some(block) if !block.is_empty() => format!("{block}{prompt}"),
        _ => prompt,
    }
}

fn parse_or_flag(
    text: &str,
    keys: &AnswerKeys,
    options: &BTreeMap<char, String>,
    what: &str,
    flags: &mut Vec<String>,
) -> Option<CanonicalAnswer> {
    let parsed = extract_answer(text, keys, options);
    if parsed.value.is_none() {
        flags.push(format!("{what} unparseable"));
    }
    parsed.value
}

// ---- Direct / chain-of-thought ----

/// One few-shot call; `exemplars` beyond the first `shots` are ignored.
/// Zero shots gives the zero-shot form. Exactly 1 backend call.
pub async fn solve_direct(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    cfg: &SoloConfig,
) -> Result<SoloOutcome> {
    single_shot(backend, q, exemplars, shots, cfg, false).await
}

/// Like [`solve_direct`] but with rationale-bearing exemplars (or an
/// explicit step-by-step instruction when zero-shot). Exactly 1 call.
pub async fn solve_cot(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    cfg: &SoloConfig,
) -> Result<SoloOutcome> {
    single_shot(backend, q, exemplars, shots, cfg, true).await
}

async fn single_shot(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    cfg: &SoloConfig,
    cot: bool,
) -> Result<SoloOutcome> {
    let method = if cot { "solo:cot" } else { "solo:direct" };
    let used = &exemplars[..shots.min(exemplars.len())];
    let prompt = apply_grounding(prompts::solo_answer(q, used, cot), cfg);
    let req = ChatRequest::new(&cfg.system, prompt)
        .with_tag("solo")
        .with_temperature(cfg.temperature)
        .with_max_tokens(cfg.max_tokens)
        .with_seed(cfg.seed);
    let resp = backend.complete(&req).await?;

    let keys = q.answer_keys();
    let mut flags = Vec::new();
    let answer = parse_or_flag(&resp.text, &keys, &q.options, "solo answer", &mut flags)
        .unwrap_or_else(|| keys.fallback_answer());
    Ok(SoloOutcome {
        votes: vec![Vote::new("solo", answer.clone())],
        answer,
        method: method.into(),
        raws: vec![("solo".into(), resp.text)],
        flags,
    })
}

// ---- Self-consistency ----

/// k chain-of-thought samples at the sampling temperature with distinct
/// seeds, then majority vote. Unparseable samples are excluded; if all k
/// fall through, the first option is chosen and flagged. Exactly k calls.
pub async fn solve_cot_sc(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    k: usize,
    cfg: &SoloConfig,
) -> Result<SoloOutcome> {
    if k == 0 {
        return Err(Error::Config("self-consistency needs at least 1 sample".into()));
    }
    let used = &exemplars[..shots.min(exemplars.len())];
    let prompt = apply_grounding(prompts::solo_answer(q, used, true), cfg);
    let reqs: Vec<ChatRequest> = (0..k)
        .map(|i| {
            ChatRequest::new(&cfg.system, prompt.clone())
                .with_tag(format!("solo:sc{i}"))
                .with_temperature(cfg.sample_temperature)
                .with_max_tokens(cfg.max_tokens)
                .with_seed(cfg.seed.wrapping_add(i as u64))
        })
        .collect();

    let keys = q.answer_keys();
    let mut votes = Vec::new();
    let mut raws = Vec::new();
    let mut flags = Vec::new();
    for (i, result) in complete_all(backend, &reqs).await.into_iter().enumerate() {
        let resp = result?;
        if let Some(a) =
            parse_or_flag(&resp.text, &keys, &q.options, &format!("sample {i}"), &mut flags)
        {
            votes.push(Vote::new(format!("sc{i}"), a));
        }
        raws.push((format!("solo:sc{i}"), resp.text));
    }
    let answer = if votes.is_empty() {
        flags.push("all self-consistency samples unparseable; defaulted to first option".into());
        keys.fallback_answer()
    } else {
        majority(&votes).expect("non-empty votes")
    };
    Ok(SoloOutcome { answer, method: "solo:cot-sc".into(), votes, raws, flags })
}

// ---- Reasoning-path synthesis ----

/// m sampled reasoning paths plus one synthesis call that reads them all:
/// exactly m + 1 calls. The synthesis answer wins; if it is unparseable,
/// majority over the paths decides (flagged).
pub async fn solve_er(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    m: usize,
    cfg: &SoloConfig,
) -> Result<SoloOutcome> {
    if m == 0 {
        return Err(Error::Config("reasoning-path synthesis needs at least 1 path".into()));
    }
    let used = &exemplars[..shots.min(exemplars.len())];
    let prompt = apply_grounding(prompts::solo_answer(q, used, true), cfg);
    let reqs: Vec<ChatRequest> = (0..m)
        .map(|i| {
            ChatRequest::new(&cfg.system, prompt.clone())
                .with_tag(format!("solo:er{i}"))
                .with_temperature(cfg.sample_temperature)
                .with_max_tokens(cfg.max_tokens)
                .with_seed(cfg.seed.wrapping_add(i as u64))
        })
        .collect();

    let keys = q.answer_keys();
    let mut paths = Vec::new();
    let mut votes = Vec::new();
    let mut raws = Vec::new();
    let mut flags = Vec::new();
    for (i, result) in complete_all(backend, &reqs).await.into_iter().enumerate() {
        let resp = result?;
        if let Some(a) =
            parse_or_flag(&resp.text, &keys, &q.options, &format!("path {i}"), &mut flags)
        {
            votes.push(Vote::new(format!("er{i}"), a));
        }
        paths.push(resp.text.clone());
        raws.push((format!("solo:er{i}"), resp.text));
    }

    let syn_req = ChatRequest::new(&cfg.system, prompts::reasoning_synthesis(q, &paths))
        .with_tag("solo:er-synthesis")
        .with_temperature(cfg.temperature)
        .with_max_tokens(cfg.max_tokens)
        .with_seed(cfg.seed);
    let syn = backend.complete(&syn_req).await?;
    raws.push(("solo:er-synthesis".into(), syn.text.clone()));

    let answer = match extract_answer(&syn.text, &keys, &q.options).value {
        Some(a) => a,
        None if !votes.is_empty() => {
            flags.push("synthesis unparseable; fell back to majority over paths".into());
            majority(&votes).expect("non-empty votes")
        }
        None => {
            flags.push("synthesis and all paths unparseable; defaulted to first option".into());
            keys.fallback_answer()
        }
    };
    Ok(SoloOutcome { answer, method: "solo:er".into(), votes, raws, flags })
}

// ---- Choice-shuffling ensemble ----

/// Seeded permutation of the option letters for sample `i`. Returns the
/// display order: position j shows the text of `perm[j]`.
fn shuffled_option_order(letters: &[char], seed: u64, sample: u64) -> Vec<char> {
    let mut order: Vec<char> = letters.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5EED << 8) ^ sample);
    order.shuffle(&mut rng);
    order
}

/// s shuffled-choice samples with similarity-picked exemplars, majority
/// over votes mapped back to the original letters. Exactly s calls.
///
/// Exemplar selection: top `shots` exemplars by token overlap with the
/// question (ties keep file order).
pub async fn solve_medprompt_lite(
    backend: &dyn ChatBackend,
    q: &Query,
    exemplars: &[Exemplar],
    shots: usize,
    s: usize,
    cfg: &SoloConfig,
) -> Result<SoloOutcome> {
    if s == 0 {
        return Err(Error::Config("the shuffling ensemble needs at least 1 sample".into()));
    }
    let keys = q.answer_keys();
    let AnswerKeys::Letters(letters) = &keys else {
        return Err(Error::Config(
            "the choice-shuffling ensemble requires lettered options".into(),
        ));
    };

    let picked = select_exemplars(q, exemplars, shots);

    let mut votes = Vec::new();
    let mut raws = Vec::new();
    let mut flags = Vec::new();
    for i in 0..s {
        let display = shuffled_option_order(letters, cfg.seed, i as u64);
        // Present option texts in shuffled order under the canonical letters.
        let shuffled_q = {
            let mut q2 = q.clone();
            q2.options = letters
                .iter()
                .zip(display.iter())
                .map(|(&slot, &orig)| (slot, q.options[&orig].clone()))
                .collect();
            q2
        };
        let prompt = apply_grounding(prompts::solo_answer(&shuffled_q, &picked, true), cfg);
        let req = ChatRequest::new(&cfg.system, prompt)
            .with_tag(format!("solo:mp{i}"))
            .with_temperature(cfg.sample_temperature)
            .with_max_tokens(cfg.max_tokens)
            .with_seed(cfg.seed.wrapping_add(i as u64));
        let resp = backend.complete(&req).await?;

        match extract_answer(&resp.text, &keys, &shuffled_q.options).value {
            Some(ans) => {
                // Map the displayed letter back to the original option.
                let slot = ans.as_str().chars().next().unwrap();
                let orig = letters
                    .iter()
                    .position(|&l| l == slot)
                    .map(|j| display[j])
                    .unwrap_or(slot);
                votes.push(Vote::new(format!("mp{i}"), CanonicalAnswer::letter(orig)));
            }
            None => flags.push(format!("shuffled sample {i} unparseable")),
        }
        raws.push((format!("solo:mp{i}"), resp.text));
    }

    let answer = if votes.is_empty() {
        flags.push("all shuffled samples unparseable; defaulted to first option".into());
        keys.fallback_answer()
    } else {
        majority(&votes).expect("non-empty votes")
    };
    Ok(SoloOutcome { answer, method: "solo:medprompt".into(), votes, raws, flags })
}

/// Top `shots` exemplars by token overlap with the question.
pub fn select_exemplars(q: &Query, exemplars: &[Exemplar], shots: usize) -> Vec<Exemplar> {
    let q_tokens: std::collections::BTreeSet<String> =
        tokenize(&q.question).into_iter().collect();
    let mut scored: Vec<(usize, usize)> = exemplars
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let overlap = tokenize(&ex.question)
                .into_iter()
                .collect::<std::collections::BTreeSet<_>>()
                .intersection(&q_tokens)
                .count();
            (i, overlap)
        })
        .collect();
    // Stable sort keeps file order on ties.
    scored.sort_by(|a, b| b.1.cmp(&a.1));
    scored
        .into_iter()
        .take(shots)
        .map(|(i, _)| exemplars[i].clone())
        .collect()
}
