//! Tolerant extraction of structure from model output: answers, complexity
//! labels, rosters, participation declarations and preference rankings.
//!
//! Model text is adversarially messy, so every parser degrades instead of
//! failing: results carry a confidence grade (`Exact` for an unambiguous
//! pattern match, `Heuristic` for a best-effort read, `Fallback` when
//! nothing usable was found) and the caller decides what a fallback costs.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use thiserror::Error;

use crate::types::{
    AgentSpec, AnswerKeys, CanonicalAnswer, CommunicationGraph, ComplexityLevel, ExpertRoster,
    ParseConfidence,
};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("no agents could be parsed from the recruiter output")]
    EmptyRoster,
}

/// A parse result: `value` is always present for exact/heuristic grades and
/// always absent for fallback. `warnings` records what was ignored or
/// guessed along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome<T> {
    pub value: Option<T>,
    pub confidence: ParseConfidence,
    pub warnings: Vec<String>,
}

impl<T> ParseOutcome<T> {
    pub fn exact(value: T) -> Self {
        ParseOutcome { value: Some(value), confidence: ParseConfidence::Exact, warnings: vec![] }
    }

    pub fn heuristic(value: T, warnings: Vec<String>) -> Self {
        ParseOutcome { value: Some(value), confidence: ParseConfidence::Heuristic, warnings }
    }

    pub fn fallback(warnings: Vec<String>) -> Self {
        ParseOutcome { value: None, confidence: ParseConfidence::Fallback, warnings }
    }

    pub fn is_fallback(&self) -> bool {
        self.confidence == ParseConfidence::Fallback
    }
}

// ---- Answer extraction ----

// "**Answer:** C", "Answer: (C)", "Final answer: yes" — an explicit answer
// marker with a colon. The bare phrase "the answer is X" is deliberately not
// exact; it is caught by the single-mention heuristic below.
static ANSWER_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\*{0,2}(?:final\s+)?answer\*{0,2}\s*:\s*\*{0,2}\s*\(?\s*([A-Za-z]+)").unwrap()
});

// A completion that continues the "**Answer:**(" priming: "C) because ..."
// or just "(B)" / "B".
static LEADING_OPTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*\*{0,2}\(?\s*([A-Za-z]+)\s*(?:[).:,]|\*{2}|$)").unwrap()
});

static DECORATED_LETTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(([A-Z])\)|\b([A-Z])\)").unwrap());

static BARE_LETTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b([A-Z])\b").unwrap());

static TERNARY_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(yes|no|maybe)\b").unwrap());

/// Pull the chosen answer out of free text.
///
/// Grades: `Exact` for an explicit marker ("Answer: (C)") or a completion
/// that opens with the option itself; `Heuristic` when exactly one key is
/// mentioned anywhere, or exactly one option's full text appears;
/// `Fallback` when zero or several keys remain plausible.
///
/// `option_texts` may be empty (ternary questions have no option map).
pub fn extract_answer(
    text: &str,
    keys: &AnswerKeys,
    option_texts: &BTreeMap<char, String>,
) -> ParseOutcome<CanonicalAnswer> {
    // Exact: explicit answer marker.
    for cap in ANSWER_MARKER.captures_iter(text) {
        if let Some(ans) = keys.accept(&cap[1]) {
            return ParseOutcome::exact(ans);
        }
    }
    // Exact: the completion itself starts with the option.
    if let Some(cap) = LEADING_OPTION.captures(text) {
        if let Some(ans) = keys.accept(&cap[1]) {
            return ParseOutcome::exact(ans);
        }
    }

    // Heuristic: exactly one key mentioned.
    let mentioned = distinct_key_mentions(text, keys);
    if mentioned.len() == 1 {
        return ParseOutcome::heuristic(
            mentioned.into_iter().next().unwrap(),
            vec!["answer inferred from a single key mention".into()],
        );
    }
    if mentioned.len() > 1 {
        return ParseOutcome::fallback(vec![format!(
            "ambiguous: {} distinct keys mentioned",
            mentioned.len()
        )]);
    }

    // Heuristic: exactly one option's full text appears.
    let lower = text.to_lowercase();
    let mut text_hits: Vec<CanonicalAnswer> = Vec::new();
    for (key, opt) in option_texts {
        let t = opt.trim().to_lowercase();
        if t.len() >= 3 && lower.contains(&t) {
            text_hits.push(CanonicalAnswer::letter(*key));
        }
    }
    match text_hits.len() {
        1 => ParseOutcome::heuristic(
            text_hits.pop().unwrap(),
            vec!["answer inferred from option text appearing verbatim".into()],
        ),
        0 => ParseOutcome::fallback(vec!["no answer key found in text".into()]),
        n => ParseOutcome::fallback(vec![format!("ambiguous: {n} option texts appear verbatim")]),
    }
}

/// Distinct keys mentioned anywhere in the text, preferring decorated
/// mentions like "(C)" when present so prose capitals don't drown them out.
fn distinct_key_mentions(text: &str, keys: &AnswerKeys) -> Vec<CanonicalAnswer> {
    match keys {
        AnswerKeys::Letters(_) => {
            let decorated = collect_letters(text, &DECORATED_LETTER, keys);
            if !decorated.is_empty() {
                return decorated;
            }
            collect_letters(text, &BARE_LETTER, keys)
        }
        AnswerKeys::Ternary => {
            let mut seen = Vec::new();
            for cap in TERNARY_WORD.captures_iter(text) {
                if let Some(ans) = keys.accept(&cap[1]) {
                    if !seen.contains(&ans) {
                        seen.push(ans);
                    }
                }
            }
            seen
        }
    }
}

fn collect_letters(text: &str, re: &Regex, keys: &AnswerKeys) -> Vec<CanonicalAnswer> {
    let mut seen = Vec::new();
    for cap in re.captures_iter(text) {
        let tok = cap
            .get(1)
            .or_else(|| cap.get(2))
            .map(|m| m.as_str())
            .unwrap_or_default();
        if let Some(ans) = keys.accept(tok) {
            if !seen.contains(&ans) {
                seen.push(ans);
            }
        }
    }
    seen
}

// ---- Complexity ----

static LEVEL_WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(low|moderate|high)\b").unwrap());

static LEVEL_NUMERAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\*{0,2}\(?\s*([123])\s*\)").unwrap());

/// Read a difficulty label out of an assessment reply.
///
/// `Exact` when exactly one of low/moderate/high is named; `Heuristic` when
/// the names are absent or ambiguous but a leading numeral ("2)") picks one;
/// `Fallback` otherwise. First mention wins within each rule.
pub fn parse_complexity(text: &str) -> ParseOutcome<ComplexityLevel> {
    let mut named: Vec<ComplexityLevel> = Vec::new();
    for cap in LEVEL_WORD.captures_iter(text) {
        if let Some(l) = ComplexityLevel::from_label(&cap[1]) {
            if !named.contains(&l) {
                named.push(l);
            }
        }
    }
    if named.len() == 1 {
        return ParseOutcome::exact(named[0]);
    }
    if let Some(cap) = LEVEL_NUMERAL.captures(text) {
        let level = match &cap[1] {
            "1" => ComplexityLevel::Low,
            "2" => ComplexityLevel::Moderate,
            _ => ComplexityLevel::High,
        };
        return ParseOutcome::heuristic(
            level,
            vec!["complexity taken from the leading numeral".into()],
        );
    }
    if named.is_empty() {
        ParseOutcome::fallback(vec!["no complexity label found".into()])
    } else {
        ParseOutcome::fallback(vec![format!("ambiguous: {} levels named", named.len())])
    }
}

// ---- Roster ----

static AGENT_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d+\s*[.)]\s*|[-*•]\s+)(.+)$").unwrap());

/// Parse a recruiter reply into a roster: numbered/bulleted "Role -
/// description" lines plus an optional communication-structure line using
/// `==` for peers and `>` for directed consultation.
///
/// When the reply is *only* a structure line (no list), the roles named in
/// it become the agents. Structure roles that match no agent are dropped
/// with a warning. At most `max_agents` agents are kept; extras are
/// truncated. Zero parsed agents is an error, not a fallback.
pub fn parse_roster(
    text: &str,
    max_agents: usize,
) -> Result<ParseOutcome<ExpertRoster>, ParseError> {
    let mut warnings: Vec<String> = Vec::new();
    let mut agents: Vec<AgentSpec> = Vec::new();
    let mut structure_lines: Vec<&str> = Vec::new();

    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if is_structure_line(trimmed) {
            structure_lines.push(trimmed);
            continue;
        }
        if let Some(cap) = AGENT_LINE.captures(trimmed) {
            if let Some(spec) = agent_from_line(&cap[1], agents.len()) {
                if agents.iter().any(|a| a.role.eq_ignore_ascii_case(&spec.role)) {
                    warnings.push(format!("duplicate role '{}' ignored", spec.role));
                } else {
                    agents.push(spec);
                }
            }
        }
    }

    let structure = structure_lines
        .iter()
        .map(|l| parse_structure_line(l))
        .collect::<Vec<_>>();

    // A bare structure line with no list introduces its own roles.
    if agents.is_empty() {
        let mut seen: Vec<String> = Vec::new();
        for groups in &structure {
            for group in groups {
                for role in group {
                    if !seen.iter().any(|r| r.eq_ignore_ascii_case(role)) {
                        seen.push(role.clone());
                    }
                }
            }
        }
        for (i, role) in seen.into_iter().enumerate() {
            agents.push(agent_from_role(&role, i));
        }
    }

    if agents.is_empty() {
        return Err(ParseError::EmptyRoster);
    }
    if agents.len() > max_agents {
        warnings.push(format!(
            "recruiter proposed {} agents, truncated to {max_agents}",
            agents.len()
        ));
        agents.truncate(max_agents);
    }

    let mut graph = CommunicationGraph::new(agents.iter().map(|a| a.id.clone()).collect());
    for groups in &structure {
        apply_structure(groups, &agents, &mut graph, &mut warnings);
    }

    let roster = if agents.len() == 1 {
        ExpertRoster::SinglePcp { agent: agents.pop().unwrap() }
    } else {
        ExpertRoster::Mdt { agents, graph }
    };

    Ok(if warnings.is_empty() {
        ParseOutcome::exact(roster)
    } else {
        ParseOutcome::heuristic(roster, warnings)
    })
}

/// A structure line relates role names with `==` or `>`. A lone `>` at line
/// start (markdown quote) does not qualify.
fn is_structure_line(line: &str) -> bool {
    if line.contains("==") {
        return true;
    }
    if let Some(pos) = line.find('>') {
        return pos > 0 && !line.starts_with('>');
    }
    false
}

/// GROUP := ROLE ("==" ROLE)*; LINE := GROUP (">" GROUP)*.
fn parse_structure_line(line: &str) -> Vec<Vec<String>> {
    let line = line
        .trim_start_matches(|c: char| "-*•".contains(c))
        .trim()
        .trim_start_matches("Structure:")
        .trim_start_matches("structure:")
        .trim();
    line.split('>')
        .map(|group| {
            group
                .split("==")
                .map(|role| role.trim().trim_matches('*').trim().to_string())
                .filter(|r| !r.is_empty())
                .collect::<Vec<_>>()
        })
        .filter(|g| !g.is_empty())
        .collect()
}

fn apply_structure(
    groups: &[Vec<String>],
    agents: &[AgentSpec],
    graph: &mut CommunicationGraph,
    warnings: &mut Vec<String>,
) {
    // Resolve each role to an agent index by case-insensitive containment.
    let resolve = |role: &str| -> Option<usize> {
        let role_l = role.to_lowercase();
        agents.iter().position(|a| {
            let agent_l = a.role.to_lowercase();
            agent_l.contains(&role_l) || role_l.contains(&agent_l)
        })
    };
    let resolved: Vec<Vec<usize>> = groups
        .iter()
        .map(|group| {
            group
                .iter()
                .filter_map(|role| {
                    let idx = resolve(role);
                    if idx.is_none() {
                        warnings.push(format!(
                            "structure role '{role}' matches no recruited agent, dropped"
                        ));
                    }
                    idx
                })
                .collect()
        })
        .collect();

    // Peers: a clique inside each group.
    for group in &resolved {
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                graph.add_peer(group[i], group[j]);
            }
        }
    }
    // Directed: every member of a group consults every member of the next.
    for pair in resolved.windows(2) {
        for &from in &pair[0] {
            for &to in &pair[1] {
                graph.add_directed(from, to);
            }
        }
    }
}

fn agent_from_line(body: &str, index: usize) -> Option<AgentSpec> {
    let body = body.trim().trim_matches('*').trim();
    if body.is_empty() {
        return None;
    }
    let (role, description) = split_role_description(body);
    if role.is_empty() || role.len() > 80 {
        return None;
    }
    Some(AgentSpec {
        id: slugify(&role, index),
        role,
        description,
        weight: None,
    })
}

fn agent_from_role(role: &str, index: usize) -> AgentSpec {
    AgentSpec {
        id: slugify(role, index),
        role: role.to_string(),
        description: default_description(role),
        weight: None,
    }
}

fn split_role_description(body: &str) -> (String, String) {
    for sep in [" - ", " — ", " – ", ": "] {
        if let Some(pos) = body.find(sep) {
            let role = body[..pos].trim().trim_matches('*').trim().to_string();
            let desc = body[pos + sep.len()..].trim().to_string();
            if !role.is_empty() {
                let desc = if desc.is_empty() { default_description(&role) } else { desc };
                return (role, desc);
            }
        }
    }
    let role = body.trim().to_string();
    let desc = default_description(&role);
    (role, desc)
}

fn default_description(role: &str) -> String {
    format!("provides expert assessment from the perspective of a {}", role.to_lowercase())
}

fn slugify(role: &str, index: usize) -> String {
    let slug: String = role
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-");
    if slug.is_empty() {
        format!("agent-{index}")
    } else {
        slug
    }
}

// ---- Participation ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participation {
    pub wants_to_talk: bool,
    /// Role of the chosen interlocutor; `None` whenever `wants_to_talk` is
    /// false or no listed role could be resolved.
    pub target: Option<String>,
}

static YES_NO: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

/// Read "do you want to talk, and to whom" from a turn reply. The first
/// yes/no occurrence decides participation; the target is the earliest
/// mention of any candidate role (case-insensitive containment).
pub fn parse_participation(text: &str, candidate_roles: &[String]) -> ParseOutcome<Participation> {
    let decision = YES_NO.captures(text).map(|c| c[1].to_ascii_lowercase());
    let Some(word) = decision else {
        return ParseOutcome::fallback(vec!["no yes/no participation marker found".into()]);
    };
    if word == "no" {
        return ParseOutcome::exact(Participation { wants_to_talk: false, target: None });
    }

    let lower = text.to_lowercase();
    let mut best: Option<(usize, usize, &String)> = None; // (pos, -len via cmp, role)
    for role in candidate_roles {
        let needle = role.to_lowercase();
        if needle.is_empty() {
            continue;
        }
        if let Some(pos) = lower.find(&needle) {
            let better = match best {
                None => true,
                Some((bp, blen, _)) => pos < bp || (pos == bp && needle.len() > blen),
            };
            if better {
                best = Some((pos, needle.len(), role));
            }
        }
    }
    match best {
        Some((_, _, role)) => ParseOutcome::exact(Participation {
            wants_to_talk: true,
            target: Some(role.clone()),
        }),
        None => ParseOutcome::heuristic(
            Participation { wants_to_talk: true, target: None },
            vec!["agent wants to talk but named no listed role".into()],
        ),
    }
}

// ---- Ranking ----

/// Extract a preference ranking over the key space, e.g. "A > C > B > D" or
/// "Best: B. Then A.". Keys are taken in order of first mention; missing
/// keys are appended in natural order (grade drops to heuristic). No keys
/// at all is a fallback.
pub fn parse_ranking(text: &str, keys: &AnswerKeys) -> ParseOutcome<Vec<CanonicalAnswer>> {
    let members = keys.members();
    let mut ordered: Vec<CanonicalAnswer> = Vec::new();

    match keys {
        AnswerKeys::Letters(_) => {
            for cap in BARE_LETTER.captures_iter(text) {
                if let Some(ans) = keys.accept(&cap[1]) {
                    if !ordered.contains(&ans) {
                        ordered.push(ans);
                    }
                }
            }
        }
        AnswerKeys::Ternary => {
            for cap in TERNARY_WORD.captures_iter(text) {
                if let Some(ans) = keys.accept(&cap[1]) {
                    if !ordered.contains(&ans) {
                        ordered.push(ans);
                    }
                }
            }
        }
    }

    if ordered.is_empty() {
        return ParseOutcome::fallback(vec!["no ranking keys mentioned".into()]);
    }
    if ordered.len() == members.len() {
        return ParseOutcome::exact(ordered);
    }
    let mut warnings = Vec::new();
    for m in members {
        if !ordered.contains(&m) {
            warnings.push(format!("key '{m}' missing from ranking, appended"));
            ordered.push(m);
        }
    }
    ParseOutcome::heuristic(ordered, warnings)
}

// ---- Confidence ----

static CONFIDENCE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)confidence\s*(?:level|score)?\s*[:=]?\s*(?:is\s+)?([01](?:\.\d+)?|\.\d+)")
        .unwrap()
});

/// Self-rated confidence in [0, 1] if the text states one.
pub fn parse_confidence(text: &str) -> Option<f64> {
    let cap = CONFIDENCE.captures(text)?;
    let v: f64 = cap[1].parse().ok()?;
    if (0.0..=1.0).contains(&v) {
        Some(v)
    } else {
        None
    }
}
