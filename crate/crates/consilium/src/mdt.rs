//! Round-based team deliberation: initial opinions, turn-synchronous
//! discussion over the recruited communication graph, per-round consensus
//! checks with an entropy trace, moderator feedback between rounds, and a
//! final decision over the full discussion log.

use std::collections::BTreeMap;

use crate::aggregate::{final_decide, DecideConfig, Evidence, FinalDecision};
use crate::backend::{complete_all, ChatBackend, ChatMessage, ChatRequest};
use crate::error::Result;
use crate::metrics::consensus_entropy;
use crate::parsers::{extract_answer, parse_participation, Participation};
use crate::prompts;
use crate::types::{
    AgentSpec, CanonicalAnswer, CommunicationGraph, EntropyPoint, EventKind, Query, Recipient,
    Transcript, VoteRecord,
};

// ---- Configuration ----

/// Knobs for one team deliberation.
#[derive(Debug, Clone)]
pub struct MdtConfig {
    /// Maximum discussion rounds after the initial opinions.
    pub rounds: usize,
    /// Speaking turns per round; every agent speaks once per turn.
    pub turns: usize,
    /// Modal stance share required to stop early. 1.0 means unanimity.
    pub consensus_threshold: f64,
    /// Whether a moderator reviews each non-converged round.
    pub review: bool,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    /// How the decision over the discussion log is made.
    pub decision: DecideConfig,
    /// Optional grounding block prepended to each expert's first prompt.
    pub grounding: Option<String>,
}

impl Default for MdtConfig {
    fn default() -> Self {
        MdtConfig {
            rounds: 3,
            turns: 2,
            consensus_threshold: 1.0,
            review: true,
            temperature: 0.7,
            max_tokens: 1024,
            seed: 0,
            decision: DecideConfig::default(),
            grounding: None,
        }
    }
}

/// What a deliberation produced.
#[derive(Debug, Clone)]
pub struct MdtOutcome {
    pub answer: CanonicalAnswer,
    /// Final stance per role (only stances that parsed to an answer).
    pub votes: BTreeMap<String, VoteRecord>,
    pub entropy_trace: Vec<EntropyPoint>,
    pub transcript: Transcript,
    /// Round whose check first met the threshold (0 = after initial
    /// opinions); `None` when the team never converged.
    pub consensus_round: Option<usize>,
    pub flags: Vec<String>,
}

// ---- Consensus ----

/// True when the modal stance's share of all stances meets the threshold.
pub fn consensus_reached<S: AsRef<str>>(stances: &[S], threshold: f64) -> bool {
    if stances.is_empty() {
        return false;
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in stances {
        *counts.entry(s.as_ref()).or_insert(0) += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    (modal as f64 / stances.len() as f64) >= threshold
}

// ---- Routing ----

/// Resolve where a message goes. The declared target wins if it names an
/// adjacent member; otherwise the speaker's first graph neighbor (roster
/// order); with no neighbors at all, the message is broadcast.
pub fn route_message(
    speaker: usize,
    declared: Option<&str>,
    graph: &CommunicationGraph,
) -> Recipient {
    if let Some(role) = declared {
        if let Some(j) = resolve_role(role, &graph.members) {
            if j != speaker && graph.is_adjacent(speaker, j) {
                return Recipient::Agent(graph.members[j].clone());
            }
        }
    }
    match graph.neighbors(speaker).first() {
        Some(&j) => Recipient::Agent(graph.members[j].clone()),
        None => Recipient::All,
    }
}

/// Case-insensitive resolution of a role mention against the member list:
/// exact match first, then containment either way.
fn resolve_role(role: &str, members: &[String]) -> Option<usize> {
    let needle = role.trim().to_ascii_lowercase();
    if needle.is_empty() {
        return None;
    }
    if let Some(i) = members.iter().position(|m| m.to_ascii_lowercase() == needle) {
        return Some(i);
    }
    members.iter().position(|m| {
        let hay = m.to_ascii_lowercase();
        hay.contains(&needle) || needle.contains(&hay)
    })
}

// ---- Moderator feedback ----

/// Split a moderator reply into per-role blocks. A line opening with a
/// role name (case-insensitive, optional markdown decoration) followed by
/// a colon starts that role's block; text before any header is shared by
/// everyone. With no headers at all, the whole reply goes to every role.
pub fn split_feedback(text: &str, roles: &[String]) -> BTreeMap<String, String> {
    // Longest role first so "Interventional Cardiologist" is not claimed
    // by "Cardiologist".
    let mut by_len: Vec<&String> = roles.iter().collect();
    by_len.sort_by_key(|r| std::cmp::Reverse(r.len()));

    let mut preamble = String::new();
    let mut blocks: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let stripped = line.trim_start_matches(['*', '#', '-', '>', ' ', '\t']);
        let mut matched = None;
        for role in &by_len {
            let lower = stripped.to_ascii_lowercase();
            if let Some(rest) = lower.strip_prefix(&role.to_ascii_lowercase()) {
                let rest_orig = &stripped[role.len()..];
                if rest.trim_start().starts_with(':') {
                    let after = rest_orig.trim_start();
                    let body = after[1..].trim_start_matches(['*', ' ']).trim();
                    matched = Some(((*role).clone(), body.to_string()));
                    break;
                }
            }
        }
        match matched {
            Some((role, first)) => {
                let entry = blocks.entry(role.clone()).or_default();
                if !first.is_empty() {
                    entry.push_str(&first);
                    entry.push('\n');
                }
                current = Some(role);
            }
            None => match &current {
                Some(role) => {
                    let entry = blocks.entry(role.clone()).or_default();
                    entry.push_str(line);
                    entry.push('\n');
                }
                None => {
                    preamble.push_str(line);
                    preamble.push('\n');
                }
            },
        }
    }

    let mut out = BTreeMap::new();
    if blocks.is_empty() {
        // No recognizable structure: everyone reads the full reply.
        for role in roles {
            out.insert(role.clone(), text.trim().to_string());
        }
        return out;
    }
    let preamble = preamble.trim().to_string();
    for role in roles {
        let own = blocks.get(role).map(|b| b.trim().to_string()).unwrap_or_default();
        let combined = match (preamble.is_empty(), own.is_empty()) {
            (false, false) => format!("{preamble}\n{own}"),
            (false, true) => preamble.clone(),
            (true, false) => own,
            (true, true) => continue,
        };
        out.insert(role.clone(), combined);
    }
    out
}

// ---- Deliberation ----

struct AgentSession {
    spec: AgentSpec,
    system: String,
    history: Vec<ChatMessage>,
    /// Messages delivered but not yet shown in a prompt.
    inbox: Vec<String>,
    stance: String,
}

/// Sentinel stance for an agent whose reply never parsed; distinct per
/// agent so unparsed replies always read as disagreement.
fn sentinel(agent_id: &str) -> String {
    format!("unparsed:{agent_id}")
}

/// Distinct seed per backend call, derived from the base seed.
fn bump_seed(seq: &mut u64, base: u64) -> u64 {
    let s = base.wrapping_add(*seq);
    *seq += 1;
    s
}

fn render_inbox(inbox: &[String]) -> String {
    if inbox.is_empty() {
        "(No new messages from your teammates this turn.)".to_string()
    } else {
        inbox.join("\n\n")
    }
}

/// Run the full deliberation over one query.
///
/// Backend calls: `N` initial opinions, then per executed round `N *
/// turns` discussion calls plus one moderator call when the round ends
/// without consensus (and review is enabled), then the decision call(s).
/// With the threshold never met that totals `N + rounds*(N*turns + 1) +
/// 1` for a direct decision.
pub async fn run_mdt(
    backend: &dyn ChatBackend,
    q: &Query,
    agents: &[AgentSpec],
    graph: &CommunicationGraph,
    cfg: &MdtConfig,
) -> Result<MdtOutcome> {
    assert!(!agents.is_empty(), "deliberation needs at least one agent");
    let keys = q.answer_keys();
    let question = prompts::question_block(q);
    let mut transcript = Transcript::default();
    let mut flags = Vec::new();
    let mut call_seq: u64 = 0;

    let mut sessions: Vec<AgentSession> = agents
        .iter()
        .map(|a| AgentSession {
            system: prompts::agent_init(a),
            spec: a.clone(),
            history: Vec::new(),
            inbox: Vec::new(),
            stance: sentinel(&a.id),
        })
        .collect();

    // Initial opinions, one call per agent, issued together.
    let mut opinion_prompt = prompts::initial_opinion(&question);
    if let Some(g) = &cfg.grounding {
        if !g.is_empty() {
            opinion_prompt = format!("{g}{opinion_prompt}");
        }
    }
    let reqs: Vec<ChatRequest> = sessions
        .iter()
        .map(|s| {
            ChatRequest::new(&s.system, opinion_prompt.clone())
                .with_tag(format!("opinion:{}", s.spec.id))
                .with_temperature(cfg.temperature)
                .with_max_tokens(cfg.max_tokens)
                .with_seed(bump_seed(&mut call_seq, cfg.seed))
        })
        .collect();
    let responses = complete_all(backend, &reqs).await;
    for (i, resp) in responses.into_iter().enumerate() {
        let resp = resp?;
        let parsed = extract_answer(&resp.text, &keys, &q.options);
        sessions[i].stance = match &parsed.value {
            Some(a) => a.as_str().to_string(),
            None => {
                flags.push(format!("opinion unparsed: {}", sessions[i].spec.id));
                sentinel(&sessions[i].spec.id)
            }
        };
        sessions[i].history.push(ChatMessage::user(opinion_prompt.clone()));
        sessions[i].history.push(ChatMessage::assistant(resp.text.clone()));
        transcript.push(
            0,
            0,
            sessions[i].spec.role.clone(),
            Recipient::All,
            EventKind::Opinion,
            resp.text.clone(),
            parsed.value.clone(),
            Some(parsed.confidence),
        );
        // Everyone else reads this opinion before the first turn.
        let labeled = format!("{}: {}", sessions[i].spec.role, resp.text.trim());
        for (j, s) in sessions.iter_mut().enumerate() {
            if j != i {
                s.inbox.push(labeled.clone());
            }
        }
    }

    let stances: Vec<String> = sessions.iter().map(|s| s.stance.clone()).collect();
    let mut entropy_trace = vec![EntropyPoint { round: 0, bits: consensus_entropy(&stances) }];
    let mut consensus_round =
        consensus_reached(&stances, cfg.consensus_threshold).then_some(0usize);

    let roles: Vec<String> = sessions.iter().map(|s| s.spec.role.clone()).collect();
    let mut round = 1usize;
    while consensus_round.is_none() && round <= cfg.rounds {
        for turn in 1..=cfg.turns {
            // Build every prompt first so all agents see the same state.
            let mut reqs = Vec::new();
            let mut candidate_lists = Vec::new();
            for s in sessions.iter_mut() {
                let others: Vec<String> =
                    roles.iter().filter(|r| **r != s.spec.role).cloned().collect();
                let prompt = prompts::interaction(&render_inbox(&s.inbox), &others);
                s.inbox.clear();
                s.history.push(ChatMessage::user(prompt));
                let mut req = ChatRequest::new(&s.system, "")
                    .with_tag(format!("message:{}:r{round}t{turn}", s.spec.id))
                    .with_temperature(cfg.temperature)
                    .with_max_tokens(cfg.max_tokens)
                    .with_seed(bump_seed(&mut call_seq, cfg.seed));
                req.messages = s.history.clone();
                reqs.push(req);
                candidate_lists.push(others);
            }
            let responses = complete_all(backend, &reqs).await;
            // Deliver after the whole turn so routing is turn-synchronous.
            let mut deliveries: Vec<(usize, String)> = Vec::new();
            for (i, resp) in responses.into_iter().enumerate() {
                let resp = resp?;
                sessions[i].history.push(ChatMessage::assistant(resp.text.clone()));
                let part = parse_participation(&resp.text, &candidate_lists[i])
                    .value
                    .unwrap_or(Participation { wants_to_talk: false, target: None });
                let recipient = if part.wants_to_talk {
                    route_message(i, part.target.as_deref(), graph)
                } else {
                    Recipient::All
                };
                let parsed = extract_answer(&resp.text, &keys, &q.options);
                transcript.push(
                    round as u32,
                    turn as u32,
                    sessions[i].spec.role.clone(),
                    recipient.clone(),
                    EventKind::Message,
                    resp.text.clone(),
                    parsed.value,
                    Some(parsed.confidence),
                );
                let labeled = format!("{}: {}", sessions[i].spec.role, resp.text.trim());
                match recipient {
                    Recipient::Agent(role) => {
                        if let Some(j) = roles.iter().position(|r| *r == role) {
                            deliveries.push((j, labeled));
                        }
                    }
                    Recipient::All => {
                        for j in 0..sessions.len() {
                            if j != i {
                                deliveries.push((j, labeled.clone()));
                            }
                        }
                    }
                    Recipient::Moderator => {}
                }
            }
            for (j, msg) in deliveries {
                sessions[j].inbox.push(msg);
            }
        }

        // Re-extract stances from each agent's latest message this round.
        for s in sessions.iter_mut() {
            let latest = s
                .history
                .iter()
                .rev()
                .find(|m| matches!(m.role, crate::backend::MsgRole::Assistant));
            let parsed = latest
                .and_then(|m| extract_answer(&m.text, &keys, &q.options).value);
            match parsed {
                Some(a) => s.stance = a.as_str().to_string(),
                None => {
                    flags.push(format!("stance retained: {} round {round}", s.spec.id));
                }
            }
        }
        let stances: Vec<String> = sessions.iter().map(|s| s.stance.clone()).collect();
        entropy_trace
            .push(EntropyPoint { round: round as u32, bits: consensus_entropy(&stances) });
        if consensus_reached(&stances, cfg.consensus_threshold) {
            consensus_round = Some(round);
            break;
        }

        if cfg.review {
            let log = render_log(&transcript);
            let req = ChatRequest::new(prompts::moderator_system(), prompts::moderator_review(&log, &roles))
                .with_tag(format!("feedback:r{round}"))
                .with_temperature(cfg.temperature)
                .with_max_tokens(cfg.max_tokens)
                .with_seed(bump_seed(&mut call_seq, cfg.seed));
            let resp = backend.complete(&req).await?;
            transcript.push(
                round as u32,
                0,
                "Moderator",
                Recipient::All,
                EventKind::Feedback,
                resp.text.clone(),
                None,
                None,
            );
            for (role, block) in split_feedback(&resp.text, &roles) {
                if let Some(s) = sessions.iter_mut().find(|s| s.spec.role == role) {
                    s.inbox.push(format!("Moderator: {block}"));
                }
            }
        }
        round += 1;
    }

    // Final decision over the full discussion log.
    let final_round = entropy_trace.last().map(|p| p.round).unwrap_or(0);
    let log = render_log(&transcript);
    let decided: FinalDecision =
        final_decide(backend, q, Evidence::Discussion { log }, &cfg.decision).await?;
    for (tag, raw) in &decided.raws {
        transcript.push(
            final_round,
            0,
            format!("Decider[{tag}]"),
            Recipient::All,
            EventKind::Decision,
            raw.clone(),
            Some(decided.answer.clone()),
            None,
        );
    }
    flags.extend(decided.flags);

    let votes: BTreeMap<String, VoteRecord> = sessions
        .iter()
        .filter_map(|s| {
            CanonicalAnswer::from_text(&s.stance)
                .map(|a| (s.spec.role.clone(), VoteRecord { answer: a, weight: None }))
        })
        .collect();

    Ok(MdtOutcome {
        answer: decided.answer,
        votes,
        entropy_trace,
        transcript,
        consensus_round,
        flags,
    })
}

/// Render the discussion so far as a labeled log for the moderator and
/// the decider.
pub fn render_log(transcript: &Transcript) -> String {
    let mut out = String::new();
    for ev in transcript.events() {
        let line = match ev.kind {
            EventKind::Opinion => {
                format!("[Round 0] {} (initial opinion): {}", ev.speaker, ev.raw.trim())
            }
            EventKind::Message => {
                let to = match &ev.recipient {
                    Recipient::All => "the team".to_string(),
                    Recipient::Agent(a) => a.clone(),
                    Recipient::Moderator => "the moderator".to_string(),
                };
                format!(
                    "[Round {}, Turn {}] {} -> {}: {}",
                    ev.round,
                    ev.turn,
                    ev.speaker,
                    to,
                    ev.raw.trim()
                )
            }
            EventKind::Feedback => {
                format!("[Round {}] Moderator feedback: {}", ev.round, ev.raw.trim())
            }
            _ => continue,
        };
        out.push_str(&line);
        out.push_str("\n\n");
    }
    out.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;

    fn agents3() -> Vec<AgentSpec> {
        vec![
            AgentSpec::new("cardiologist", "Cardiologist", "specializes in the heart"),
            AgentSpec::new("pulmonologist", "Pulmonologist", "specializes in the lungs"),
            AgentSpec::new("radiologist", "Radiologist", "reads medical imaging"),
        ]
    }

    fn full_graph(n: usize, roles: &[AgentSpec]) -> CommunicationGraph {
        let mut g = CommunicationGraph::new(roles.iter().map(|a| a.role.clone()).collect());
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_peer(i, j);
            }
        }
        g
    }

    fn query() -> Query {
        Query::new("q", "Best next step?").with_options([
            ('A', "Observation"),
            ('B', "Surgery"),
            ('C', "Antibiotics"),
        ])
    }

    #[test]
    fn consensus_threshold_arithmetic() {
        assert!(consensus_reached(&["A", "A", "A"], 1.0));
        assert!(!consensus_reached(&["A", "A", "B"], 1.0));
        assert!(consensus_reached(&["A", "A", "B"], 0.66));
        assert!(!consensus_reached(&["A", "B", "C"], 0.5));
        assert!(consensus_reached(&["A", "A", "B", "B"], 0.5));
        assert!(!consensus_reached::<&str>(&[], 0.5));
    }

    #[test]
    fn routing_prefers_declared_adjacent_target() {
        let agents = agents3();
        let mut g = CommunicationGraph::new(agents.iter().map(|a| a.role.clone()).collect());
        g.add_peer(0, 1); // Cardiologist == Pulmonologist
        g.add_directed(1, 2); // Pulmonologist > Radiologist

        // Declared target, adjacent: used as-is.
        assert_eq!(
            route_message(0, Some("Pulmonologist"), &g),
            Recipient::Agent("Pulmonologist".into())
        );
        // Declared target not adjacent: falls to first neighbor.
        assert_eq!(
            route_message(0, Some("Radiologist"), &g),
            Recipient::Agent("Pulmonologist".into())
        );
        // No declared target: first neighbor in roster order.
        assert_eq!(route_message(1, None, &g), Recipient::Agent("Cardiologist".into()));
        // Radiologist has no out-edges or peers: broadcast.
        assert_eq!(route_message(2, Some("Cardiologist"), &g), Recipient::All);
    }

    #[test]
    fn feedback_splits_on_role_headers() {
        let roles = vec!["Cardiologist".to_string(), "Pulmonologist".to_string()];
        let text = "Overall the team ignored the imaging.\n\
                    **Cardiologist:** revisit the murmur.\n\
                    Pulmonologist: the effusion matters.\nConsider it.";
        let split = split_feedback(text, &roles);
        assert_eq!(
            split["Cardiologist"],
            "Overall the team ignored the imaging.\nrevisit the murmur."
        );
        assert_eq!(
            split["Pulmonologist"],
            "Overall the team ignored the imaging.\nthe effusion matters.\nConsider it."
        );
    }

    #[test]
    fn feedback_without_headers_goes_to_everyone() {
        let roles = vec!["Cardiologist".to_string(), "Pulmonologist".to_string()];
        let split = split_feedback("Please reconsider option B together.", &roles);
        assert_eq!(split.len(), 2);
        assert!(split.values().all(|v| v == "Please reconsider option B together."));
    }

    #[tokio::test]
    async fn immediate_consensus_is_n_plus_one_calls() {
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:**(A)".into(), // decision
        ];
        let bk = ScriptedBackend::fifo(script);
        let out = run_mdt(&bk, &query(), &agents, &graph, &MdtConfig::default())
            .await
            .unwrap();
        assert_eq!(bk.snapshot_stats().calls, 4, "3 opinions + 1 decision");
        assert_eq!(out.consensus_round, Some(0));
        assert_eq!(out.answer.as_str(), "A");
        assert_eq!(out.entropy_trace.len(), 1);
        assert_eq!(out.entropy_trace[0].bits, 0.0);
        assert_eq!(out.votes.len(), 3);
    }

    #[tokio::test]
    async fn perpetual_disagreement_hits_the_call_bound() {
        // N=3, T=1, R=1, review on, never converging:
        // 3 opinions + 3 turn calls + 1 feedback + 1 decision = 8 calls.
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "I think **Answer:** (A). Confidence: 0.8".into(),
            "I think **Answer:** (B). Confidence: 0.7".into(),
            "I think **Answer:** (C). Confidence: 0.6".into(),
            "no. Sticking with **Answer:** (A)".into(),
            "no. Sticking with **Answer:** (B)".into(),
            "no. Sticking with **Answer:** (C)".into(),
            "Cardiologist: look again.\nPulmonologist: look again.\nRadiologist: look again.".into(),
            "**Answer:**(B)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig { rounds: 1, turns: 1, ..MdtConfig::default() };
        let out = run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 8, "N + R*(N*T + 1) + 1 with N=3,R=1,T=1");
        assert_eq!(out.consensus_round, None);
        assert_eq!(out.answer.as_str(), "B");
        // Entropy: three-way split both times.
        assert_eq!(out.entropy_trace.len(), 2);
        assert!((out.entropy_trace[0].bits - 3.0f64.log2()).abs() < 1e-12);
        assert!((out.entropy_trace[1].bits - 3.0f64.log2()).abs() < 1e-12);
        // The feedback call saw the moderator prompt.
        let tags = bk.request_tags();
        assert_eq!(tags[6], "feedback:r1");
        assert_eq!(tags[7], "decision");
    }

    #[tokio::test]
    async fn two_round_equality_law() {
        // N=2, T=2, R=2, perpetual disagreement:
        // 2 + 2*(2*2 + 1) + 1 = 13 calls.
        let agents = vec![
            AgentSpec::new("a1", "Cardiologist", "heart"),
            AgentSpec::new("a2", "Pulmonologist", "lungs"),
        ];
        let graph = full_graph(2, &agents);
        let mut script: Vec<String> = vec!["**Answer:** (A)".into(), "**Answer:** (B)".into()];
        for _ in 0..2 {
            // one round: 2 turns x 2 agents, then feedback
            for _ in 0..2 {
                script.push("no. **Answer:** (A)".into());
                script.push("no. **Answer:** (B)".into());
            }
            script.push("Keep discussing.".into());
        }
        script.push("**Answer:**(A)".into());
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig { rounds: 2, turns: 2, ..MdtConfig::default() };
        let out = run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 13);
        assert_eq!(out.consensus_round, None);
        assert_eq!(out.entropy_trace.len(), 3, "round 0 plus two discussion rounds");
    }

    #[tokio::test]
    async fn convergence_in_round_one_skips_feedback() {
        // Round 1 ends unanimous, so no moderator call and no round 2:
        // 3 opinions + 3 turn calls + 1 decision = 7.
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (B)".into(),
            "**Answer:** (A)".into(),
            "no, convinced. **Answer:** (A)".into(),
            "no, agreed. **Answer:** (A)".into(),
            "no, fine. **Answer:** (A)".into(),
            "**Answer:**(A)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig { rounds: 3, turns: 1, ..MdtConfig::default() };
        let out = run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 7);
        assert_eq!(out.consensus_round, Some(1));
        assert_eq!(out.entropy_trace.len(), 2);
        assert_eq!(out.entropy_trace[1].bits, 0.0);
        assert!(!bk.request_tags().iter().any(|t| t.starts_with("feedback")));
    }

    #[tokio::test]
    async fn unparsed_turn_retains_previous_stance() {
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:** (B)".into(),
            "no. **Answer:** (A)".into(),
            "no. **Answer:** (A)".into(),
            "hmm, I want to hear more first.".into(), // unparseable
            "Radiologist: commit to an answer.".into(),
            "**Answer:**(A)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig { rounds: 1, turns: 1, ..MdtConfig::default() };
        let out = run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        assert!(out.flags.iter().any(|f| f.contains("stance retained: radiologist")));
        // Radiologist kept B, so the team stayed split: A, A, B.
        assert!((out.entropy_trace[1].bits - 0.9182958340544896).abs() < 1e-9);
        assert_eq!(out.consensus_round, None);
    }

    #[tokio::test]
    async fn discussion_log_reaches_the_decider() {
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:**(A)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        run_mdt(&bk, &query(), &agents, &graph, &MdtConfig::default())
            .await
            .unwrap();
        let decider_prompt = &bk.requests()[3].messages[0].text;
        assert!(decider_prompt.contains("[Round 0] Cardiologist (initial opinion)"));
        assert!(decider_prompt.contains("team discussion"));
    }

    #[tokio::test]
    async fn turn_prompts_carry_history_and_inbox() {
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (B)".into(),
            "**Answer:** (C)".into(),
            "no. **Answer:** (A)".into(),
            "no. **Answer:** (B)".into(),
            "no. **Answer:** (C)".into(),
            "Work it out.".into(),
            "**Answer:**(A)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig { rounds: 1, turns: 1, ..MdtConfig::default() };
        run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        // The cardiologist's turn request: [opinion user, opinion reply,
        // turn prompt] with the others' opinions in the turn prompt.
        let turn_req = &bk.requests()[3];
        assert_eq!(turn_req.messages.len(), 3);
        let turn_prompt = &turn_req.messages[2].text;
        assert!(turn_prompt.contains("Pulmonologist: **Answer:** (B)"));
        assert!(turn_prompt.contains("Radiologist: **Answer:** (C)"));
        assert!(!turn_prompt.contains("Cardiologist: **Answer:** (A)"), "not their own");
    }

    #[tokio::test]
    async fn grounding_lands_in_first_prompts_only() {
        let agents = agents3();
        let graph = full_graph(3, &agents);
        let script: Vec<String> = vec![
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:** (A)".into(),
            "**Answer:**(A)".into(),
        ];
        let bk = ScriptedBackend::fifo(script);
        let cfg = MdtConfig {
            grounding: Some("### Reference knowledge\nmitral facts\n### End of reference knowledge\n\n".into()),
            ..MdtConfig::default()
        };
        run_mdt(&bk, &query(), &agents, &graph, &cfg).await.unwrap();
        for i in 0..3 {
            assert!(bk.requests()[i].messages[0].text.starts_with("### Reference knowledge"));
        }
        assert!(!bk.requests()[3].messages[0].text.contains("Reference knowledge"));
    }
}
