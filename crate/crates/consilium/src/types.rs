//! Core domain types shared by every stage of the engine: queries, answers,
//! complexity levels, expert rosters, communication graphs, transcripts and
//! the final decision record.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

// ---- Answers ----

/// Canonical answer value: an uppercase option letter (`"A"`..`"Z"`) or one
/// of the closed-class words `"yes"` / `"no"` / `"maybe"`.
///
/// Ordering is plain string order, which doubles as the deterministic
/// tie-break everywhere votes can tie.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalAnswer(String);

impl CanonicalAnswer {
    pub fn letter(c: char) -> Self {
        debug_assert!(c.is_ascii_uppercase());
        CanonicalAnswer(c.to_string())
    }

    /// Canonicalize free text: a lone ASCII letter becomes uppercase, and
    /// yes/no/maybe are accepted case-insensitively. Anything else is
    /// rejected.
    pub fn from_text(s: &str) -> Option<Self> {
        let t = s.trim();
        if t.len() == 1 {
            let c = t.chars().next().unwrap();
            if c.is_ascii_alphabetic() {
                return Some(CanonicalAnswer(c.to_ascii_uppercase().to_string()));
            }
            return None;
        }
        match t.to_ascii_lowercase().as_str() {
            "yes" => Some(CanonicalAnswer("yes".into())),
            "no" => Some(CanonicalAnswer("no".into())),
            "maybe" => Some(CanonicalAnswer("maybe".into())),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_letter(&self) -> bool {
        self.0.len() == 1
    }
}

impl fmt::Display for CanonicalAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The key space a query's answers are drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerKeys {
    /// Lettered multiple choice; the vector holds the valid letters in order.
    Letters(Vec<char>),
    /// Closed-class yes / no / maybe questions.
    Ternary,
}

impl AnswerKeys {
    pub fn members(&self) -> Vec<CanonicalAnswer> {
        match self {
            AnswerKeys::Letters(ls) => ls.iter().map(|&c| CanonicalAnswer::letter(c)).collect(),
            AnswerKeys::Ternary => ["yes", "no", "maybe"]
                .iter()
                .map(|s| CanonicalAnswer(s.to_string()))
                .collect(),
        }
    }

    /// Canonicalize a token iff it is a member of this key space.
    pub fn accept(&self, token: &str) -> Option<CanonicalAnswer> {
        let ans = CanonicalAnswer::from_text(token)?;
        if self.members().contains(&ans) {
            Some(ans)
        } else {
            None
        }
    }

    /// Deterministic default when extraction falls all the way through:
    /// the first key in natural order.
    pub fn fallback_answer(&self) -> CanonicalAnswer {
        self.members()
            .into_iter()
            .next()
            .expect("key spaces are never empty")
    }
}

// ---- Queries ----

/// One decision problem: a question, optional lettered options, optional
/// context passage and image reference, and (for scoring) the gold answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub options: BTreeMap<char, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<CanonicalAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "image")]
    pub attachment: Option<Attachment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

impl Query {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Query {
            id: id.into(),
            question: question.into(),
            options: BTreeMap::new(),
            answer: None,
            context: None,
            attachment: None,
            dataset: None,
        }
    }

    pub fn with_options<I, S>(mut self, opts: I) -> Self
    where
        I: IntoIterator<Item = (char, S)>,
        S: Into<String>,
    {
        self.options = opts.into_iter().map(|(c, s)| (c, s.into())).collect();
        self
    }

    pub fn with_answer(mut self, ans: CanonicalAnswer) -> Self {
        self.answer = Some(ans);
        self
    }

    /// Lettered when options are present, ternary otherwise.
    pub fn answer_keys(&self) -> AnswerKeys {
        if self.options.is_empty() {
            AnswerKeys::Ternary
        } else {
            AnswerKeys::Letters(self.options.keys().copied().collect())
        }
    }
}

/// Opaque reference to an image the backend may attach to a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    Path(String),
    Bytes { mime: String, data: Vec<u8> },
}

impl Attachment {
    /// Stable identity used in request hashing: the path itself, or a
    /// digest of inline bytes.
    pub fn stable_id(&self) -> String {
        match self {
            Attachment::Path(p) => format!("path:{p}"),
            Attachment::Bytes { mime, data } => {
                use sha2::{Digest, Sha256};
                let mut h = Sha256::new();
                h.update(data);
                format!("bytes:{mime}:{}", hex::encode(h.finalize()))
            }
        }
    }
}

/// Validate a query against the structural rules; returns one message per
/// violation (empty = valid).
pub fn validate_query(q: &Query) -> Vec<String> {
    let mut v = Vec::new();
    if q.id.trim().is_empty() {
        v.push("id is empty".to_string());
    }
    if q.question.trim().is_empty() {
        v.push("question text is empty".to_string());
    }
    for key in q.options.keys() {
        if !key.is_ascii_uppercase() {
            v.push(format!("option key '{key}' is not an uppercase letter"));
        }
    }
    for (key, text) in &q.options {
        if text.trim().is_empty() {
            v.push(format!("option '{key}' has empty text"));
        }
    }
    if let Some(ans) = &q.answer {
        let keys = q.answer_keys();
        if keys.accept(ans.as_str()).is_none() {
            v.push(format!(
                "gold answer '{ans}' is not among the valid keys for this query"
            ));
        }
    }
    v
}

// ---- Complexity ----

/// Assessed difficulty of a query; drives which collaboration structure the
/// engine recruits. Ordering is Low < Moderate < High.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityLevel {
    Low,
    Moderate,
    High,
}

impl ComplexityLevel {
    pub const ALL: [ComplexityLevel; 3] = [
        ComplexityLevel::Low,
        ComplexityLevel::Moderate,
        ComplexityLevel::High,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ComplexityLevel::Low => "low",
            ComplexityLevel::Moderate => "moderate",
            ComplexityLevel::High => "high",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Some(ComplexityLevel::Low),
            "moderate" => Some(ComplexityLevel::Moderate),
            "high" => Some(ComplexityLevel::High),
            _ => None,
        }
    }
}

impl fmt::Display for ComplexityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

// ---- Experts ----

/// One recruited expert: a role label, a one-line description that seeds the
/// system prompt, an optional vote weight and a unique id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: String,
    pub role: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl AgentSpec {
    pub fn new(id: impl Into<String>, role: impl Into<String>, description: impl Into<String>) -> Self {
        AgentSpec {
            id: id.into(),
            role: role.into(),
            description: description.into(),
            weight: None,
        }
    }
}

/// Who talks to whom inside a team. Peer edges are unordered pairs; directed
/// edges point from the consulting agent to the consulted one. Both sets are
/// deduplicated and every endpoint must be a member index.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunicationGraph {
    pub members: Vec<String>,
    /// Unordered pairs stored as (lo, hi) member indices.
    peer: BTreeSet<(usize, usize)>,
    /// Ordered pairs (from, to) member indices.
    directed: BTreeSet<(usize, usize)>,
}

impl CommunicationGraph {
    pub fn new(members: Vec<String>) -> Self {
        CommunicationGraph {
            members,
            peer: BTreeSet::new(),
            directed: BTreeSet::new(),
        }
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.members.iter().position(|m| m == id)
    }

    pub fn add_peer(&mut self, a: usize, b: usize) -> bool {
        assert!(a < self.members.len() && b < self.members.len(), "edge endpoint out of range");
        if a == b {
            return false;
        }
        self.peer.insert((a.min(b), a.max(b)))
    }

    pub fn add_directed(&mut self, from: usize, to: usize) -> bool {
        assert!(from < self.members.len() && to < self.members.len(), "edge endpoint out of range");
        if from == to {
            return false;
        }
        self.directed.insert((from, to))
    }

    pub fn peer_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.peer.iter().copied()
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    pub fn peer_count(&self) -> usize {
        self.peer.len()
    }

    pub fn directed_count(&self) -> usize {
        self.directed.len()
    }

    pub fn has_edges(&self) -> bool {
        !self.peer.is_empty() || !self.directed.is_empty()
    }

    /// Can `speaker` address `target` directly? True on a shared peer edge
    /// or a directed edge speaker -> target.
    pub fn is_adjacent(&self, speaker: usize, target: usize) -> bool {
        if speaker == target {
            return false;
        }
        self.peer.contains(&(speaker.min(target), speaker.max(target)))
            || self.directed.contains(&(speaker, target))
    }

    /// Routing neighbors of `speaker` (peer partners plus directed
    /// out-neighbors), ascending by member index.
    pub fn neighbors(&self, speaker: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.members.len())
            .filter(|&t| self.is_adjacent(speaker, t))
            .collect();
        out.dedup();
        out
    }
}

/// One team inside a multi-team pipeline: named, ordered members, a lead who
/// writes the synthesis, and a strictly increasing pipeline position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamSpec {
    pub name: String,
    pub members: Vec<AgentSpec>,
    /// Agent id of the lead; must identify one of `members`.
    pub lead: String,
    pub position: u32,
}

impl TeamSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.members.is_empty() {
            v.push(format!("team '{}' has no members", self.name));
        }
        if !self.members.iter().any(|m| m.id == self.lead) {
            v.push(format!("team '{}' lead '{}' is not a member", self.name, self.lead));
        }
        v
    }
}

/// The recruited collaboration structure for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ExpertRoster {
    /// A single primary-care physician answers alone.
    SinglePcp { agent: AgentSpec },
    /// A flat multidisciplinary team with a communication graph.
    Mdt {
        agents: Vec<AgentSpec>,
        graph: CommunicationGraph,
    },
    /// An ordered pipeline of teams, each handing its report downstream.
    IctTeams { teams: Vec<TeamSpec> },
}

impl ExpertRoster {
    /// All agents in roster order, flattened across teams.
    pub fn agents(&self) -> Vec<&AgentSpec> {
        match self {
            ExpertRoster::SinglePcp { agent } => vec![agent],
            ExpertRoster::Mdt { agents, .. } => agents.iter().collect(),
            ExpertRoster::IctTeams { teams } => {
                teams.iter().flat_map(|t| t.members.iter()).collect()
            }
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            ExpertRoster::SinglePcp { .. } => {}
            ExpertRoster::Mdt { agents, graph } => {
                if agents.len() < 2 {
                    v.push("a team roster needs at least two agents".into());
                }
                if graph.members.len() != agents.len() {
                    v.push("communication graph members do not match the agent list".into());
                }
            }
            ExpertRoster::IctTeams { teams } => {
                if teams.is_empty() {
                    v.push("a team pipeline needs at least one team".into());
                }
                for t in teams {
                    v.extend(t.validate());
                }
                if let Some(first) = teams.first() {
                    if first.name != crate::ict::INITIAL_TEAM_NAME {
                        v.push(format!(
                            "first team must be named '{}', got '{}'",
                            crate::ict::INITIAL_TEAM_NAME,
                            first.name
                        ));
                    }
                }
                if let Some(last) = teams.last() {
                    if last.name != crate::ict::FINAL_TEAM_NAME {
                        v.push(format!(
                            "last team must be named '{}', got '{}'",
                            crate::ict::FINAL_TEAM_NAME,
                            last.name
                        ));
                    }
                }
                let increasing = teams.windows(2).all(|w| w[0].position < w[1].position);
                if !increasing {
                    v.push("team positions must be strictly increasing".into());
                }
            }
        }
        v
    }
}

// ---- Transcript ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Classification,
    Recruitment,
    Opinion,
    Message,
    Feedback,
    Assessment,
    Report,
    Decision,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipient {
    All,
    Moderator,
    Agent(String),
}

/// Confidence grade attached to every parse result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseConfidence {
    Exact,
    Heuristic,
    Fallback,
}

/// One utterance in a run: who said what to whom, in which round and turn,
/// plus whatever stance was extracted from the raw text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub seq: u64,
    pub round: u32,
    pub turn: u32,
    pub speaker: String,
    pub recipient: Recipient,
    pub kind: EventKind,
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<CanonicalAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<ParseConfidence>,
}

/// Append-only event log ordered by (round, turn, seq).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
    next_seq: u64,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn push(
        &mut self,
        round: u32,
        turn: u32,
        speaker: impl Into<String>,
        recipient: Recipient,
        kind: EventKind,
        raw: impl Into<String>,
        extracted: Option<CanonicalAnswer>,
        confidence: Option<ParseConfidence>,
    ) -> &TranscriptEvent {
        let ev = TranscriptEvent {
            seq: self.next_seq,
            round,
            turn,
            speaker: speaker.into(),
            recipient,
            kind,
            raw: raw.into(),
            extracted,
            confidence,
        };
        self.next_seq += 1;
        self.events.push(ev);
        self.events.last().unwrap()
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }
}

// ---- Reports ----

/// The written product of one team in the pipeline. `body` is the lead's
/// synthesis verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub team_name: String,
    pub body: String,
    pub produced_by: String,
    #[serde(default)]
    pub consumed_reports: Vec<String>,
}

// ---- Accounting ----

/// Backend usage counters. `calls` counts completions actually issued (cache
/// hits excluded); char counts are Unicode scalar counts of prompt and
/// completion text; cost is estimated from the configured price table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CallStats {
    pub calls: u64,
    pub prompt_chars: u64,
    pub completion_chars: u64,
    pub estimated_cost: f64,
}

impl CallStats {
    /// Usage accrued since `earlier` (e.g. one run's share of a shared
    /// backend). Saturates rather than panicking if snapshots are swapped.
    pub fn since(&self, earlier: &CallStats) -> CallStats {
        CallStats {
            calls: self.calls.saturating_sub(earlier.calls),
            prompt_chars: self.prompt_chars.saturating_sub(earlier.prompt_chars),
            completion_chars: self
                .completion_chars
                .saturating_sub(earlier.completion_chars),
            estimated_cost: (self.estimated_cost - earlier.estimated_cost).max(0.0),
        }
    }

    pub fn add(&mut self, other: &CallStats) {
        self.calls += other.calls;
        self.prompt_chars += other.prompt_chars;
        self.completion_chars += other.completion_chars;
        self.estimated_cost += other.estimated_cost;
    }
}

// ---- Decision ----

/// One agent's contribution to the final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub answer: CanonicalAnswer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// Per-round disagreement measure, in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub round: u32,
    pub bits: f64,
}

/// The engine's final output for one query, with enough provenance to audit
/// how the answer was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub answer: CanonicalAnswer,
    /// Tag naming how the final answer was produced, e.g. `"solo:direct"`,
    /// `"direct"`, `"temperature-ensemble"`, `"majority"`.
    pub method: String,
    pub complexity: ComplexityLevel,
    pub votes: BTreeMap<String, VoteRecord>,
    #[serde(default)]
    pub entropy_trace: Vec<EntropyPoint>,
    pub stats: CallStats,
    pub elapsed_ms: u64,
    #[serde(default)]
    pub flags: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalizes_letters_and_words() {
        assert_eq!(CanonicalAnswer::from_text("b").unwrap().as_str(), "B");
        assert_eq!(CanonicalAnswer::from_text(" C ").unwrap().as_str(), "C");
        assert_eq!(CanonicalAnswer::from_text("Yes").unwrap().as_str(), "yes");
        assert_eq!(CanonicalAnswer::from_text("MAYBE").unwrap().as_str(), "maybe");
        assert!(CanonicalAnswer::from_text("perhaps").is_none());
        assert!(CanonicalAnswer::from_text("AB").is_none());
    }

    #[test]
    fn complexity_orders_low_to_high() {
        assert!(ComplexityLevel::Low < ComplexityLevel::Moderate);
        assert!(ComplexityLevel::Moderate < ComplexityLevel::High);
        assert_eq!(ComplexityLevel::from_label("Moderate"), Some(ComplexityLevel::Moderate));
    }

    #[test]
    fn validate_flags_gold_outside_options() {
        let q = Query::new("q1", "What is the first-line treatment?")
            .with_options([('A', "aspirin"), ('B', "heparin"), ('C', "warfarin"), ('D', "statin")])
            .with_answer(CanonicalAnswer::letter('E'));
        let violations = validate_query(&q);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("gold answer"));
    }

    #[test]
    fn validate_accepts_ternary_gold_without_options() {
        let q = Query::new("q2", "Does the intervention reduce mortality?")
            .with_answer(CanonicalAnswer::from_text("yes").unwrap());
        assert!(validate_query(&q).is_empty());
    }

    #[test]
    fn graph_dedups_edges_and_reports_adjacency() {
        let mut g = CommunicationGraph::new(vec!["a".into(), "b".into(), "c".into()]);
        assert!(g.add_peer(0, 1));
        assert!(!g.add_peer(1, 0), "mirror pair must dedup");
        assert!(g.add_directed(0, 2));
        assert!(!g.add_directed(0, 2));
        assert_eq!(g.peer_count(), 1);
        assert_eq!(g.directed_count(), 1);
        assert!(g.is_adjacent(0, 1));
        assert!(g.is_adjacent(1, 0), "peer edges are symmetric");
        assert!(g.is_adjacent(0, 2));
        assert!(!g.is_adjacent(2, 0), "directed edges are one-way");
        assert_eq!(g.neighbors(0), vec![1, 2]);
        assert_eq!(g.neighbors(2), Vec::<usize>::new());
    }

    #[test]
    fn transcript_seq_is_strictly_increasing() {
        let mut t = Transcript::new();
        for i in 0..5u32 {
            t.push(i, 0, "x", Recipient::All, EventKind::Opinion, "hi", None, None);
        }
        let seqs: Vec<u64> = t.events().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn decision_round_trips_through_json() {
        let d = Decision {
            answer: CanonicalAnswer::letter('B'),
            method: "direct".into(),
            complexity: ComplexityLevel::Moderate,
            votes: BTreeMap::from([(
                "cardiologist".to_string(),
                VoteRecord { answer: CanonicalAnswer::letter('B'), weight: Some(0.9) },
            )]),
            entropy_trace: vec![EntropyPoint { round: 0, bits: 0.9182958340544896 }],
            stats: CallStats { calls: 6, prompt_chars: 1200, completion_chars: 300, estimated_cost: 0.0 },
            elapsed_ms: 0,
            flags: vec![],
        };
        let s = serde_json::to_string(&d).unwrap();
        let back: Decision = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn stats_delta_since_snapshot() {
        let a = CallStats { calls: 3, prompt_chars: 100, completion_chars: 50, estimated_cost: 0.5 };
        let b = CallStats { calls: 10, prompt_chars: 400, completion_chars: 90, estimated_cost: 1.25 };
        let d = b.since(&a);
        assert_eq!(d.calls, 7);
        assert_eq!(d.prompt_chars, 300);
        assert_eq!(d.completion_chars, 40);
        assert!((d.estimated_cost - 0.75).abs() < 1e-12);
    }
}
