//! The adaptive engine: complexity assessment, expert recruitment, and
//! dispatch to the matching pipeline (solo expert, deliberating team, or
//! tiered team chain), plus forced-mode entry points for baselines and
//! ablation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::aggregate::{
    self, majority, DecideConfig, DecisionMethod, Vote,
};
use crate::backend::{complete_all, ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::ict::{self, IctConfig, FINAL_TEAM_NAME, INITIAL_TEAM_NAME};
use crate::mdt::{self, MdtConfig};
use crate::parsers::{self, extract_answer, parse_complexity, parse_roster};
use crate::prompts;
use crate::retrieval::{augment_prompt, retrieve, CorpusIndex};
use crate::solo::{self, Exemplar, SoloConfig};
use crate::types::{
    AgentSpec, CanonicalAnswer, CommunicationGraph, ComplexityLevel, Decision, EventKind,
    ExpertRoster, ParseConfidence, Query, Recipient, TeamSpec, Transcript, VoteRecord,
};

// ---- Modes ----

/// Solo strategies a single expert can answer with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoloStrategy {
    /// One few-shot call.
    Direct,
    /// One chain-of-thought call.
    Cot,
    /// k sampled chains, majority vote.
    CotSc,
    /// m reasoning paths plus a synthesis call.
    Er,
    /// s choice-shuffled samples with similarity-picked shots.
    Medprompt,
}

/// Local vote rules for the independent-opinions baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupMethod {
    Majority,
    Weighted,
    Borda,
}

/// How a query is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Classify complexity, then route to the matching pipeline.
    Adaptive,
    /// Force a single expert with the given strategy (no classification).
    Solo(SoloStrategy),
    /// Force the deliberating-team pipeline.
    Mdt,
    /// Force the tiered-team pipeline.
    Ict,
    /// Independent expert opinions aggregated by a local vote rule.
    Group(GroupMethod),
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "adaptive" => Mode::Adaptive,
            "solo:direct" => Mode::Solo(SoloStrategy::Direct),
            "solo:cot" => Mode::Solo(SoloStrategy::Cot),
            "solo:cot-sc" | "solo:cot_sc" => Mode::Solo(SoloStrategy::CotSc),
            "solo:er" => Mode::Solo(SoloStrategy::Er),
            "solo:medprompt" => Mode::Solo(SoloStrategy::Medprompt),
            "mdt" => Mode::Mdt,
            "ict" => Mode::Ict,
            "group:majority" => Mode::Group(GroupMethod::Majority),
            "group:weighted" => Mode::Group(GroupMethod::Weighted),
            "group:borda" => Mode::Group(GroupMethod::Borda),
            other => {
                return Err(Error::Config(format!(
                    "unknown mode '{other}' (expected adaptive, solo:direct, solo:cot, \
                     solo:cot-sc, solo:er, solo:medprompt, mdt, ict, group:majority, \
                     group:weighted or group:borda)"
                )))
            }
        })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Adaptive => "adaptive",
            Mode::Solo(SoloStrategy::Direct) => "solo:direct",
            Mode::Solo(SoloStrategy::Cot) => "solo:cot",
            Mode::Solo(SoloStrategy::CotSc) => "solo:cot-sc",
            Mode::Solo(SoloStrategy::Er) => "solo:er",
            Mode::Solo(SoloStrategy::Medprompt) => "solo:medprompt",
            Mode::Mdt => "mdt",
            Mode::Ict => "ict",
            Mode::Group(GroupMethod::Majority) => "group:majority",
            Mode::Group(GroupMethod::Weighted) => "group:weighted",
            Mode::Group(GroupMethod::Borda) => "group:borda",
        };
        f.write_str(s)
    }
}

// ---- Configuration ----

/// Everything that shapes one run. `Default` gives the reference settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    /// Maximum deliberation rounds after the initial opinions.
    pub rounds: usize,
    /// Speaking turns per round.
    pub turns: usize,
    /// Experts recruited for team pipelines (per team for the tiered one,
    /// capped at 3 members per team).
    pub n_max: usize,
    /// Modal stance share that counts as consensus; 1.0 = unanimity.
    pub consensus_threshold: f64,
    /// Whether a moderator reviews non-converged rounds.
    pub review: bool,
    /// Samples for self-consistency.
    pub sc_paths: usize,
    /// Reasoning paths before the synthesis call.
    pub er_paths: usize,
    /// Samples for the choice-shuffling ensemble.
    pub mp_samples: usize,
    /// Few-shot exemplars per answer prompt.
    pub shot_count: usize,
    /// Temperature for single deterministic calls.
    pub temperature: f64,
    /// Temperature for sampled calls and discussion turns.
    pub sample_temperature: f64,
    pub max_tokens: u32,
    /// Per-stage completion budget overrides, keyed by stage name
    /// ("classify", "recruit", "opinion", "message", "feedback",
    /// "assess", "report", "decision", "solo").
    pub max_tokens_by_stage: BTreeMap<String, u32>,
    pub seed: u64,
    /// Decide via one call or a small temperature ensemble.
    pub ensemble_decision: bool,
    pub ensemble_temps: Vec<f64>,
    /// Reference snippets injected per query; 0 disables retrieval.
    pub retrieval_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Adaptive,
            rounds: 3,
            turns: 2,
            n_max: 3,
            consensus_threshold: 1.0,
            review: true,
            sc_paths: 5,
            er_paths: 3,
            mp_samples: 5,
            shot_count: 3,
            temperature: 0.0,
            sample_temperature: 0.7,
            max_tokens: 1024,
            max_tokens_by_stage: BTreeMap::new(),
            seed: 0,
            ensemble_decision: false,
            ensemble_temps: aggregate::DEFAULT_ENSEMBLE_TEMPS.to_vec(),
            retrieval_k: 0,
        }
    }
}

impl RunConfig {
    /// Structural problems with this configuration, empty when sound.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.turns == 0 {
            problems.push("turns must be at least 1".into());
        }
        if self.n_max == 0 {
            problems.push("n_max must be at least 1".into());
        }
        if !(self.consensus_threshold > 0.0 && self.consensus_threshold <= 1.0) {
            problems.push(format!(
                "consensus_threshold must be in (0, 1], got {}",
                self.consensus_threshold
            ));
        }
        if self.sc_paths == 0 {
            problems.push("sc_paths must be at least 1".into());
        }
        if self.er_paths == 0 {
            problems.push("er_paths must be at least 1".into());
        }
        if self.mp_samples == 0 {
            problems.push("mp_samples must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            problems.push(format!("temperature must be in [0, 2], got {}", self.temperature));
        }
        if !(0.0..=2.0).contains(&self.sample_temperature) {
            problems.push(format!(
                "sample_temperature must be in [0, 2], got {}",
                self.sample_temperature
            ));
        }
        if self.max_tokens == 0 {
            problems.push("max_tokens must be positive".into());
        }
        if self.ensemble_decision && self.ensemble_temps.is_empty() {
            problems.push("ensemble_temps must be non-empty when ensemble_decision is set".into());
        }
        problems
    }

    fn stage_tokens(&self, stage: &str) -> u32 {
        self.max_tokens_by_stage.get(stage).copied().unwrap_or(self.max_tokens)
    }

    fn decide_config(&self) -> DecideConfig {
        DecideConfig {
            method: if self.ensemble_decision {
                DecisionMethod::TemperatureEnsemble
            } else {
                DecisionMethod::Direct
            },
            temperature: self.temperature,
            ensemble_temps: self.ensemble_temps.clone(),
            max_tokens: self.stage_tokens("decision"),
            seed: Some(self.seed),
        }
    }
}

/// Static inputs shared across runs: few-shot exemplars and the optional
/// reference-knowledge index.
#[derive(Default)]
pub struct Resources {
    pub exemplars: Vec<Exemplar>,
    pub retrieval: Option<CorpusIndex>,
}

impl Resources {
    /// Grounding block for this query, or `None` when retrieval is off or
    /// finds nothing relevant.
    pub fn grounding(&self, q: &Query, k: usize) -> Option<String> {
        if k == 0 {
            return None;
        }
        let index = self.retrieval.as_ref()?;
        let snippets = retrieve(index, &q.question, k);
        if snippets.is_empty() {
            return None;
        }
        Some(augment_prompt("", &snippets))
    }
}

/// One processed query: the decision plus the full event log.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub decision: Decision,
    pub transcript: Transcript,
}

// ---- Classification ----

const CLASSIFY_ATTEMPTS: usize = 3;
const RECRUIT_ATTEMPTS: usize = 2;

/// Ask for the complexity level, retrying unparseable replies up to 3
/// attempts total, then falling back to Moderate with a flag.
pub async fn classify_complexity(
    backend: &dyn ChatBackend,
    q: &Query,
    cfg: &RunConfig,
    resources: &Resources,
    transcript: &mut Transcript,
    flags: &mut Vec<String>,
) -> Result<ComplexityLevel> {
    let mut prompt = prompts::complexity_check(&prompts::question_block(q));
    if let Some(g) = resources.grounding(q, cfg.retrieval_k) {
        prompt = format!("{g}{prompt}");
    }
    for attempt in 0..CLASSIFY_ATTEMPTS {
        let req = ChatRequest::new(prompts::complexity_system(), prompt.clone())
            .with_tag("classify")
            .with_temperature(if attempt == 0 { cfg.temperature } else { cfg.sample_temperature })
            .with_max_tokens(cfg.stage_tokens("classify"))
            .with_seed(cfg.seed.wrapping_add(attempt as u64));
        let resp = backend.complete(&req).await?;
        let parsed = parse_complexity(&resp.text);
        transcript.push(
            0,
            attempt as u32,
            "Complexity assessor",
            Recipient::Moderator,
            EventKind::Classification,
            resp.text.clone(),
            parsed.value.map(|l| CanonicalAnswer::letter(level_letter(l))),
            Some(parsed.confidence),
        );
        if let Some(level) = parsed.value {
            return Ok(level);
        }
    }
    flags.push("complexity-fallback".into());
    Ok(ComplexityLevel::Moderate)
}

fn level_letter(l: ComplexityLevel) -> char {
    match l {
        ComplexityLevel::Low => 'A',
        ComplexityLevel::Moderate => 'B',
        ComplexityLevel::High => 'C',
    }
}

// ---- Recruitment ----

fn default_roster(level: ComplexityLevel, n_max: usize) -> ExpertRoster {
    match level {
        ComplexityLevel::Low => ExpertRoster::SinglePcp {
            agent: AgentSpec::new(
                "general-physician",
                "General Physician",
                "provides broad first-contact assessment and triage",
            ),
        },
        ComplexityLevel::Moderate => {
            let pool = [
                ("internist", "Internist", "covers broad internal medicine"),
                ("family-physician", "Family Physician", "provides continuous primary care"),
                ("emergency-physician", "Emergency Physician", "manages acute presentations"),
            ];
            let agents: Vec<AgentSpec> = pool
                .iter()
                .take(n_max.max(1).min(pool.len()))
                .map(|(id, role, d)| AgentSpec::new(*id, *role, *d))
                .collect();
            if agents.len() == 1 {
                return ExpertRoster::SinglePcp { agent: agents.into_iter().next().unwrap() };
            }
            let mut graph =
                CommunicationGraph::new(agents.iter().map(|a| a.role.clone()).collect());
            for i in 0..agents.len() {
                for j in (i + 1)..agents.len() {
                    graph.add_peer(i, j);
                }
            }
            ExpertRoster::Mdt { agents, graph }
        }
        ComplexityLevel::High => {
            let team_size = n_max.clamp(1, 3);
            let agents: Vec<AgentSpec> = (0..team_size * 3)
                .map(|i| {
                    AgentSpec::new(
                        format!("generalist-{}", i + 1),
                        format!("General Physician {}", i + 1),
                        "provides broad first-contact assessment and triage",
                    )
                })
                .collect();
            ExpertRoster::IctTeams { teams: partition_into_teams(agents, team_size) }
        }
    }
}

/// Split a flat recruited roster into the fixed three-team pipeline, in
/// roster order, padding with generalists when recruitment came up short.
fn partition_into_teams(mut agents: Vec<AgentSpec>, team_size: usize) -> Vec<TeamSpec> {
    let need = team_size * 3;
    let mut pad = 0usize;
    while agents.len() < need {
        pad += 1;
        agents.push(AgentSpec::new(
            format!("generalist-pad-{pad}"),
            format!("General Physician {pad}"),
            "provides broad first-contact assessment and triage",
        ));
    }
    let names = [INITIAL_TEAM_NAME, "Specialty Team", FINAL_TEAM_NAME];
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let members: Vec<AgentSpec> =
                agents[i * team_size..(i + 1) * team_size].to_vec();
            TeamSpec {
                name: name.to_string(),
                lead: members[0].id.clone(),
                members,
                position: i as u32 + 1,
            }
        })
        .collect()
}

/// Recruit the roster for a level, retrying an unusable reply once, then
/// falling back to a built-in roster with a flag. At most 2 calls.
pub async fn recruit(
    backend: &dyn ChatBackend,
    q: &Query,
    level: ComplexityLevel,
    cfg: &RunConfig,
    transcript: &mut Transcript,
    flags: &mut Vec<String>,
) -> Result<ExpertRoster> {
    let question = prompts::question_block(q);
    let (n, want_structure) = match level {
        ComplexityLevel::Low => (1, false),
        ComplexityLevel::Moderate => (cfg.n_max.max(1), true),
        ComplexityLevel::High => (cfg.n_max.clamp(1, 3) * 3, false),
    };
    let prompt = prompts::recruiter(&question, n, want_structure);
    for attempt in 0..RECRUIT_ATTEMPTS {
        let req = ChatRequest::new(prompts::recruiter_system(), prompt.clone())
            .with_tag("recruit")
            .with_temperature(if attempt == 0 { cfg.temperature } else { cfg.sample_temperature })
            .with_max_tokens(cfg.stage_tokens("recruit"))
            .with_seed(cfg.seed.wrapping_add(attempt as u64));
        let resp = backend.complete(&req).await?;
        let parsed = match parse_roster(&resp.text, n) {
            Ok(p) => p,
            Err(parsers::ParseError::EmptyRoster) => {
                transcript.push(
                    0,
                    attempt as u32,
                    "Recruiter",
                    Recipient::Moderator,
                    EventKind::Recruitment,
                    resp.text.clone(),
                    None,
                    Some(ParseConfidence::Fallback),
                );
                continue;
            }
        };
        transcript.push(
            0,
            attempt as u32,
            "Recruiter",
            Recipient::Moderator,
            EventKind::Recruitment,
            resp.text.clone(),
            None,
            Some(parsed.confidence),
        );
        for w in &parsed.warnings {
            flags.push(format!("recruit: {w}"));
        }
        if let Some(roster) = parsed.value {
            return Ok(shape_roster(roster, level, cfg));
        }
    }
    flags.push("recruit-default".into());
    Ok(default_roster(level, cfg.n_max))
}

/// Coerce whatever was parsed into the shape the level needs.
fn shape_roster(roster: ExpertRoster, level: ComplexityLevel, cfg: &RunConfig) -> ExpertRoster {
    match level {
        ComplexityLevel::Low => match roster {
            ExpertRoster::SinglePcp { agent } => ExpertRoster::SinglePcp { agent },
            other => {
                let agent = other
                    .agents()
                    .into_iter()
                    .next()
                    .expect("non-empty roster")
                    .clone();
                ExpertRoster::SinglePcp { agent }
            }
        },
        ComplexityLevel::Moderate => roster,
        ComplexityLevel::High => {
            let team_size = cfg.n_max.clamp(1, 3);
            let agents = roster.agents().into_iter().cloned().collect();
            ExpertRoster::IctTeams {
                teams: partition_into_teams(agents, team_size),
            }
        }
    }
}

// ---- Level pipelines ----

/// Run the pipeline for an already-known level: recruit, then solve.
/// No classification call is made.
pub async fn run_level(
    backend: &dyn ChatBackend,
    q: &Query,
    level: ComplexityLevel,
    cfg: &RunConfig,
    resources: &Resources,
) -> Result<RunOutput> {
    let before = backend.snapshot_stats();
    let start = Instant::now();
    let mut transcript = Transcript::default();
    let mut flags = Vec::new();
    let roster = recruit(backend, q, level, cfg, &mut transcript, &mut flags).await?;
    let mut out = solve_with_roster(
        backend, q, level, roster, cfg, resources, transcript, flags,
    )
    .await?;
    out.decision.stats = backend.snapshot_stats().since(&before);
    out.decision.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(out)
}

/// Dispatch a recruited roster to the level's pipeline and assemble the
/// decision record (stats and elapsed time are filled by the caller).
#[allow(clippy::too_many_arguments)]
async fn solve_with_roster(
    backend: &dyn ChatBackend,
    q: &Query,
    level: ComplexityLevel,
    roster: ExpertRoster,
    cfg: &RunConfig,
    resources: &Resources,
    mut transcript: Transcript,
    mut flags: Vec<String>,
) -> Result<RunOutput> {
    let grounding = resources.grounding(q, cfg.retrieval_k);
    match (level, roster) {
        (ComplexityLevel::Low, roster) => {
            let agent = roster.agents().into_iter().next().expect("non-empty roster");
            let solo_cfg = SoloConfig {
                system: prompts::solo_system(&agent),
                temperature: cfg.temperature,
                sample_temperature: cfg.sample_temperature,
                max_tokens: cfg.stage_tokens("solo"),
                seed: cfg.seed,
                grounding,
            };
            let outcome = solo::solve_cot(
                backend,
                q,
                &solo::select_exemplars(q, &resources.exemplars, cfg.shot_count),
                cfg.shot_count,
                &solo_cfg,
            )
            .await?;
            flags.extend(outcome.flags.clone());
            for (tag, raw) in &outcome.raws {
                transcript.push(
                    0,
                    0,
                    format!("{}[{tag}]", agent.role),
                    Recipient::All,
                    EventKind::Decision,
                    raw.clone(),
                    Some(outcome.answer.clone()),
                    None,
                );
            }
            let votes = BTreeMap::from([(
                agent.role.clone(),
                VoteRecord { answer: outcome.answer.clone(), weight: None },
            )]);
            Ok(RunOutput {
                decision: decision_skeleton(outcome.answer, "solo:cot", level, votes, vec![], flags),
                transcript,
            })
        }
        (ComplexityLevel::Moderate, ExpertRoster::IctTeams { teams }) => {
            // A structure parse can overshoot; flatten it back to a team.
            let agents: Vec<AgentSpec> =
                teams.into_iter().flat_map(|t| t.members).collect();
            let graph = full_peer_graph(&agents);
            run_mdt_level(backend, q, agents, graph, cfg, grounding, transcript, flags).await
        }
        (ComplexityLevel::Moderate, ExpertRoster::SinglePcp { agent }) => {
            let graph = CommunicationGraph::new(vec![agent.role.clone()]);
            run_mdt_level(backend, q, vec![agent], graph, cfg, grounding, transcript, flags)
                .await
        }
        (ComplexityLevel::Moderate, ExpertRoster::Mdt { agents, graph }) => {
            run_mdt_level(backend, q, agents, graph, cfg, grounding, transcript, flags).await
        }
        (ComplexityLevel::High, roster) => {
            let teams = match roster {
                ExpertRoster::IctTeams { teams } => teams,
                other => {
                    let agents = other.agents().into_iter().cloned().collect();
                    partition_into_teams(agents, cfg.n_max.clamp(1, 3))
                }
            };
            let ict_cfg = IctConfig {
                temperature: cfg.sample_temperature,
                max_tokens: cfg.stage_tokens("assess"),
                seed: cfg.seed,
                decision: cfg.decide_config(),
                grounding,
            };
            let outcome = ict::run_ict(backend, q, &teams, &ict_cfg).await?;
            flags.extend(outcome.flags.clone());
            absorb(&mut transcript, &outcome.transcript);
            Ok(RunOutput {
                decision: decision_skeleton(
                    outcome.answer,
                    "ict",
                    level,
                    outcome.votes,
                    vec![],
                    flags,
                ),
                transcript,
            })
        }
    }
}

#[allow(clippy::too_many_arguments)]
async fn run_mdt_level(
    backend: &dyn ChatBackend,
    q: &Query,
    agents: Vec<AgentSpec>,
    graph: CommunicationGraph,
    cfg: &RunConfig,
    grounding: Option<String>,
    mut transcript: Transcript,
    mut flags: Vec<String>,
) -> Result<RunOutput> {
    let mdt_cfg = MdtConfig {
        rounds: cfg.rounds,
        turns: cfg.turns,
        consensus_threshold: cfg.consensus_threshold,
        review: cfg.review,
        temperature: cfg.sample_temperature,
        max_tokens: cfg.stage_tokens("message"),
        seed: cfg.seed,
        decision: cfg.decide_config(),
        grounding,
    };
    let outcome = mdt::run_mdt(backend, q, &agents, &graph, &mdt_cfg).await?;
    flags.extend(outcome.flags.clone());
    absorb(&mut transcript, &outcome.transcript);
    Ok(RunOutput {
        decision: decision_skeleton(
            outcome.answer,
            "mdt",
            ComplexityLevel::Moderate,
            outcome.votes,
            outcome.entropy_trace,
            flags,
        ),
        transcript,
    })
}

fn full_peer_graph(agents: &[AgentSpec]) -> CommunicationGraph {
    let mut graph = CommunicationGraph::new(agents.iter().map(|a| a.role.clone()).collect());
    for i in 0..agents.len() {
        for j in (i + 1)..agents.len() {
            graph.add_peer(i, j);
        }
    }
    graph
}

fn decision_skeleton(
    answer: CanonicalAnswer,
    method: &str,
    complexity: ComplexityLevel,
    votes: BTreeMap<String, VoteRecord>,
    entropy_trace: Vec<crate::types::EntropyPoint>,
    flags: Vec<String>,
) -> Decision {
    Decision {
        answer,
        method: method.to_string(),
        complexity,
        votes,
        entropy_trace,
        stats: Default::default(),
        elapsed_ms: 0,
        flags,
    }
}

/// Re-push every event of `src` onto `dst`, renumbering sequence ids.
fn absorb(dst: &mut Transcript, src: &Transcript) {
    for ev in src.events() {
        dst.push(
            ev.round,
            ev.turn,
            ev.speaker.clone(),
            ev.recipient.clone(),
            ev.kind,
            ev.raw.clone(),
            ev.extracted.clone(),
            ev.confidence,
        );
    }
}

// ---- Entry point ----

/// Process one query under `cfg`. This is the engine's front door: it
/// classifies when the mode is adaptive, recruits when the pipeline needs
/// experts, runs the pipeline, and accounts calls, characters, cost and
/// wall time for exactly this run.
pub async fn run(
    backend: &dyn ChatBackend,
    q: &Query,
    cfg: &RunConfig,
    resources: &Resources,
) -> Result<RunOutput> {
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let before = backend.snapshot_stats();
    let start = Instant::now();

    let mut out = match cfg.mode {
        Mode::Adaptive => {
            let mut transcript = Transcript::default();
            let mut flags = Vec::new();
            let level =
                classify_complexity(backend, q, cfg, resources, &mut transcript, &mut flags)
                    .await?;
            let roster = recruit(backend, q, level, cfg, &mut transcript, &mut flags).await?;
            solve_with_roster(backend, q, level, roster, cfg, resources, transcript, flags)
                .await?
        }
        Mode::Solo(strategy) => run_solo(backend, q, strategy, cfg, resources).await?,
        Mode::Mdt => {
            let mut transcript = Transcript::default();
            let mut flags = Vec::new();
            let roster = recruit(
                backend,
                q,
                ComplexityLevel::Moderate,
                cfg,
                &mut transcript,
                &mut flags,
            )
            .await?;
            solve_with_roster(
                backend,
                q,
                ComplexityLevel::Moderate,
                roster,
                cfg,
                resources,
                transcript,
                flags,
            )
            .await?
        }
        Mode::Ict => {
            let mut transcript = Transcript::default();
            let mut flags = Vec::new();
            let roster =
                recruit(backend, q, ComplexityLevel::High, cfg, &mut transcript, &mut flags)
                    .await?;
            solve_with_roster(
                backend,
                q,
                ComplexityLevel::High,
                roster,
                cfg,
                resources,
                transcript,
                flags,
            )
            .await?
        }
        Mode::Group(method) => run_group(backend, q, method, cfg, resources).await?,
    };

    out.decision.stats = backend.snapshot_stats().since(&before);
    out.decision.elapsed_ms = start.elapsed().as_millis() as u64;
    Ok(out)
}

// ---- Forced solo ----

async fn run_solo(
    backend: &dyn ChatBackend,
    q: &Query,
    strategy: SoloStrategy,
    cfg: &RunConfig,
    resources: &Resources,
) -> Result<RunOutput> {
    let solo_cfg = SoloConfig {
        system: "You are a medical expert. Answer the medical question accurately.".into(),
        temperature: cfg.temperature,
        sample_temperature: cfg.sample_temperature,
        max_tokens: cfg.stage_tokens("solo"),
        seed: cfg.seed,
        grounding: resources.grounding(q, cfg.retrieval_k),
    };
    let shots = cfg.shot_count;
    let exemplars = solo::select_exemplars(q, &resources.exemplars, shots);
    let outcome = match strategy {
        SoloStrategy::Direct => {
            solo::solve_direct(backend, q, &exemplars, shots, &solo_cfg).await?
        }
        SoloStrategy::Cot => solo::solve_cot(backend, q, &exemplars, shots, &solo_cfg).await?,
        SoloStrategy::CotSc => {
            solo::solve_cot_sc(backend, q, &exemplars, shots, cfg.sc_paths, &solo_cfg).await?
        }
        SoloStrategy::Er => {
            solo::solve_er(backend, q, &exemplars, shots, cfg.er_paths, &solo_cfg).await?
        }
        SoloStrategy::Medprompt => {
            // This strategy picks its own exemplars from the whole pool.
            solo::solve_medprompt_lite(
                backend,
                q,
                &resources.exemplars,
                shots,
                cfg.mp_samples,
                &solo_cfg,
            )
            .await?
        }
    };

    let mut transcript = Transcript::default();
    for (i, (tag, raw)) in outcome.raws.iter().enumerate() {
        transcript.push(
            0,
            i as u32,
            format!("Expert[{tag}]"),
            Recipient::All,
            EventKind::Opinion,
            raw.clone(),
            None,
            None,
        );
    }
    let votes: BTreeMap<String, VoteRecord> = outcome
        .votes
        .iter()
        .map(|v| {
            (v.agent_id.clone(), VoteRecord { answer: v.answer.clone(), weight: v.weight })
        })
        .collect();
    Ok(RunOutput {
        decision: decision_skeleton(
            outcome.answer,
            &outcome.method,
            ComplexityLevel::Low,
            votes,
            vec![],
            outcome.flags,
        ),
        transcript,
    })
}

// ---- Independent-opinions baselines ----

async fn run_group(
    backend: &dyn ChatBackend,
    q: &Query,
    method: GroupMethod,
    cfg: &RunConfig,
    resources: &Resources,
) -> Result<RunOutput> {
    let mut transcript = Transcript::default();
    let mut flags = Vec::new();
    let roster = recruit(
        backend,
        q,
        ComplexityLevel::Moderate,
        cfg,
        &mut transcript,
        &mut flags,
    )
    .await?;
    let agents = roster.agents();
    let grounding = resources.grounding(q, cfg.retrieval_k);

    let question = prompts::question_block(q);
    let base_prompt = match method {
        GroupMethod::Borda => prompts::ranking_request(&question),
        _ => prompts::initial_opinion(&question),
    };
    let prompt = match &grounding {
        Some(g) => format!("{g}{base_prompt}"),
        None => base_prompt,
    };
    let reqs: Vec<ChatRequest> = agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            ChatRequest::new(prompts::solo_system(a), prompt.clone())
                .with_tag(format!("opinion:{}", a.id))
                .with_temperature(cfg.sample_temperature)
                .with_max_tokens(cfg.stage_tokens("opinion"))
                .with_seed(cfg.seed.wrapping_add(i as u64))
        })
        .collect();

    let keys = q.answer_keys();
    let mut votes: Vec<Vote> = Vec::new();
    for (i, resp) in complete_all(backend, &reqs).await.into_iter().enumerate() {
        let resp = resp?;
        let agent = &agents[i];
        let parsed = extract_answer(&resp.text, &keys, &q.options);
        let ranking = match method {
            GroupMethod::Borda => parsers::parse_ranking(&resp.text, &keys).value,
            _ => None,
        };
        transcript.push(
            0,
            0,
            agent.role.clone(),
            Recipient::Moderator,
            EventKind::Opinion,
            resp.text.clone(),
            parsed.value.clone(),
            Some(parsed.confidence),
        );
        // For ranked voting the top of the ranking stands in when no
        // explicit answer was stated.
        let answer = parsed
            .value
            .or_else(|| ranking.as_ref().and_then(|r| r.first().cloned()));
        match answer {
            Some(a) => votes.push(Vote {
                agent_id: agent.role.clone(),
                answer: a,
                weight: agent.weight,
                ranking,
            }),
            None => flags.push(format!("opinion unparsed: {}", agent.id)),
        }
    }

    // Rank voting can only count complete ballots.
    if method == GroupMethod::Borda {
        let before = votes.len();
        votes.retain(|v| v.ranking.is_some());
        for _ in votes.len()..before {
            flags.push("ballot without a full ranking dropped".into());
        }
    }

    let method_name = format!("group:{}", group_label(method));
    let answer = if votes.is_empty() {
        flags.push("no usable ballots; defaulted to first option".into());
        keys.fallback_answer()
    } else {
        let result = match method {
            GroupMethod::Majority => majority(&votes),
            GroupMethod::Weighted => aggregate::weighted(&votes),
            GroupMethod::Borda => aggregate::borda(&votes),
        };
        result.map_err(Error::Vote)?
    };

    let vote_map: BTreeMap<String, VoteRecord> = votes
        .iter()
        .map(|v| {
            (v.agent_id.clone(), VoteRecord { answer: v.answer.clone(), weight: v.weight })
        })
        .collect();
    Ok(RunOutput {
        decision: decision_skeleton(
            answer,
            &method_name,
            ComplexityLevel::Moderate,
            vote_map,
            vec![],
            flags,
        ),
        transcript,
    })
}

fn group_label(m: GroupMethod) -> &'static str {
    match m {
        GroupMethod::Majority => "majority",
        GroupMethod::Weighted => "weighted",
        GroupMethod::Borda => "borda",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;

    fn query() -> Query {
        Query::new("q1", "Which valve is most often affected in rheumatic heart disease?")
            .with_options([('A', "Aortic"), ('B', "Mitral"), ('C', "Tricuspid"), ('D', "Pulmonary")])
    }

    fn recruit_reply_mdt() -> String {
        "1. Cardiologist - specializes in disorders of the heart\n\
         2. Rheumatologist - specializes in autoimmune disease\n\
         3. Pediatrician - specializes in the care of children\n\
         Cardiologist == Rheumatologist == Pediatrician"
            .to_string()
    }

    fn recruit_reply_flat9() -> String {
        (1..=9)
            .map(|i| format!("{i}. Specialist {i} - domain expert number {i}"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn mode_strings_round_trip() {
        for s in [
            "adaptive",
            "solo:direct",
            "solo:cot",
            "solo:cot-sc",
            "solo:er",
            "solo:medprompt",
            "mdt",
            "ict",
            "group:majority",
            "group:weighted",
            "group:borda",
        ] {
            let m: Mode = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("committee".parse::<Mode>().is_err());
    }

    #[test]
    fn config_validation_catches_bad_knobs() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_empty());
        cfg.turns = 0;
        cfg.consensus_threshold = 1.5;
        cfg.temperature = 3.0;
        let problems = cfg.validate();
        assert_eq!(problems.len(), 3);
    }

    #[tokio::test]
    async fn adaptive_low_is_exactly_three_calls() {
        // classify -> recruit -> one answer call.
        let bk = ScriptedBackend::fifo([
            "1) low",
            "1. General Physician - provides broad first-contact assessment",
            "The mitral valve. **Answer:** (B)",
        ]);
        let out = run(&bk, &query(), &RunConfig::default(), &Resources::default())
            .await
            .unwrap();
        assert_eq!(bk.snapshot_stats().calls, 3);
        assert_eq!(out.decision.stats.calls, 3);
        assert_eq!(out.decision.complexity, ComplexityLevel::Low);
        assert_eq!(out.decision.answer.as_str(), "B");
        assert_eq!(out.decision.method, "solo:cot");
        let tags = bk.request_tags();
        assert_eq!(tags, vec!["classify", "recruit", "solo"]);
    }

    #[tokio::test]
    async fn adaptive_moderate_worked_example_is_ten_calls() {
        // The reference trace: classify + recruit + 3 opinions +
        // (R=1 round of T=1 turn x 3 agents) + feedback + decision = 10,
        // when the team never converges.
        let mut script: Vec<String> = vec!["2) moderate".into(), recruit_reply_mdt()];
        script.extend([
            "**Answer:** (A). Confidence: 0.7".to_string(),
            "**Answer:** (B). Confidence: 0.8".to_string(),
            "**Answer:** (C). Confidence: 0.6".to_string(),
            "no. Staying with **Answer:** (A)".to_string(),
            "no. Staying with **Answer:** (B)".to_string(),
            "no. Staying with **Answer:** (C)".to_string(),
            "Cardiologist: reconsider.\nRheumatologist: reconsider.\nPediatrician: reconsider."
                .to_string(),
            "**Answer:**(B)".to_string(),
        ]);
        let bk = ScriptedBackend::fifo(script);
        let cfg = RunConfig { rounds: 1, turns: 1, ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 10);
        assert_eq!(out.decision.stats.calls, 10);
        assert_eq!(out.decision.complexity, ComplexityLevel::Moderate);
        assert_eq!(out.decision.method, "mdt");
        assert_eq!(out.decision.answer.as_str(), "B");
        assert_eq!(out.decision.entropy_trace.len(), 2);
    }

    #[tokio::test]
    async fn moderate_call_bound_holds_with_defaults() {
        // R=3, T=2, N=3, never converging:
        // 2 + 3 + 3*(3*2 + 1) + 1 = 27 calls.
        let mut script: Vec<String> = vec!["2) moderate".into(), recruit_reply_mdt()];
        for s in ["(A)", "(B)", "(C)"] {
            script.push(format!("**Answer:** {s}"));
        }
        for _round in 0..3 {
            for _turn in 0..2 {
                for s in ["(A)", "(B)", "(C)"] {
                    script.push(format!("no. **Answer:** {s}"));
                }
            }
            script.push("Please converge.".to_string());
        }
        script.push("**Answer:**(A)".to_string());
        let bk = ScriptedBackend::fifo(script);
        let out = run(&bk, &query(), &RunConfig::default(), &Resources::default())
            .await
            .unwrap();
        assert_eq!(bk.snapshot_stats().calls, 27);
        assert_eq!(out.decision.entropy_trace.len(), 4);
    }

    #[tokio::test]
    async fn adaptive_high_runs_the_tiered_pipeline() {
        // classify + recruit + 3 teams x (3 + 1) + decision = 15.
        let mut script: Vec<String> = vec!["3) high".into(), recruit_reply_flat9()];
        for team in 0..3 {
            for member in 0..3 {
                script.push(format!("Team {team} member {member}: **Answer:** (B)"));
            }
            script.push(format!("Report of team {team}"));
        }
        script.push("**Answer:**(B)".to_string());
        let bk = ScriptedBackend::fifo(script);
        let out = run(&bk, &query(), &RunConfig::default(), &Resources::default())
            .await
            .unwrap();
        assert_eq!(bk.snapshot_stats().calls, 15);
        assert_eq!(out.decision.complexity, ComplexityLevel::High);
        assert_eq!(out.decision.method, "ict");
        // 9 experts fielded 3 per team in roster order.
        assert_eq!(out.decision.votes.len(), 9);
        assert!(out
            .decision
            .votes
            .keys()
            .any(|k| k.starts_with("Initial Assessment Team/")));
    }

    #[tokio::test]
    async fn classification_retries_then_falls_back_to_moderate() {
        // Three unparseable classification replies, then recruitment fails
        // twice too: the run still completes on built-in defaults.
        let mut script: Vec<String> = vec![
            "hmm".into(),
            "it depends".into(),
            "cannot say".into(), // classify x3, all unparseable
            "no experts today".into(),
            "try again".into(), // recruit x2, unparseable
        ];
        // Default moderate roster has 3 internists; immediate consensus.
        script.extend([
            "**Answer:** (B)".to_string(),
            "**Answer:** (B)".to_string(),
            "**Answer:** (B)".to_string(),
            "**Answer:**(B)".to_string(),
        ]);
        let bk = ScriptedBackend::fifo(script);
        let out = run(&bk, &query(), &RunConfig::default(), &Resources::default())
            .await
            .unwrap();
        assert_eq!(out.decision.complexity, ComplexityLevel::Moderate);
        assert!(out.decision.flags.iter().any(|f| f == "complexity-fallback"));
        assert!(out.decision.flags.iter().any(|f| f == "recruit-default"));
        assert_eq!(bk.snapshot_stats().calls, 9);
    }

    #[tokio::test]
    async fn forced_solo_modes_never_classify_or_recruit() {
        let bk = ScriptedBackend::fifo(["**Answer:** (B)"]);
        let cfg = RunConfig { mode: "solo:cot".parse().unwrap(), ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 1);
        assert_eq!(out.decision.method, "solo:cot");
        assert_eq!(bk.request_tags(), vec!["solo"]);

        let bk = ScriptedBackend::fifo(["(A)", "(B)", "(B)", "(A)", "(B)"]);
        let cfg = RunConfig { mode: "solo:cot-sc".parse().unwrap(), ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 5, "k=5 self-consistency samples");
        assert_eq!(out.decision.answer.as_str(), "B");

        let bk = ScriptedBackend::fifo(["(A)", "(A)", "(B)", "**Answer:** (A)"]);
        let cfg = RunConfig { mode: "solo:er".parse().unwrap(), ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 4, "m=3 paths + 1 synthesis");
        assert_eq!(out.decision.answer.as_str(), "A");
    }

    #[tokio::test]
    async fn group_majority_is_recruit_plus_n_calls() {
        let bk = ScriptedBackend::fifo([
            recruit_reply_mdt(),
            "**Answer:** (B)".to_string(),
            "**Answer:** (C)".to_string(),
            "**Answer:** (B)".to_string(),
        ]);
        let cfg = RunConfig { mode: "group:majority".parse().unwrap(), ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(bk.snapshot_stats().calls, 4, "1 recruit + N=3 opinions");
        assert_eq!(out.decision.answer.as_str(), "B");
        assert_eq!(out.decision.method, "group:majority");
        assert_eq!(out.decision.votes.len(), 3);
    }

    #[tokio::test]
    async fn group_borda_uses_rankings() {
        // Rankings: B>A>C>D, B>C>A>D, A>B>C>D. Borda points (m=4):
        // B: 3+3+2=8, A: 2+1+3=6, C: 1+2+1=4, D: 0.
        let bk = ScriptedBackend::fifo([
            recruit_reply_mdt(),
            "My ranking: B > A > C > D".to_string(),
            "My ranking: B > C > A > D".to_string(),
            "My ranking: A > B > C > D".to_string(),
        ]);
        let cfg = RunConfig { mode: "group:borda".parse().unwrap(), ..RunConfig::default() };
        let out = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(out.decision.answer.as_str(), "B");
        assert_eq!(out.decision.method, "group:borda");
    }

    #[tokio::test]
    async fn run_level_skips_classification() {
        let bk = ScriptedBackend::fifo([
            "1. General Physician - front line",
            "**Answer:** (B)",
        ]);
        let out = run_level(
            &bk,
            &query(),
            ComplexityLevel::Low,
            &RunConfig::default(),
            &Resources::default(),
        )
        .await
        .unwrap();
        assert_eq!(bk.snapshot_stats().calls, 2, "recruit + answer, no classify");
        assert_eq!(out.decision.answer.as_str(), "B");
        assert!(!bk.request_tags().contains(&"classify".to_string()));
    }

    #[tokio::test]
    async fn retrieval_grounds_classification_and_first_prompts() {
        let index = crate::retrieval::index_texts(vec![
            (
                "cardio".to_string(),
                "rheumatic fever mitral valve stenosis damage".to_string(),
            ),
            ("unrelated".to_string(), "completely different words here".to_string()),
        ]);
        let resources = Resources { exemplars: vec![], retrieval: Some(index) };
        let bk = ScriptedBackend::fifo([
            "1) low",
            "1. General Physician - front line",
            "**Answer:** (B)",
        ]);
        let cfg = RunConfig { retrieval_k: 1, ..RunConfig::default() };
        let q = Query::new("q", "What does rheumatic fever do to the mitral valve?")
            .with_options([('A', "Nothing"), ('B', "Stenosis")]);
        run(&bk, &q, &cfg, &resources).await.unwrap();
        let reqs = bk.requests();
        assert!(reqs[0].messages[0].text.starts_with("### Reference knowledge"));
        assert!(!reqs[1].messages[0].text.contains("Reference knowledge"), "recruiter ungrounded");
        assert!(reqs[2].messages[0].text.starts_with("### Reference knowledge"));
    }

    #[tokio::test]
    async fn stats_are_deltas_not_totals() {
        let bk = ScriptedBackend::fifo([
            "**Answer:** (B)",
            "**Answer:** (C)",
        ]);
        let cfg = RunConfig { mode: "solo:cot".parse().unwrap(), ..RunConfig::default() };
        let first = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        let second = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap();
        assert_eq!(first.decision.stats.calls, 1);
        assert_eq!(second.decision.stats.calls, 1, "second run counts only itself");
    }

    #[tokio::test]
    async fn invalid_config_is_rejected_before_any_call() {
        let bk = ScriptedBackend::fifo(["never used"]);
        let cfg = RunConfig { turns: 0, ..RunConfig::default() };
        let err = run(&bk, &query(), &cfg, &Resources::default()).await.unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(bk.snapshot_stats().calls, 0);
    }
}
