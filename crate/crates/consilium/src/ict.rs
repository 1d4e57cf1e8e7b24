//! Tiered team pipeline for the hardest queries: ordered teams each write
//! an internal set of assessments, their lead synthesizes a report, and
//! every later team reads the reports produced before it. The final
//! decision is made over the whole report chain.

use std::collections::BTreeMap;

use crate::aggregate::{final_decide, DecideConfig, Evidence};
use crate::backend::{complete_all, ChatBackend, ChatRequest};
use crate::error::{Error, Result};
use crate::parsers::extract_answer;
use crate::prompts;
use crate::types::{
    CanonicalAnswer, EventKind, Query, Recipient, Report, TeamSpec, Transcript, VoteRecord,
};

/// Name the first team in the pipeline must carry.
pub const INITIAL_TEAM_NAME: &str = "Initial Assessment Team";
/// Name the last team in the pipeline must carry.
pub const FINAL_TEAM_NAME: &str = "Final Review & Decision Team";

// ---- Configuration ----

#[derive(Debug, Clone)]
pub struct IctConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
    pub decision: DecideConfig,
    /// Optional grounding block prepended to each expert's first prompt.
    pub grounding: Option<String>,
}

impl Default for IctConfig {
    fn default() -> Self {
        IctConfig {
            temperature: 0.7,
            max_tokens: 1024,
            seed: 0,
            decision: DecideConfig::default(),
            grounding: None,
        }
    }
}

/// What the pipeline produced.
#[derive(Debug, Clone)]
pub struct IctOutcome {
    pub answer: CanonicalAnswer,
    /// One report per team, in pipeline order.
    pub reports: Vec<Report>,
    pub transcript: Transcript,
    /// Extracted assessment answer per expert, keyed `"{team}/{agent id}"`.
    pub votes: BTreeMap<String, VoteRecord>,
    pub flags: Vec<String>,
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn bump_seed(seq: &mut u64, base: u64) -> u64 {
    let s = base.wrapping_add(*seq);
    *seq += 1;
    s
}

// ---- One team ----

/// Run one team: an assessment call per member (the lead included), then
/// the lead's synthesis call. Exactly `members.len() + 1` backend calls.
#[allow(clippy::too_many_arguments)]
async fn generate_report(
    backend: &dyn ChatBackend,
    q: &Query,
    team: &TeamSpec,
    prior_reports: &[Report],
    cfg: &IctConfig,
    transcript: &mut Transcript,
    call_seq: &mut u64,
    votes: &mut BTreeMap<String, VoteRecord>,
) -> Result<Report> {
    let question = prompts::question_block(q);
    let team_slug = slug(&team.name);
    let keys = q.answer_keys();

    let mut assess_prompt = prompts::assessment(&question, prior_reports);
    if let Some(g) = &cfg.grounding {
        if !g.is_empty() {
            assess_prompt = format!("{g}{assess_prompt}");
        }
    }
    let reqs: Vec<ChatRequest> = team
        .members
        .iter()
        .map(|m| {
            ChatRequest::new(prompts::agent_init(m), assess_prompt.clone())
                .with_tag(format!("assess:{team_slug}:{}", m.id))
                .with_temperature(cfg.temperature)
                .with_max_tokens(cfg.max_tokens)
                .with_seed(bump_seed(call_seq, cfg.seed))
        })
        .collect();

    let mut assessments: Vec<(String, String)> = Vec::new();
    for (i, resp) in complete_all(backend, &reqs).await.into_iter().enumerate() {
        let resp = resp?;
        let member = &team.members[i];
        let parsed = extract_answer(&resp.text, &keys, &q.options);
        if let Some(a) = &parsed.value {
            votes.insert(
                format!("{}/{}", team.name, member.id),
                VoteRecord { answer: a.clone(), weight: member.weight },
            );
        }
        transcript.push(
            team.position,
            1,
            member.role.clone(),
            Recipient::All,
            EventKind::Assessment,
            resp.text.clone(),
            parsed.value,
            Some(parsed.confidence),
        );
        assessments.push((member.role.clone(), resp.text));
    }

    let lead = team
        .members
        .iter()
        .find(|m| m.id == team.lead)
        .ok_or_else(|| {
            Error::Structural(format!("team '{}' lead '{}' is not a member", team.name, team.lead))
        })?;
    let syn_req = ChatRequest::new(
        prompts::agent_init(lead),
        prompts::report_synthesis(&question, &assessments),
    )
    .with_tag(format!("report:{team_slug}"))
    .with_temperature(cfg.temperature)
    .with_max_tokens(cfg.max_tokens)
    .with_seed(bump_seed(call_seq, cfg.seed));
    let syn = backend.complete(&syn_req).await?;
    transcript.push(
        team.position,
        2,
        lead.role.clone(),
        Recipient::All,
        EventKind::Report,
        syn.text.clone(),
        None,
        None,
    );

    Ok(Report {
        team_name: team.name.clone(),
        body: syn.text,
        produced_by: lead.role.clone(),
        consumed_reports: prior_reports.iter().map(|r| r.team_name.clone()).collect(),
    })
}

// ---- The pipeline ----

/// Run the whole pipeline in team-position order and decide over the
/// report chain. Backend calls: `sum(|team| + 1)` for the teams plus the
/// decision call(s).
pub async fn run_ict(
    backend: &dyn ChatBackend,
    q: &Query,
    teams: &[TeamSpec],
    cfg: &IctConfig,
) -> Result<IctOutcome> {
    if teams.is_empty() {
        return Err(Error::Structural("the tiered pipeline needs at least one team".into()));
    }
    let mut ordered: Vec<&TeamSpec> = teams.iter().collect();
    ordered.sort_by_key(|t| t.position);

    let mut transcript = Transcript::default();
    let mut votes = BTreeMap::new();
    let mut reports: Vec<Report> = Vec::new();
    let mut call_seq = 0u64;
    for team in &ordered {
        let report = generate_report(
            backend,
            q,
            team,
            &reports,
            cfg,
            &mut transcript,
            &mut call_seq,
            &mut votes,
        )
        .await?;
        reports.push(report);
    }

    let decided =
        final_decide(backend, q, Evidence::Reports { reports: &reports }, &cfg.decision).await?;
    let last_round = ordered.last().map(|t| t.position).unwrap_or(0);
    for (tag, raw) in &decided.raws {
        transcript.push(
            last_round,
            3,
            format!("Decider[{tag}]"),
            Recipient::All,
            EventKind::Decision,
            raw.clone(),
            Some(decided.answer.clone()),
            None,
        );
    }

    Ok(IctOutcome {
        answer: decided.answer,
        reports,
        transcript,
        votes,
        flags: decided.flags,
    })
}
