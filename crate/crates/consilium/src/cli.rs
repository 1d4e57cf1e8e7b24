//! Command-line interface: complexity checks, single-query runs, batch
//! evaluation, report rendering and session replay.
//!
//! The binary resolves settings in three layers: built-in defaults, then an
//! optional TOML config file (`--config`), then per-invocation flags. API
//! keys are never accepted as flags or config values — the HTTP backend
//! reads them from the environment variable named in its configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::backend::{ChatBackend, RecordingBackend, ReplayBackend, ScriptedBackend};
use crate::config::FileConfig;
use crate::error::{Error, Result};
use crate::harness::{self, EvalConfig, ReportFormat};
use crate::orchestrator::{self, Resources, RunConfig};
use crate::retrieval::index_corpus;
use crate::solo::load_exemplars;
use crate::types::{Query, Transcript};

/// Adaptive multi-agent decision engine over a chat backend.
#[derive(Debug, Parser)]
#[command(
    name = "consilium",
    version,
    about = "Routes each query to a solo expert, a deliberating team, or a tiered \
             team pipeline based on an automated complexity check."
)]
pub struct Cli {
    /// TOML configuration file ([engine], [backend], [paths] sections).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Backend override: `scripted:<script.json>`, `replay:<session.jsonl>`,
    /// or `http`.
    #[arg(long, global = true, value_name = "SPEC")]
    pub backend: Option<String>,

    /// Append every backend exchange to this session file (JSONL), which
    /// `replay` or `--backend replay:<file>` can later re-serve.
    #[arg(long, global = true, value_name = "FILE")]
    pub record: Option<PathBuf>,

    /// Log filter, e.g. `info` or `consilium=debug`.
    #[arg(long, global = true, value_name = "FILTER", default_value = "warn")]
    pub log: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Assess a query's complexity tier without answering it.
    Classify {
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Answer one query end to end and print the decision as JSON.
    Run {
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// Also write the full interaction transcript to this JSON file.
        #[arg(long, value_name = "FILE")]
        transcript: Option<PathBuf>,
    },
    /// Evaluate a JSONL dataset; writes results.jsonl / summary.json.
    Eval {
        /// Dataset file, one query object per line.
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// Output directory for results, summary and transcripts.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Evaluate at most this many queries (seeded sample).
        #[arg(long, value_name = "N")]
        limit: Option<usize>,
        /// Seed for the subset sample drawn by --limit.
        #[arg(long, value_name = "SEED", default_value_t = 0)]
        sample_seed: u64,
        /// Queries evaluated concurrently.
        #[arg(long, value_name = "N", default_value_t = 4)]
        concurrency: usize,
        /// Skip queries already present in results.jsonl.
        #[arg(long)]
        resume: bool,
        /// Write transcripts/<id>.json per evaluated query.
        #[arg(long)]
        transcripts: bool,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Render an evaluation directory as CSV or JSON.
    Report {
        /// Evaluation output directory (as passed to `eval --out`).
        #[arg(long, value_name = "DIR")]
        dir: PathBuf,
        /// Output format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write the report here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Re-run a query against a recorded session file.
    Replay {
        /// Session file produced by --record.
        #[arg(long, value_name = "FILE")]
        session: PathBuf,
        #[command(flatten)]
        query: QueryArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

// ---------------------------------------------------------------------------
// Shared argument groups
// ---------------------------------------------------------------------------

/// One query, given either as a JSON file or inline.
#[derive(Debug, Args, Default)]
pub struct QueryArgs {
    /// Query as a JSON file (same schema as one dataset line).
    #[arg(long, value_name = "FILE", conflicts_with = "question")]
    pub file: Option<PathBuf>,

    /// Question text given inline.
    #[arg(long, value_name = "TEXT")]
    pub question: Option<String>,

    /// Answer option as `LETTER=text`; repeat once per option.
    #[arg(long = "option", value_name = "LETTER=TEXT")]
    pub options: Vec<String>,

    /// Identifier used in transcripts and session tags.
    #[arg(long, value_name = "ID", default_value = "adhoc")]
    pub id: String,

    /// Background context attached to the query.
    #[arg(long, value_name = "TEXT")]
    pub context: Option<String>,
}

impl QueryArgs {
    pub fn build(&self) -> Result<Query> {
        if let Some(path) = &self.file {
            let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let q: Query = serde_json::from_str(&raw)?;
            return Ok(q);
        }
        let Some(question) = &self.question else {
            return Err(Error::Config(
                "provide a query with --file <query.json> or --question <text>".into(),
            ));
        };
        let mut options = BTreeMap::new();
        for spec in &self.options {
            let (letter, text) = spec.split_once('=').ok_or_else(|| {
                Error::Config(format!("--option '{spec}' is not in LETTER=text form"))
            })?;
            let trimmed = letter.trim();
            let mut chars = trimmed.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::Config(format!(
                    "--option key '{trimmed}' must be a single letter"
                )));
            };
            let c = c.to_ascii_uppercase();
            if !c.is_ascii_uppercase() {
                return Err(Error::Config(format!(
                    "--option key '{trimmed}' must be a letter A-Z"
                )));
            }
            options.insert(c, text.trim().to_string());
        }
        let mut q = Query::new(self.id.clone(), question.clone());
        q.options = options;
        q.context = self.context.clone();
        Ok(q)
    }
}

/// Engine overrides layered on top of the config file / defaults.
#[derive(Debug, Args, Default)]
pub struct EngineArgs {
    /// Processing mode: adaptive, solo:<direct|cot|cot_sc|er|medprompt>,
    /// mdt, ict, or group:<majority|weighted|borda>.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,

    /// Base RNG seed; every backend call derives a distinct seed from it.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Maximum deliberation rounds after the initial opinions.
    #[arg(long, value_name = "N")]
    pub rounds: Option<usize>,

    /// Speaking turns per deliberation round.
    #[arg(long, value_name = "N")]
    pub turns: Option<usize>,

    /// Experts recruited per team.
    #[arg(long, value_name = "N")]
    pub n_max: Option<usize>,

    /// Modal stance share that counts as consensus (1.0 = unanimity).
    #[arg(long, value_name = "SHARE")]
    pub threshold: Option<f64>,

    /// Disable moderator feedback between non-converged rounds.
    #[arg(long)]
    pub no_review: bool,

    /// Temperature for single deterministic calls.
    #[arg(long, value_name = "T")]
    pub temperature: Option<f64>,

    /// Temperature for sampled calls and discussion turns.
    #[arg(long, value_name = "T")]
    pub sample_temperature: Option<f64>,

    /// Completion token budget per call.
    #[arg(long, value_name = "N")]
    pub max_tokens: Option<u32>,

    /// Sampled chains for solo:cot_sc.
    #[arg(long, value_name = "N")]
    pub sc_paths: Option<usize>,

    /// Reasoning paths for solo:er.
    #[arg(long, value_name = "N")]
    pub er_paths: Option<usize>,

    /// Choice-shuffled samples for solo:medprompt.
    #[arg(long, value_name = "N")]
    pub mp_samples: Option<usize>,

    /// Few-shot exemplars per answer prompt.
    #[arg(long, value_name = "N")]
    pub shots: Option<usize>,

    /// Reference snippets prepended to first-contact prompts
    /// (0 disables retrieval).
    #[arg(long, value_name = "K")]
    pub retrieval_k: Option<usize>,

    /// Decide via a small temperature ensemble instead of one call.
    #[arg(long)]
    pub ensemble: bool,

    /// Few-shot exemplar file (JSON array), overriding [paths].exemplars.
    #[arg(long, value_name = "FILE")]
    pub exemplars: Option<PathBuf>,

    /// Reference document directory, overriding [paths].corpus.
    #[arg(long, value_name = "DIR")]
    pub corpus: Option<PathBuf>,
}

impl EngineArgs {
    /// Applies flag overrides onto a base configuration.
    pub fn apply(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(mode) = &self.mode {
            cfg.mode = mode.parse()?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.rounds {
            cfg.rounds = v;
        }
        if let Some(v) = self.turns {
            cfg.turns = v;
        }
        if let Some(v) = self.n_max {
            cfg.n_max = v;
        }
        if let Some(v) = self.threshold {
            cfg.consensus_threshold = v;
        }
        if self.no_review {
            cfg.review = false;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.sample_temperature {
            cfg.sample_temperature = v;
        }
        if let Some(v) = self.max_tokens {
            cfg.max_tokens = v;
        }
        if let Some(v) = self.sc_paths {
            cfg.sc_paths = v;
        }
        if let Some(v) = self.er_paths {
            cfg.er_paths = v;
        }
        if let Some(v) = self.mp_samples {
            cfg.mp_samples = v;
        }
        if let Some(v) = self.shots {
            cfg.shot_count = v;
        }
        if let Some(v) = self.retrieval_k {
            cfg.retrieval_k = v;
        }
        if self.ensemble {
            cfg.ensemble_decision = true;
        }
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Context assembly
// ---------------------------------------------------------------------------

/// Parses a `--backend` specifier into a live backend.
pub fn backend_from_spec(spec: &str) -> Result<Box<dyn ChatBackend>> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Box::new(ScriptedBackend::from_file(path)?));
    }
    if let Some(path) = spec.strip_prefix("replay:") {
        return Ok(Box::new(ReplayBackend::open(path)?));
    }
    if spec == "http" {
        let backend = crate::backend::HttpBackend::new(Default::default())?;
        return Ok(Box::new(backend));
    }
    Err(Error::Config(format!(
        "unknown backend spec '{spec}' (expected scripted:<file>, replay:<file>, or http)"
    )))
}

struct Context {
    run_cfg: RunConfig,
    resources: Resources,
    backend: Box<dyn ChatBackend>,
}

/// Global flags detached from the subcommand so replay can override the
/// backend spec without fighting the borrow on the parsed CLI.
struct GlobalOpts {
    config: Option<PathBuf>,
    backend: Option<String>,
    record: Option<PathBuf>,
}

fn build_context(globals: &GlobalOpts, engine: &EngineArgs) -> Result<Context> {
    let file_cfg = match &globals.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let run_cfg = engine.apply(file_cfg.engine.to_run_config()?)?;

    let mut resources = file_cfg.paths.load_resources()?;
    if let Some(path) = &engine.exemplars {
        resources.exemplars = load_exemplars(path)?;
    }
    if let Some(dir) = &engine.corpus {
        resources.retrieval = Some(index_corpus(dir)?);
    }

    let mut backend: Box<dyn ChatBackend> = match &globals.backend {
        Some(spec) => backend_from_spec(spec)?,
        None if globals.config.is_some() => file_cfg.backend.build()?,
        None => {
            return Err(Error::Config(
                "no backend configured: pass --backend scripted:<file>|replay:<file>|http \
                 or --config <file> with a [backend] section"
                    .into(),
            ))
        }
    };
    if let Some(path) = &globals.record {
        backend = Box::new(RecordingBackend::create(backend, path)?);
    }
    Ok(Context {
        run_cfg,
        resources,
        backend,
    })
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClassifyOutput {
    id: String,
    complexity: String,
    flags: Vec<String>,
    calls: u64,
}

#[derive(Serialize)]
struct TranscriptOutput<'a> {
    id: &'a str,
    decision: &'a crate::types::Decision,
    transcript: &'a Transcript,
}

/// Runs one parsed invocation to completion. Errors bubble up to `main`,
/// which maps them to exit code 2.
pub async fn execute(cli: Cli) -> Result<()> {
    let Cli {
        config,
        backend,
        record,
        log: _,
        command,
    } = cli;
    let globals = GlobalOpts {
        config,
        backend,
        record,
    };
    match command {
        Command::Classify { query, engine } => {
            let ctx = build_context(&globals, &engine)?;
            let q = query.build()?;
            let mut transcript = Transcript::default();
            let mut flags = Vec::new();
            let level = orchestrator::classify_complexity(
                ctx.backend.as_ref(),
                &q,
                &ctx.run_cfg,
                &ctx.resources,
                &mut transcript,
                &mut flags,
            )
            .await?;
            let out = ClassifyOutput {
                id: q.id.clone(),
                complexity: level.label().to_string(),
                flags,
                calls: ctx.backend.snapshot_stats().calls,
            };
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Run {
            query,
            engine,
            transcript,
        } => {
            let ctx = build_context(&globals, &engine)?;
            let q = query.build()?;
            let output =
                orchestrator::run(ctx.backend.as_ref(), &q, &ctx.run_cfg, &ctx.resources).await?;
            if let Some(path) = &transcript {
                let doc = TranscriptOutput {
                    id: &q.id,
                    decision: &output.decision,
                    transcript: &output.transcript,
                };
                let body = serde_json::to_string_pretty(&doc)?;
                std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))?;
            }
            println!("{}", serde_json::to_string_pretty(&output.decision)?);
        }
        Command::Eval {
            dataset,
            out,
            limit,
            sample_seed,
            concurrency,
            resume,
            transcripts,
            engine,
        } => {
            let ctx = build_context(&globals, &engine)?;
            let mut queries = harness::load_dataset(&dataset)?;
            if let Some(limit) = limit {
                queries = harness::sample_queries(queries, limit, sample_seed);
            }
            let eval_cfg = EvalConfig {
                concurrency,
                out_dir: out.clone(),
                resume,
                transcripts,
            };
            let summary = harness::run_eval(
                ctx.backend.as_ref(),
                &queries,
                &ctx.run_cfg,
                &ctx.resources,
                &eval_cfg,
            )
            .await?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Report { dir, format, out } => {
            let format: ReportFormat = format.parse()?;
            let report = harness::emit_report(&dir, format)?;
            match &out {
                Some(path) => {
                    std::fs::write(path, &report).map_err(|e| Error::io(path, e))?;
                }
                None => print!("{report}"),
            }
        }
        Command::Replay {
            session,
            query,
            engine,
        } => {
            // Replay ignores --backend and --record: the whole point is to
            // re-serve the recorded session, not to re-record it.
            let globals = GlobalOpts {
                config: globals.config,
                backend: Some(format!("replay:{}", session.display())),
                record: None,
            };
            let ctx = build_context(&globals, &engine)?;
            let q = query.build()?;
            let output =
                orchestrator::run(ctx.backend.as_ref(), &q, &ctx.run_cfg, &ctx.resources).await?;
            println!("{}", serde_json::to_string_pretty(&output.decision)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orchestrator::{GroupMethod, Mode, SoloStrategy};

    #[test]
    fn cli_shape_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_run_with_inline_options() {
        let cli = Cli::try_parse_from([
            "consilium",
            "--backend",
            "scripted:replies.json",
            "run",
            "--question",
            "Which option?",
            "--option",
            "A=first",
            "--option",
            "b=second",
            "--mode",
            "solo:cot",
            "--seed",
            "9",
        ])
        .unwrap();
        let Command::Run { query, engine, .. } = &cli.command else {
            panic!("expected run command");
        };
        let q = query.build().unwrap();
        assert_eq!(q.options.len(), 2);
        assert_eq!(q.options[&'B'], "second", "option keys are upcased");
        let cfg = engine.apply(RunConfig::default()).unwrap();
        assert_eq!(cfg.mode, Mode::Solo(SoloStrategy::Cot));
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.rounds, 3, "untouched fields keep defaults");
    }

    #[test]
    fn rejects_malformed_option_spec() {
        let args = QueryArgs {
            question: Some("Q?".into()),
            options: vec!["Afirst".into()],
            ..QueryArgs::default()
        };
        assert!(args.build().is_err());
        let args = QueryArgs {
            question: Some("Q?".into()),
            options: vec!["AB=text".into()],
            ..QueryArgs::default()
        };
        assert!(args.build().is_err());
    }

    #[test]
    fn query_requires_file_or_question() {
        let err = QueryArgs::default().build().unwrap_err();
        assert!(err.to_string().contains("--file"), "{err}");
    }

    #[test]
    fn engine_overrides_apply_on_top_of_defaults() {
        let engine = EngineArgs {
            mode: Some("group:borda".into()),
            threshold: Some(0.75),
            no_review: true,
            retrieval_k: Some(2),
            ..EngineArgs::default()
        };
        let cfg = engine.apply(RunConfig::default()).unwrap();
        assert_eq!(cfg.mode, Mode::Group(GroupMethod::Borda));
        assert_eq!(cfg.consensus_threshold, 0.75);
        assert!(!cfg.review);
        assert_eq!(cfg.retrieval_k, 2);
        let bad = EngineArgs {
            mode: Some("psychic".into()),
            ..EngineArgs::default()
        };
        assert!(bad.apply(RunConfig::default()).is_err());
    }

    #[test]
    fn backend_spec_parsing_reports_unknown_kinds() {
        assert!(backend_from_spec("carrier-pigeon").is_err());
        // Scripted spec with a missing file surfaces an io-ish error rather
        // than a parse error.
        assert!(backend_from_spec("scripted:/definitely/not/here.json").is_err());
    }
}
