//! TOML run configuration: engine knobs, backend selection and resource
//! paths. A config file maps onto a [`RunConfig`], a backend stack and a
//! [`Resources`] bundle; every field has a sane default so a minimal file
//! (or none at all) still runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backend::{
    CachedBackend, ChatBackend, HttpBackend, HttpConfig, PriceTable, RecordingBackend,
    ReplayBackend, ScriptedBackend,
};
use crate::error::{Error, Result};
use crate::orchestrator::{Resources, RunConfig};
use crate::retrieval::index_corpus;
use crate::solo::load_exemplars;

// ---- Sections ----

/// Top-level config file shape.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub engine: EngineSection,
    pub backend: BackendSection,
    pub paths: PathsSection,
}

/// Mirrors [`RunConfig`]; defaults match `RunConfig::default()`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub mode: String,
    pub rounds: usize,
    pub turns: usize,
    pub n_max: usize,
    pub consensus_threshold: f64,
    pub review: bool,
    pub sc_paths: usize,
    pub er_paths: usize,
    pub mp_samples: usize,
    pub shot_count: usize,
    pub temperature: f64,
    pub sample_temperature: f64,
    pub max_tokens: u32,
    pub max_tokens_by_stage: BTreeMap<String, u32>,
    pub seed: u64,
    pub ensemble_decision: bool,
    pub ensemble_temps: Vec<f64>,
    pub retrieval_k: usize,
}

impl Default for EngineSection {
    fn default() -> Self {
        let r = RunConfig::default();
        EngineSection {
            mode: r.mode.to_string(),
            rounds: r.rounds,
            turns: r.turns,
            n_max: r.n_max,
            consensus_threshold: r.consensus_threshold,
            review: r.review,
            sc_paths: r.sc_paths,
            er_paths: r.er_paths,
            mp_samples: r.mp_samples,
            shot_count: r.shot_count,
            temperature: r.temperature,
            sample_temperature: r.sample_temperature,
            max_tokens: r.max_tokens,
            max_tokens_by_stage: r.max_tokens_by_stage,
            seed: r.seed,
            ensemble_decision: r.ensemble_decision,
            ensemble_temps: r.ensemble_temps,
            retrieval_k: r.retrieval_k,
        }
    }
}

impl EngineSection {
    pub fn to_run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            mode: self.mode.parse()?,
            rounds: self.rounds,
            turns: self.turns,
            n_max: self.n_max,
            consensus_threshold: self.consensus_threshold,
            review: self.review,
            sc_paths: self.sc_paths,
            er_paths: self.er_paths,
            mp_samples: self.mp_samples,
            shot_count: self.shot_count,
            temperature: self.temperature,
            sample_temperature: self.sample_temperature,
            max_tokens: self.max_tokens,
            max_tokens_by_stage: self.max_tokens_by_stage.clone(),
            seed: self.seed,
            ensemble_decision: self.ensemble_decision,
            ensemble_temps: self.ensemble_temps.clone(),
            retrieval_k: self.retrieval_k,
        })
    }
}

/// Which backend to talk to and how to wrap it. API keys are read from
/// the environment variable named by `api_key_env`, never from the file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// "scripted", "replay" or "http".
    pub kind: String,
    /// Script file (scripted) or session file (replay).
    pub path: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub requests_per_minute: Option<u32>,
    /// USD per 1k tokens, keyed by model name.
    pub pricing: BTreeMap<String, crate::backend::ModelPrice>,
    /// In-memory response cache for identical requests.
    pub cache: bool,
    /// Persistent cache directory (implies caching).
    pub cache_dir: Option<PathBuf>,
    /// Append every completed call to this session file.
    pub record_to: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: "scripted".into(),
            path: None,
            base_url: None,
            model: None,
            api_key_env: None,
            timeout_secs: None,
            requests_per_minute: None,
            pricing: BTreeMap::new(),
            cache: false,
            cache_dir: None,
            record_to: None,
        }
    }
}

impl BackendSection {
    /// Build the configured backend with recording and caching layered on
    /// (recorder inside the cache, so cache hits are not re-recorded).
    pub fn build(&self) -> Result<Box<dyn ChatBackend>> {
        let mut backend: Box<dyn ChatBackend> = match self.kind.as_str() {
            "scripted" => {
                let path = self.path.as_ref().ok_or_else(|| {
                    Error::Config("backend.path is required for the scripted backend".into())
                })?;
                Box::new(ScriptedBackend::from_file(path)?)
            }
            "replay" => {
                let path = self.path.as_ref().ok_or_else(|| {
                    Error::Config("backend.path is required for the replay backend".into())
                })?;
                Box::new(ReplayBackend::open(path)?)
            }
            "http" => {
                let defaults = HttpConfig::default();
                let cfg = HttpConfig {
                    base_url: self.base_url.clone().unwrap_or(defaults.base_url),
                    model: self.model.clone().unwrap_or(defaults.model),
                    api_key_env: self.api_key_env.clone().unwrap_or(defaults.api_key_env),
                    timeout_secs: self.timeout_secs.unwrap_or(defaults.timeout_secs),
                    requests_per_minute: self.requests_per_minute,
                    pricing: PriceTable(self.pricing.clone()),
                    ..defaults
                };
                Box::new(HttpBackend::new(cfg)?)
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown backend kind '{other}' (expected scripted, replay or http)"
                )))
            }
        };
        if let Some(path) = &self.record_to {
            backend = Box::new(RecordingBackend::create(backend, path)?);
        }
        if let Some(dir) = &self.cache_dir {
            backend = Box::new(CachedBackend::with_dir(backend, dir.clone()));
        } else if self.cache {
            backend = Box::new(CachedBackend::new(backend));
        }
        Ok(backend)
    }
}

/// Optional resource files.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// JSON array of few-shot exemplars.
    pub exemplars: Option<PathBuf>,
    /// Directory of `*.txt` reference documents.
    pub corpus: Option<PathBuf>,
}

impl PathsSection {
    pub fn load_resources(&self) -> Result<Resources> {
        let exemplars = match &self.exemplars {
            Some(p) => load_exemplars(p)?,
            None => Vec::new(),
        };
        let retrieval = match &self.corpus {
            Some(dir) => Some(index_corpus(dir)?),
            None => None,
        };
        Ok(Resources { exemplars, retrieval })
    }
}

// ---- Loading ----

impl FileConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<FileConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_reference_defaults() {
        let fc: FileConfig = toml::from_str("").unwrap();
        let rc = fc.engine.to_run_config().unwrap();
        let d = RunConfig::default();
        assert_eq!(rc.rounds, d.rounds);
        assert_eq!(rc.turns, d.turns);
        assert_eq!(rc.n_max, d.n_max);
        assert_eq!(rc.consensus_threshold, d.consensus_threshold);
        assert_eq!(rc.sc_paths, 5);
        assert_eq!(rc.er_paths, 3);
        assert_eq!(rc.mp_samples, 5);
        assert_eq!(fc.backend.kind, "scripted");
    }

    #[test]
    fn full_file_round_trips() {
        let text = r#"
[engine]
mode = "adaptive"
rounds = 2
turns = 1
n_max = 4
consensus_threshold = 0.75
review = false
seed = 42
retrieval_k = 2

[engine.max_tokens_by_stage]
classify = 64
decision = 256

[backend]
kind = "http"
model = "gpt-4o-mini"
api_key_env = "MY_KEY"
requests_per_minute = 30
cache = true

[backend.pricing."gpt-4o-mini"]
prompt_per_1k = 0.00015
completion_per_1k = 0.0006

[paths]
exemplars = "assets/exemplars.json"
corpus = "assets/corpus"
"#;
        let fc: FileConfig = toml::from_str(text).unwrap();
        let rc = fc.engine.to_run_config().unwrap();
        assert_eq!(rc.rounds, 2);
        assert_eq!(rc.consensus_threshold, 0.75);
        assert!(!rc.review);
        assert_eq!(rc.max_tokens_by_stage["classify"], 64);
        assert_eq!(fc.backend.pricing["gpt-4o-mini"].prompt_per_1k, 0.00015);
        assert_eq!(fc.paths.corpus.as_ref().unwrap().to_str().unwrap(), "assets/corpus");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<FileConfig>("[engine]\nround_count = 3\n").unwrap_err();
        assert!(err.to_string().contains("round_count"));
    }

    #[test]
    fn bad_mode_string_is_a_config_error() {
        let fc: FileConfig = toml::from_str("[engine]\nmode = \"committee\"\n").unwrap();
        assert!(fc.engine.to_run_config().is_err());
    }

    #[test]
    fn unknown_backend_kind_fails_to_build() {
        let fc: FileConfig = toml::from_str("[backend]\nkind = \"carrier-pigeon\"\n").unwrap();
        assert!(fc.backend.build().is_err());
    }

    #[test]
    fn scripted_backend_builds_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("script.json");
        std::fs::write(
            &script,
            r#"{"strict_fifo": true, "entries": [{"response": "ok"}]}"#,
        )
        .unwrap();
        let fc: FileConfig = toml::from_str(&format!(
            "[backend]\nkind = \"scripted\"\npath = \"{}\"\n",
            script.display()
        ))
        .unwrap();
        let bk = fc.backend.build().unwrap();
        assert_eq!(bk.fingerprint(), "scripted");
        assert!(bk.deterministic());
    }

    #[test]
    fn http_backend_requires_the_env_var() {
        let fc: FileConfig = toml::from_str(
            "[backend]\nkind = \"http\"\napi_key_env = \"DEFINITELY_NOT_SET_KEY\"\n",
        )
        .unwrap();
        assert!(fc.backend.build().is_err());
    }
}
