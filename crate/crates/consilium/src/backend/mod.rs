//! Chat-completion backends: a deterministic scripted backend for tests and
//! offline benchmarks, a live HTTP backend, plus caching and record/replay
//! wrappers. All backends share one trait and one usage-accounting scheme.

use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{Attachment, CallStats};

mod cache;
mod http;
mod scripted;
mod session;

pub use cache::CachedBackend;
pub use http::{HttpBackend, HttpConfig, ModelPrice, PriceTable};
pub use scripted::{ScriptEntry, ScriptedBackend, ScriptedScript};
pub use session::{ReplayBackend, RecordingBackend, SessionEntry};

// ---- Requests and responses ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgRole {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: MsgRole,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<Attachment>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: MsgRole::User, text: text.into(), attachment: None }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: MsgRole::Assistant, text: text.into(), attachment: None }
    }
}

/// One completion request. `tag` labels the pipeline step for bookkeeping
/// and scripted matching; it is excluded from cache keys and request hashes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tag: String,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user_text: impl Into<String>) -> Self {
        ChatRequest {
            system: system.into(),
            messages: vec![ChatMessage::user(user_text)],
            temperature: 0.0,
            max_tokens: 1024,
            seed: None,
            tag: String::new(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_attachment(mut self, att: Attachment) -> Self {
        if let Some(last) = self.messages.last_mut() {
            last.attachment = Some(att);
        }
        self
    }

    /// Unicode scalar count of everything the model reads.
    pub fn prompt_chars(&self) -> u64 {
        let mut n = self.system.chars().count() as u64;
        for m in &self.messages {
            n += m.text.chars().count() as u64;
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub model: String,
    pub from_cache: bool,
}

// ---- Errors ----

#[derive(Debug, Error)]
pub enum BackendError {
    /// The script ran out of responses (strict-FIFO exhaustion).
    #[error("scripted backend exhausted after {served} responses (tag '{tag}')")]
    ScriptExhausted { served: usize, tag: String },

    /// No script entry matched the request.
    #[error("no script entry matched request with tag '{tag}'")]
    ScriptUnmatched { tag: String },

    /// The server rejected the request (4xx); never retried.
    #[error("request rejected with status {status}: {body}")]
    RequestRejected { status: u16, body: String },

    /// Transport failures and 5xx after the retry budget is spent.
    #[error("backend unavailable after {attempts} attempts: {message}")]
    Unavailable { attempts: u32, message: String },

    /// Replay had no recording for this request.
    #[error("replay miss: no recorded response for request hash {hash}")]
    ReplayMiss { hash: String },

    #[error("malformed backend payload: {0}")]
    Payload(String),

    #[error("session file error: {0}")]
    Session(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---- The trait ----

/// A chat-completion endpoint. Implementations must tolerate concurrent
/// `complete` calls from many tasks.
#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError>;

    /// Monotonic usage counters; callers snapshot before and after a run
    /// and diff with [`CallStats::since`].
    fn snapshot_stats(&self) -> CallStats;

    /// Identity of the endpoint + model, folded into cache keys so cached
    /// responses never leak across backends.
    fn fingerprint(&self) -> String;

    /// True when identical requests always yield identical responses
    /// (scripted, replay). The harness zeroes per-item wall-clock fields
    /// for deterministic backends so result files are byte-reproducible.
    fn deterministic(&self) -> bool {
        false
    }
}

// Boxed backends forward everything, so wrapper layers (cache, recorder)
// can be stacked at runtime from configuration.
#[async_trait]
impl ChatBackend for Box<dyn ChatBackend> {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        (**self).complete(req).await
    }

    fn snapshot_stats(&self) -> CallStats {
        (**self).snapshot_stats()
    }

    fn fingerprint(&self) -> String {
        (**self).fingerprint()
    }

    fn deterministic(&self) -> bool {
        (**self).deterministic()
    }
}

/// Issue several requests and join the results in request order.
///
/// Futures are polled in submission order, so with a non-yielding backend
/// (scripted/replay) strict-FIFO scripts pair with requests in the order
/// given here; live backends overlap on I/O.
pub async fn complete_all(
    backend: &dyn ChatBackend,
    reqs: &[ChatRequest],
) -> Vec<Result<ChatResponse, BackendError>> {
    futures::future::join_all(reqs.iter().map(|r| backend.complete(r))).await
}

// ---- Hashing ----

/// Stable hash of a request's content: system, messages (role, text,
/// attachment identity), temperature and seed. Excludes `tag` and
/// `max_tokens`. Used to key session recordings.
pub fn request_hash(req: &ChatRequest) -> String {
    let mut h = Sha256::new();
    h.update(b"system\x1f");
    h.update(req.system.as_bytes());
    for m in &req.messages {
        h.update(b"\x1emsg\x1f");
        h.update(match m.role {
            MsgRole::User => b"user".as_slice(),
            MsgRole::Assistant => b"assistant".as_slice(),
        });
        h.update(b"\x1f");
        h.update(m.text.as_bytes());
        if let Some(att) = &m.attachment {
            h.update(b"\x1f");
            h.update(att.stable_id().as_bytes());
        }
    }
    h.update(b"\x1etemp\x1f");
    h.update(format!("{:?}", req.temperature).as_bytes());
    h.update(b"\x1eseed\x1f");
    h.update(format!("{:?}", req.seed).as_bytes());
    hex::encode(h.finalize())
}

/// Cache key: the request hash widened with the backend fingerprint
/// (endpoint id + model name).
pub fn cache_key(fingerprint: &str, req: &ChatRequest) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(b"\x1f");
    h.update(request_hash(req).as_bytes());
    hex::encode(h.finalize())
}

// ---- Shared accounting ----

/// Interior-mutable [`CallStats`] shared by backend implementations.
#[derive(Debug, Default)]
pub(crate) struct StatsCell(Mutex<CallStats>);

impl StatsCell {
    pub fn record(&self, prompt_chars: u64, completion_chars: u64, cost: f64) {
        let mut s = self.0.lock().unwrap();
        s.calls += 1;
        s.prompt_chars += prompt_chars;
        s.completion_chars += completion_chars;
        s.estimated_cost += cost;
    }

    pub fn snapshot(&self) -> CallStats {
        *self.0.lock().unwrap()
    }
}

/// Estimated token count: one token per 4 chars, rounded up.
pub fn estimate_tokens(chars: u64) -> u64 {
    chars.div_ceil(4)
}
