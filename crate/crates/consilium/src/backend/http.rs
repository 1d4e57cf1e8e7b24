//! Live chat-completions backend over HTTP. Speaks the prevailing chat API
//! shape (system + messages, temperature, max_tokens; images as data-URL
//! content parts), retries transport errors and 5xx with exponential
//! backoff, never retries 4xx, and reads its API key from an env var only.

use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::Mutex;
use tokio::time::Instant;

use crate::types::{Attachment, CallStats};

use super::{estimate_tokens, BackendError, ChatBackend, ChatRequest, ChatResponse, MsgRole, StatsCell};

// ---- Pricing ----

/// USD per 1000 estimated tokens for one model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

/// Price table keyed by model name. Unknown models cost 0 (and are logged).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable(pub BTreeMap<String, ModelPrice>);

impl PriceTable {
    /// Estimated USD for a call: chars are converted to tokens at 4 chars
    /// per token, rounded up.
    pub fn cost(&self, model: &str, prompt_chars: u64, completion_chars: u64) -> f64 {
        match self.0.get(model) {
            Some(p) => {
                let pt = estimate_tokens(prompt_chars) as f64;
                let ct = estimate_tokens(completion_chars) as f64;
                pt / 1000.0 * p.prompt_per_1k + ct / 1000.0 * p.completion_per_1k
            }
            None => 0.0,
        }
    }
}

// ---- Config ----

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in config files or CLI arguments.
    pub api_key_env: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Total attempts per request (first try included).
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    /// First backoff delay; doubles per retry.
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    /// Optional requests-per-minute throttle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub pricing: PriceTable,
}

fn default_timeout_secs() -> u64 {
    120
}
fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "CHAT_API_KEY".into(),
            timeout_secs: default_timeout_secs(),
            max_attempts: default_max_attempts(),
            initial_backoff_ms: default_backoff_ms(),
            requests_per_minute: None,
            pricing: PriceTable::default(),
        }
    }
}

// ---- Backend ----

pub struct HttpBackend {
    cfg: HttpConfig,
    api_key: String,
    client: reqwest::Client,
    stats: StatsCell,
    /// Earliest instant the next request may start (rpm throttle).
    next_slot: Mutex<Instant>,
}

impl HttpBackend {
    /// Fails fast when the key env var is unset so misconfiguration is
    /// caught before the first query, not mid-run.
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&cfg.api_key_env).map_err(|_| BackendError::Payload(
            format!("environment variable {} is not set", cfg.api_key_env),
        ))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Payload(e.to_string()))?;
        Ok(HttpBackend {
            cfg,
            api_key,
            client,
            stats: StatsCell::default(),
            next_slot: Mutex::new(Instant::now()),
        })
    }

    async fn throttle(&self) {
        let Some(rpm) = self.cfg.requests_per_minute else { return };
        if rpm == 0 {
            return;
        }
        let spacing = Duration::from_secs_f64(60.0 / rpm as f64);
        let mut slot = self.next_slot.lock().await;
        let now = Instant::now();
        let start = if *slot > now { *slot } else { now };
        *slot = start + spacing;
        drop(slot);
        tokio::time::sleep_until(start).await;
    }

    fn body_for(&self, req: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::with_capacity(req.messages.len() + 1);
        if !req.system.is_empty() {
            messages.push(json!({"role": "system", "content": req.system}));
        }
        for m in &req.messages {
            let role = match m.role {
                MsgRole::User => "user",
                MsgRole::Assistant => "assistant",
            };
            match &m.attachment {
                None => messages.push(json!({"role": role, "content": m.text})),
                Some(att) => {
                    let url = attachment_data_url(att);
                    messages.push(json!({
                        "role": role,
                        "content": [
                            {"type": "text", "text": m.text},
                            {"type": "image_url", "image_url": {"url": url}},
                        ],
                    }));
                }
            }
        }
        let mut body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    async fn attempt(&self, body: &serde_json::Value) -> Result<String, AttemptError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let resp = self
            .client
            .post(&url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .await
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| AttemptError::Retryable(e.to_string()))?;
        if status.is_client_error() {
            return Err(AttemptError::Rejected { status: status.as_u16(), body: text });
        }
        if !status.is_success() {
            return Err(AttemptError::Retryable(format!("status {status}: {text}")));
        }
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| AttemptError::Fatal(format!("bad completion payload: {e}")))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| AttemptError::Fatal("completion payload has no message content".into()))
    }
}

enum AttemptError {
    Retryable(String),
    Rejected { status: u16, body: String },
    Fatal(String),
}

fn attachment_data_url(att: &Attachment) -> String {
    match att {
        // A plain path is loaded and inlined; unreadable files degrade to a
        // file URL so the request still goes out (and the server complains).
        Attachment::Path(p) => match std::fs::read(p) {
            Ok(bytes) => format!(
                "data:{};base64,{}",
                mime_for_path(p),
                base64::engine::general_purpose::STANDARD.encode(bytes)
            ),
            Err(_) => format!("file://{p}"),
        },
        Attachment::Bytes { mime, data } => format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(data)
        ),
    }
}

fn mime_for_path(p: &str) -> &'static str {
    let lower = p.to_lowercase();
    if lower.ends_with(".png") {
        "image/png"
    } else if lower.ends_with(".gif") {
        "image/gif"
    } else if lower.ends_with(".webp") {
        "image/webp"
    } else {
        "image/jpeg"
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let body = self.body_for(req);
        let mut backoff = Duration::from_millis(self.cfg.initial_backoff_ms);
        let mut last_message = String::new();
        for attempt in 1..=self.cfg.max_attempts {
            self.throttle().await;
            match self.attempt(&body).await {
                Ok(text) => {
                    let pc = req.prompt_chars();
                    let cc = text.chars().count() as u64;
                    let cost = self.cfg.pricing.cost(&self.cfg.model, pc, cc);
                    self.stats.record(pc, cc, cost);
                    return Ok(ChatResponse {
                        text,
                        model: self.cfg.model.clone(),
                        from_cache: false,
                    });
                }
                Err(AttemptError::Rejected { status, body }) => {
                    return Err(BackendError::RequestRejected { status, body });
                }
                Err(AttemptError::Fatal(m)) => {
                    return Err(BackendError::Payload(m));
                }
                Err(AttemptError::Retryable(m)) => {
                    tracing::warn!(attempt, error = %m, "transient backend failure");
                    last_message = m;
                    if attempt < self.cfg.max_attempts {
                        tokio::time::sleep(backoff).await;
                        backoff *= 2;
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts: self.cfg.max_attempts,
            message: last_message,
        })
    }

    fn snapshot_stats(&self) -> CallStats {
        self.stats.snapshot()
    }

    fn fingerprint(&self) -> String {
        format!("{}#{}", self.cfg.base_url.trim_end_matches('/'), self.cfg.model)
    }
}
