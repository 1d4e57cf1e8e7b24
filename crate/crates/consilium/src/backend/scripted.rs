//! Deterministic scripted backend: serves canned responses either in strict
//! FIFO order or by matching request tags / prompt substrings. The workhorse
//! of tests and offline benchmark runs.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::types::CallStats;

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, StatsCell};

/// One scripted response. With `tag` set it matches requests whose tag
/// equals it; with `contains` set it matches requests whose rendered prompt
/// contains the substring; with neither it matches anything. `once` entries
/// are consumed on first use, others can serve repeatedly.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub once: bool,
    pub response: String,
}

impl ScriptEntry {
    pub fn any(response: impl Into<String>) -> Self {
        ScriptEntry { response: response.into(), ..Default::default() }
    }

    pub fn for_tag(tag: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry { tag: Some(tag.into()), response: response.into(), ..Default::default() }
    }

    pub fn containing(needle: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptEntry { contains: Some(needle.into()), response: response.into(), ..Default::default() }
    }

    fn matches(&self, req: &ChatRequest) -> bool {
        if let Some(tag) = &self.tag {
            if req.tag != *tag {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            let hit = req.system.contains(needle.as_str())
                || req.messages.iter().any(|m| m.text.contains(needle.as_str()));
            if !hit {
                return false;
            }
        }
        true
    }
}

/// A whole script: strict-FIFO consumption or first-match-wins entries.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedScript {
    #[serde(default)]
    pub strict_fifo: bool,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

impl ScriptedScript {
    pub fn fifo<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedScript {
            strict_fifo: true,
            entries: responses.into_iter().map(ScriptEntry::any).collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Payload(format!("bad script file: {e}")))
    }
}

struct State {
    fifo: VecDeque<String>,
    entries: Vec<(ScriptEntry, bool)>, // (entry, used)
    served: usize,
    requests: Vec<ChatRequest>,
}

/// See [module docs](self). Also records every request it receives so tests
/// can assert on exact prompt contents and tags.
pub struct ScriptedBackend {
    strict_fifo: bool,
    state: Mutex<State>,
    stats: StatsCell,
}

impl ScriptedBackend {
    pub fn new(script: ScriptedScript) -> Self {
        let fifo = if script.strict_fifo {
            script.entries.iter().map(|e| e.response.clone()).collect()
        } else {
            VecDeque::new()
        };
        ScriptedBackend {
            strict_fifo: script.strict_fifo,
            state: Mutex::new(State {
                fifo,
                entries: script.entries.into_iter().map(|e| (e, false)).collect(),
                served: 0,
                requests: Vec::new(),
            }),
            stats: StatsCell::default(),
        }
    }

    /// Strict-FIFO script from a plain list of responses.
    pub fn fifo<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedBackend::new(ScriptedScript::fifo(responses))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        Ok(ScriptedBackend::new(ScriptedScript::load(path)?))
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    /// Tags of every request received so far, in arrival order.
    pub fn request_tags(&self) -> Vec<String> {
        self.state
            .lock()
            .unwrap()
            .requests
            .iter()
            .map(|r| r.tag.clone())
            .collect()
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        if req.messages.iter().any(|m| m.attachment.is_some()) {
            tracing::warn!(tag = %req.tag, "scripted backend ignores attachments");
        }
        let text = {
            let mut st = self.state.lock().unwrap();
            st.requests.push(req.clone());
            if self.strict_fifo {
                match st.fifo.pop_front() {
                    Some(t) => t,
                    None => {
                        return Err(BackendError::ScriptExhausted {
                            served: st.served,
                            tag: req.tag.clone(),
                        })
                    }
                }
            } else {
                let found = st
                    .entries
                    .iter()
                    .position(|(e, used)| e.matches(req) && !(e.once && *used));
                match found {
                    Some(i) => {
                        st.entries[i].1 = true;
                        st.entries[i].0.response.clone()
                    }
                    None => return Err(BackendError::ScriptUnmatched { tag: req.tag.clone() }),
                }
            }
        };
        {
            let mut st = self.state.lock().unwrap();
            st.served += 1;
        }
        self.stats
            .record(req.prompt_chars(), text.chars().count() as u64, 0.0);
        Ok(ChatResponse { text, model: "scripted".into(), from_cache: false })
    }

    fn snapshot_stats(&self) -> CallStats {
        self.stats.snapshot()
    }

    fn fingerprint(&self) -> String {
        "scripted".into()
    }

    fn deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: &str, text: &str) -> ChatRequest {
        ChatRequest::new("sys", text).with_tag(tag)
    }

    #[tokio::test]
    async fn fifo_serves_in_order_then_errors() {
        let bk = ScriptedBackend::fifo(["one", "two"]);
        assert_eq!(bk.complete(&req("a", "x")).await.unwrap().text, "one");
        assert_eq!(bk.complete(&req("b", "y")).await.unwrap().text, "two");
        let err = bk.complete(&req("c", "z")).await.unwrap_err();
        assert!(matches!(err, BackendError::ScriptExhausted { served: 2, .. }));
    }

    #[tokio::test]
    async fn tag_and_substring_matchers() {
        let bk = ScriptedBackend::new(ScriptedScript {
            strict_fifo: false,
            entries: vec![
                ScriptEntry::for_tag("classify", "1) low"),
                ScriptEntry::containing("Reference knowledge", "grounded answer"),
                ScriptEntry::any("default"),
            ],
        });
        assert_eq!(bk.complete(&req("classify", "anything")).await.unwrap().text, "1) low");
        assert_eq!(
            bk.complete(&req("opinion", "Reference knowledge:\n...")).await.unwrap().text,
            "grounded answer"
        );
        assert_eq!(bk.complete(&req("other", "plain")).await.unwrap().text, "default");
    }

    #[tokio::test]
    async fn once_entries_are_consumed() {
        let bk = ScriptedBackend::new(ScriptedScript {
            strict_fifo: false,
            entries: vec![
                ScriptEntry { once: true, response: "first".into(), ..Default::default() },
                ScriptEntry::any("rest"),
            ],
        });
        assert_eq!(bk.complete(&req("t", "x")).await.unwrap().text, "first");
        assert_eq!(bk.complete(&req("t", "x")).await.unwrap().text, "rest");
        assert_eq!(bk.complete(&req("t", "x")).await.unwrap().text, "rest");
    }

    #[tokio::test]
    async fn unmatched_request_is_an_error() {
        let bk = ScriptedBackend::new(ScriptedScript {
            strict_fifo: false,
            entries: vec![ScriptEntry::for_tag("only-this", "r")],
        });
        let err = bk.complete(&req("something-else", "x")).await.unwrap_err();
        assert!(matches!(err, BackendError::ScriptUnmatched { .. }));
    }

    #[tokio::test]
    async fn stats_count_calls_and_chars() {
        let bk = ScriptedBackend::fifo(["abcd"]);
        bk.complete(&req("t", "12345")).await.unwrap();
        let s = bk.snapshot_stats();
        assert_eq!(s.calls, 1);
        assert_eq!(s.prompt_chars, 3 + 5); // "sys" + "12345"
        assert_eq!(s.completion_chars, 4);
        assert_eq!(s.estimated_cost, 0.0);
    }

    #[tokio::test]
    async fn records_requests_for_inspection() {
        let bk = ScriptedBackend::fifo(["a", "b"]);
        bk.complete(&req("first", "x")).await.unwrap();
        bk.complete(&req("second", "y")).await.unwrap();
        assert_eq!(bk.request_tags(), vec!["first", "second"]);
    }

    #[test]
    fn script_round_trips_through_json() {
        let s = ScriptedScript {
            strict_fifo: false,
            entries: vec![ScriptEntry::for_tag("t", "r"), ScriptEntry::any("d")],
        };
        let text = serde_json::to_string(&s).unwrap();
        let back: ScriptedScript = serde_json::from_str(&text).unwrap();
        assert_eq!(back.entries.len(), 2);
        assert_eq!(back.entries[0].tag.as_deref(), Some("t"));
    }
}
