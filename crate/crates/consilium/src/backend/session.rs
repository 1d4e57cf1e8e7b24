//! Session recording and replay. A recording wrapper persists every
//! completion as one JSONL line keyed by the request hash; a replay backend
//! serves those lines back offline, erroring loudly on any request that was
//! never recorded.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::types::CallStats;

use super::{request_hash, BackendError, ChatBackend, ChatRequest, ChatResponse, StatsCell};

/// One recorded call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub request_hash: String,
    pub tag: String,
    pub response_text: String,
    pub prompt_chars: u64,
    pub completion_chars: u64,
}

/// Passes every call through to the inner backend and appends the result to
/// a JSONL session file, flushing per line so a crashed run still leaves a
/// usable session behind.
pub struct RecordingBackend<B> {
    inner: B,
    writer: Mutex<BufWriter<File>>,
}

impl<B: ChatBackend> RecordingBackend<B> {
    pub fn create(inner: B, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path.as_ref())?;
        Ok(RecordingBackend { inner, writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

#[async_trait]
impl<B: ChatBackend> ChatBackend for RecordingBackend<B> {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let resp = self.inner.complete(req).await?;
        let entry = SessionEntry {
            request_hash: request_hash(req),
            tag: req.tag.clone(),
            response_text: resp.text.clone(),
            prompt_chars: req.prompt_chars(),
            completion_chars: resp.text.chars().count() as u64,
        };
        let line = serde_json::to_string(&entry)
            .map_err(|e| BackendError::Session(e.to_string()))?;
        {
            let mut w = self.writer.lock().unwrap();
            writeln!(w, "{line}")?;
            w.flush()?;
        }
        Ok(resp)
    }

    fn snapshot_stats(&self) -> CallStats {
        self.inner.snapshot_stats()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn deterministic(&self) -> bool {
        self.inner.deterministic()
    }
}

/// Serves a recorded session by request hash. Counters replay the recorded
/// char counts so a replayed run's stats match the recorded run's.
pub struct ReplayBackend {
    entries: HashMap<String, SessionEntry>,
    stats: StatsCell,
}

impl ReplayBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = File::open(path.as_ref())?;
        let mut entries = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: SessionEntry = serde_json::from_str(&line).map_err(|e| {
                BackendError::Session(format!("line {}: {e}", i + 1))
            })?;
            entries.insert(entry.request_hash.clone(), entry);
        }
        Ok(ReplayBackend { entries, stats: StatsCell::default() })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[async_trait]
impl ChatBackend for ReplayBackend {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let hash = request_hash(req);
        match self.entries.get(&hash) {
            Some(entry) => {
                self.stats
                    .record(entry.prompt_chars, entry.completion_chars, 0.0);
                Ok(ChatResponse {
                    text: entry.response_text.clone(),
                    model: "replay".into(),
                    from_cache: false,
                })
            }
            None => Err(BackendError::ReplayMiss { hash }),
        }
    }

    fn snapshot_stats(&self) -> CallStats {
        self.stats.snapshot()
    }

    fn fingerprint(&self) -> String {
        "replay".into()
    }

    fn deterministic(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;

    #[tokio::test]
    async fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.jsonl");

        let reqs = [
            ChatRequest::new("s", "first question").with_tag("a"),
            ChatRequest::new("s", "second question").with_tag("b"),
        ];
        let recorded_stats;
        {
            let bk = RecordingBackend::create(
                ScriptedBackend::fifo(["alpha", "beta"]),
                &session,
            )
            .unwrap();
            for r in &reqs {
                bk.complete(r).await.unwrap();
            }
            recorded_stats = bk.snapshot_stats();
        }

        let replay = ReplayBackend::open(&session).unwrap();
        assert_eq!(replay.len(), 2);
        // Any order, any repetition: replay is content-addressed.
        assert_eq!(replay.complete(&reqs[1]).await.unwrap().text, "beta");
        assert_eq!(replay.complete(&reqs[0]).await.unwrap().text, "alpha");
        let replayed = replay.snapshot_stats();
        assert_eq!(replayed.calls, recorded_stats.calls);
        assert_eq!(replayed.prompt_chars, recorded_stats.prompt_chars);
        assert_eq!(replayed.completion_chars, recorded_stats.completion_chars);
    }

    #[tokio::test]
    async fn replay_miss_names_the_hash() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.jsonl");
        std::fs::write(&session, "").unwrap();
        let replay = ReplayBackend::open(&session).unwrap();
        let req = ChatRequest::new("s", "never recorded");
        match replay.complete(&req).await.unwrap_err() {
            BackendError::ReplayMiss { hash } => assert_eq!(hash, request_hash(&req)),
            other => panic!("wrong error: {other}"),
        }
    }

    #[tokio::test]
    async fn tag_changes_do_not_break_replay() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.jsonl");
        {
            let bk =
                RecordingBackend::create(ScriptedBackend::fifo(["resp"]), &session).unwrap();
            bk.complete(&ChatRequest::new("s", "q").with_tag("original"))
                .await
                .unwrap();
        }
        let replay = ReplayBackend::open(&session).unwrap();
        let out = replay
            .complete(&ChatRequest::new("s", "q").with_tag("renamed"))
            .await
            .unwrap();
        assert_eq!(out.text, "resp");
    }

    #[test]
    fn corrupt_session_line_is_reported_with_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let session = dir.path().join("session.jsonl");
        std::fs::write(&session, "{\"request_hash\": \"x\"\n").unwrap();
        match ReplayBackend::open(&session).map(|_| ()).unwrap_err() {
            BackendError::Session(msg) => assert!(msg.starts_with("line 1:")),
            other => panic!("wrong error: {other}"),
        }
    }
}
