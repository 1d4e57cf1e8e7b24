//! Response cache wrapper: identical requests (same endpoint, model,
//! system, messages, temperature and seed — the tag does not count) are
//! served from memory or disk without touching the inner backend, and
//! without incrementing its call counters.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::types::CallStats;

use super::{cache_key, BackendError, ChatBackend, ChatRequest, ChatResponse};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    text: String,
    model: String,
}

pub struct CachedBackend<B> {
    inner: B,
    mem: Mutex<HashMap<String, CacheRecord>>,
    dir: Option<PathBuf>,
}

impl<B: ChatBackend> CachedBackend<B> {
    /// In-memory cache only.
    pub fn new(inner: B) -> Self {
        CachedBackend { inner, mem: Mutex::new(HashMap::new()), dir: None }
    }

    /// Memory + on-disk cache; entries persist across processes. The
    /// directory is created on first write.
    pub fn with_dir(inner: B, dir: impl Into<PathBuf>) -> Self {
        CachedBackend { inner, mem: Mutex::new(HashMap::new()), dir: Some(dir.into()) }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn disk_path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    fn load_disk(&self, key: &str) -> Option<CacheRecord> {
        let path = self.disk_path(key)?;
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn store_disk(&self, key: &str, rec: &CacheRecord) {
        let Some(path) = self.disk_path(key) else { return };
        if let Some(parent) = path.parent() {
            if std::fs::create_dir_all(parent).is_err() {
                return;
            }
        }
        // Best-effort: a failed cache write must not fail the call.
        if let Ok(text) = serde_json::to_string(rec) {
            let _ = std::fs::write(path, text);
        }
    }
}

#[async_trait]
impl<B: ChatBackend> ChatBackend for CachedBackend<B> {
    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let key = cache_key(&self.inner.fingerprint(), req);

        if let Some(rec) = self.mem.lock().unwrap().get(&key) {
            return Ok(ChatResponse { text: rec.text.clone(), model: rec.model.clone(), from_cache: true });
        }
        if let Some(rec) = self.load_disk(&key) {
            let resp = ChatResponse { text: rec.text.clone(), model: rec.model.clone(), from_cache: true };
            self.mem.lock().unwrap().insert(key, rec);
            return Ok(resp);
        }

        let resp = self.inner.complete(req).await?;
        let rec = CacheRecord { text: resp.text.clone(), model: resp.model.clone() };
        self.store_disk(&key, &rec);
        self.mem.lock().unwrap().insert(key, rec);
        Ok(resp)
    }

    /// Inner counters: cache hits never reach the inner backend, so `calls`
    /// is exactly the number of real completions.
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
