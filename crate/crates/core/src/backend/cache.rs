//! Persistent response cache for deterministic (τ = 0) requests.
//!
//! File format: one record per line, `<sha256-hex>\t<byte-length>\t<text>\n`. The length
//! prefix makes texts containing newlines safe. Records are appended with a single
//! write so concurrent writers never interleave; a torn final record is ignored on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::{BackendError, BackendRequest, BackendResponse, ModelBackend};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn of(request: &BackendRequest) -> Self {
        let mut h = Sha256::new();
        h.update(request.model_id.as_bytes());
        h.update([0u8]);
        h.update(request.prompt.as_bytes());
        h.update([0u8]);
        h.update(request.temperature.to_bits().to_le_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, String>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) an append-only cache file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| BackendError::Cache(e.to_string()))?;
            }
        }
        let entries = match std::fs::read(path) {
            Ok(bytes) => parse_records(&bytes),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => HashMap::new(),
            Err(e) => return Err(BackendError::Cache(e.to_string())),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Cache(e.to_string()))?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<String> {
        self.entries.read().unwrap().get(key.as_str()).cloned()
    }

    pub fn insert(&self, key: &CacheKey, text: &str) -> Result<(), BackendError> {
        {
            let mut entries = self.entries.write().unwrap();
            if entries.contains_key(key.as_str()) {
                return Ok(());
            }
            entries.insert(key.as_str().to_string(), text.to_string());
        }
        if let Some(file) = &self.file {
            let record = format!("{}\t{}\t{}\n", key.as_str(), text.len(), text);
            file.lock()
                .unwrap()
                .write_all(record.as_bytes())
                .map_err(|e| BackendError::Cache(e.to_string()))?;
        }
        Ok(())
    }
}

fn parse_records(bytes: &[u8]) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let Some(rec) = parse_one(&bytes[pos..]) else { break };
        out.insert(rec.0, rec.1);
        pos += rec.2;
    }
    out
}

/// Returns `(digest, text, consumed)`.
fn parse_one(bytes: &[u8]) -> Option<(String, String, usize)> {
    let tab1 = bytes.iter().position(|&b| b == b'\t')?;
    let digest = std::str::from_utf8(&bytes[..tab1]).ok()?;
    let rest = &bytes[tab1 + 1..];
    let tab2 = rest.iter().position(|&b| b == b'\t')?;
    let len: usize = std::str::from_utf8(&rest[..tab2]).ok()?.parse().ok()?;
    let start = tab1 + 1 + tab2 + 1;
    let end = start.checked_add(len)?;
    if bytes.len() <= end || bytes[end] != b'\n' {
        return None;
    }
    let text = std::str::from_utf8(&bytes[start..end]).ok()?;
    Some((digest.to_string(), text.to_string(), end + 1))
}

/// Consults the cache before calling `inner` for τ = 0 requests. Sampling requests
/// (τ > 0) always go through.
pub struct CachedBackend<B> {
    inner: B,
    cache: std::sync::Arc<ResponseCache>,
    misses: AtomicUsize,
    hits: AtomicUsize,
}

impl<B: ModelBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: std::sync::Arc<ResponseCache>) -> Self {
        CachedBackend {
            inner,
            cache,
            misses: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
        }
    }

    /// Requests forwarded to the wrapped backend.
    pub fn live_calls(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ModelBackend> ModelBackend for CachedBackend<B> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        if request.temperature > 0.0 {
            self.misses.fetch_add(1, Ordering::SeqCst);
            return self.inner.complete(request);
        }
        let start = Instant::now();
        let key = CacheKey::of(request);
        if let Some(text) = self.cache.get(&key) {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(BackendResponse {
                text,
                latency: start.elapsed(),
                cached: true,
            });
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        self.cache.insert(&key, &response.text)?;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{query, MockBackend, MockSpec};
    use std::sync::Arc;

    #[test]
    fn second_deterministic_call_is_cached() {
        let b = CachedBackend::new(
            MockBackend::new(MockSpec::scripted(["[1, 1]", "[2, 2]"]), 0).unwrap(),
            Arc::new(ResponseCache::in_memory()),
        );
        let first = query(&b, "p", 0.0).unwrap();
        let second = query(&b, "p", 0.0).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(second.text, "[1, 1]");
        assert_eq!(b.inner().calls(), 1);
        assert_eq!(b.live_calls(), 1);
    }

    #[test]
    fn sampling_requests_bypass_cache() {
        let b = CachedBackend::new(
            MockBackend::new(MockSpec::scripted(["a", "b"]), 0).unwrap(),
            Arc::new(ResponseCache::in_memory()),
        );
        assert_eq!(query(&b, "p", 1.8).unwrap().text, "a");
        assert_eq!(query(&b, "p", 1.8).unwrap().text, "b");
        assert_eq!(b.hits(), 0);
    }

    #[test]
    fn key_depends_on_every_field() {
        let base = BackendRequest::new("m", "p", 0.0);
        let k = CacheKey::of(&base);
        assert_eq!(k, CacheKey::of(&base.clone()));
        assert_ne!(k, CacheKey::of(&BackendRequest::new("m2", "p", 0.0)));
        assert_ne!(k, CacheKey::of(&BackendRequest::new("m", "p2", 0.0)));
        assert_ne!(k, CacheKey::of(&BackendRequest::new("m", "p", 0.5)));
        assert_eq!(k.as_str().len(), 64);
    }

    #[test]
    fn file_cache_persists_multiline_texts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.log");
        let key = CacheKey::of(&BackendRequest::new("m", "p", 0.0));
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(&key, "line one\nline\ttwo").unwrap();
        }
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(&key).as_deref(), Some("line one\nline\ttwo"));
    }

    #[test]
    fn torn_trailing_record_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.log");
        let key = CacheKey::of(&BackendRequest::new("m", "p", 0.0));
        {
            let c = ResponseCache::open(&path).unwrap();
            c.insert(&key, "[1, 2]").unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"abcdef\t100\tshort").unwrap();
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn concurrent_writers_produce_parseable_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.log");
        let cache = Arc::new(ResponseCache::open(&path).unwrap());
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let cache = Arc::clone(&cache);
                std::thread::spawn(move || {
                    for i in 0..200 {
                        let k = CacheKey::of(&BackendRequest::new("m", format!("{t}-{i}"), 0.0));
                        cache.insert(&k, &format!("resp\n{t} {i}")).unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(ResponseCache::open(&path).unwrap().len(), 800);
    }
}
