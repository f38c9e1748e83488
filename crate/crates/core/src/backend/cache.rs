use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, CacheKey, CompletionRequest, CompletionResponse};

/// On-disk record stored for each cached completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub request: CompletionRequest,
    pub response: CompletionResponse,
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub entries: u64,
    pub bytes: u64,
}

/// Content-addressed completion cache.
///
/// Layout: `<dir>/<first two hex digits>/<digest>.json`. Writes go to a
/// temporary file in the shard directory and are renamed into place, so a
/// reader sees either a complete entry or none.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

fn storage(e: impl std::fmt::Display) -> BackendError {
    BackendError::Storage(e.to_string())
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, BackendError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(storage)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let hex = key.hex();
        self.dir.join(&hex[..2]).join(format!("{hex}.json"))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CompletionResponse>, BackendError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(storage(e)),
        };
        let entry: CacheEntry =
            serde_json::from_slice(&bytes).map_err(|e| storage(format!("{}: {e}", path.display())))?;
        Ok(Some(entry.response))
    }

    pub fn put(
        &self,
        key: &CacheKey,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Result<(), BackendError> {
        let path = self.path_for(key);
        let shard = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(shard).map_err(storage)?;
        let entry = CacheEntry {
            request: request.clone(),
            response: CompletionResponse { from_cache: false, ..response.clone() },
            created_at: chrono::Utc::now().to_rfc3339(),
        };
        let body = serde_json::to_vec_pretty(&entry).map_err(storage)?;
        let mut tmp = tempfile::NamedTempFile::new_in(shard).map_err(storage)?;
        tmp.write_all(&body).map_err(storage)?;
        tmp.as_file().sync_all().map_err(storage)?;
        tmp.persist(&path).map_err(|e| storage(e.error))?;
        Ok(())
    }

    pub fn stats(&self) -> Result<CacheStats, BackendError> {
        let mut stats = CacheStats::default();
        for shard in fs::read_dir(&self.dir).map_err(storage)? {
            let shard = shard.map_err(storage)?;
            if !shard.file_type().map_err(storage)?.is_dir() {
                continue;
            }
            for file in fs::read_dir(shard.path()).map_err(storage)? {
                let file = file.map_err(storage)?;
                if file.path().extension().is_some_and(|e| e == "json") {
                    stats.entries += 1;
                    stats.bytes += file.metadata().map_err(storage)?.len();
                }
            }
        }
        Ok(stats)
    }

    /// Removes every entry; returns how many were removed.
    pub fn clear(&self) -> Result<u64, BackendError> {
        let removed = self.stats()?.entries;
        for shard in fs::read_dir(&self.dir).map_err(storage)? {
            let shard = shard.map_err(storage)?;
            if shard.file_type().map_err(storage)?.is_dir() && shard.file_name().len() == 2 {
                fs::remove_dir_all(shard.path()).map_err(storage)?;
            }
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CachedBackend, CompletionBackend, CountingBackend, MockBackend, PromptKind};
    use std::sync::Arc;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(PromptKind::Vanilla, prompt, "m")
    }

    #[test]
    fn miss_then_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let r = req("Sentence: {x}");
        let key = CacheKey::for_request(&r);
        assert_eq!(cache.get(&key).unwrap(), None);
        let resp = CompletionResponse::live("ünïcode — text\n", 12);
        cache.put(&key, &r, &resp).unwrap();
        assert_eq!(cache.get(&key).unwrap().unwrap().text, resp.text);
        let hex = key.hex();
        assert!(dir.path().join(&hex[..2]).join(format!("{hex}.json")).exists());
        let raw: serde_json::Value =
            serde_json::from_slice(&fs::read(cache.path_for(&key)).unwrap()).unwrap();
        assert!(raw.get("request").is_some() && raw.get("response").is_some() && raw.get("created_at").is_some());
    }

    #[test]
    fn concurrent_writers_never_tear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let r = req("same key");
        let key = CacheKey::for_request(&r);
        let texts: Vec<String> = (0..16).map(|i| format!("writer {i} ").repeat(2000)).collect();
        std::thread::scope(|s| {
            for t in &texts {
                let cache = Arc::clone(&cache);
                let r = r.clone();
                s.spawn(move || {
                    for _ in 0..5 {
                        cache.put(&key, &r, &CompletionResponse::live(t.clone(), 0)).unwrap();
                        // Readers racing the writers must always see a whole entry.
                        let got = cache.get(&key).unwrap().unwrap();
                        assert!(texts_contains(&got.text));
                    }
                });
            }
        });
        let winner = cache.get(&key).unwrap().unwrap().text;
        assert!(texts.contains(&winner));
        assert_eq!(cache.stats().unwrap().entries, 1);
    }

    fn texts_contains(t: &str) -> bool {
        (0..16).any(|i| t == format!("writer {i} ").repeat(2000))
    }

    #[test]
    fn corrupt_entry_falls_through_to_live_backend() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let r = req("Input:\nSentence: {Paris is the capital of France.}; Context: {};\nOutput:");
        let path = cache.path_for(&CacheKey::for_request(&r));
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, b"{not json").unwrap();
        let backend = CachedBackend::new(CountingBackend::new(MockBackend::new()), cache);
        let out = backend.complete(&r).unwrap();
        assert!(!out.from_cache);
        assert_eq!(backend.inner().calls(), 1);
        // The live response replaced the corrupt file.
        assert!(backend.complete(&r).unwrap().from_cache);
        assert_eq!(backend.inner().calls(), 1);
    }

    #[test]
    fn stats_and_clear() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        for i in 0..5 {
            let r = req(&format!("p{i}"));
            cache.put(&CacheKey::for_request(&r), &r, &CompletionResponse::live("t", 0)).unwrap();
        }
        let stats = cache.stats().unwrap();
        assert_eq!(stats.entries, 5);
        assert!(stats.bytes > 0);
        assert_eq!(cache.clear().unwrap(), 5);
        assert_eq!(cache.stats().unwrap(), CacheStats::default());
    }
}
