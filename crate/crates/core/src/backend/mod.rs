//! Completion backends.
//!
//! Every pipeline stage talks to a [`CompletionBackend`]. Three
//! implementations ship: an OpenAI-compatible HTTP client (feature `http`),
//! a deterministic offline [`MockBackend`], and a [`ScriptedBackend`] that
//! replays canned responses. [`CachedBackend`] and [`CountingBackend`] wrap
//! any of them.

mod cache;
#[cfg(feature = "http")]
mod http;
pub mod mock;
mod ratelimit;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Instant;

pub use cache::{CacheEntry, CacheStats, ResponseCache};
#[cfg(feature = "http")]
pub use http::{HttpBackend, HttpConfig};
pub use mock::MockBackend;
pub use ratelimit::TokenBucket;

/// Which pipeline stage issued a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PromptKind {
    Segment,
    Ambiguity,
    Select,
    Decontext,
    Vanilla,
}

impl PromptKind {
    pub const ALL: [PromptKind; 5] = [
        PromptKind::Segment,
        PromptKind::Ambiguity,
        PromptKind::Select,
        PromptKind::Decontext,
        PromptKind::Vanilla,
    ];
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PromptKind::Segment => "SEGMENT",
            PromptKind::Ambiguity => "AMBIGUITY",
            PromptKind::Select => "SELECT",
            PromptKind::Decontext => "DECONTEXT",
            PromptKind::Vanilla => "VANILLA",
        };
        f.write_str(s)
    }
}

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    pub kind: PromptKind,
}

impl CompletionRequest {
    pub fn new(kind: PromptKind, prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: 0.0,
            model_id: model_id.into(),
            stop: None,
            kind,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub from_cache: bool,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
}

impl CompletionResponse {
    pub fn live(text: impl Into<String>, latency_ms: u64) -> Self {
        CompletionResponse { text: text.into(), from_cache: false, latency_ms, usage: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("cache storage: {0}")]
    Storage(String),
}

impl BackendError {
    /// Transport faults worth another attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(self, BackendError::Network(_) | BackendError::RateLimited { .. })
    }

    /// Faults that will recur for every request against this backend.
    pub fn is_fatal(&self) -> bool {
        matches!(self, BackendError::Auth(_) | BackendError::Config(_))
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Stable identifier recorded in provenance and manifests.
    fn id(&self) -> String;

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for &T {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (**self).complete(request)
    }
}

/// SHA-256 over every request field that can change the completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub digest: [u8; 32],
}

impl CacheKey {
    pub fn for_request(request: &CompletionRequest) -> Self {
        fn field(h: &mut Sha256, bytes: &[u8]) {
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        let mut h = Sha256::new();
        field(&mut h, request.model_id.as_bytes());
        field(&mut h, request.prompt.as_bytes());
        field(&mut h, &request.max_output_tokens.to_le_bytes());
        field(&mut h, &request.temperature.to_bits().to_le_bytes());
        match &request.stop {
            None => h.update([0u8]),
            Some(stops) => {
                h.update([1u8]);
                h.update((stops.len() as u64).to_le_bytes());
                for s in stops {
                    field(&mut h, s.as_bytes());
                }
            }
        }
        CacheKey { digest: h.finalize().into() }
    }

    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }
}

/// Short content digest of a prompt, as recorded in provenance.
pub fn prompt_digest(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    hex::encode(&digest[..8])
}

/// Exponential backoff with full jitter for retriable transport errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (attempts count from 1).
    pub fn delay_for(&self, attempt: u32, error: &BackendError) -> Duration {
        if let BackendError::RateLimited { retry_after: Some(d) } = error {
            return (*d).min(self.max_delay);
        }
        let exp = self
            .base_delay
            .saturating_mul(1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX))
            .min(self.max_delay);
        if self.jitter && !exp.is_zero() {
            jittered(exp)
        } else {
            exp
        }
    }

    /// Runs `op` until it succeeds, fails non-retriably, or attempts run out.
    pub fn run<T>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, BackendError>,
        mut sleep: impl FnMut(Duration),
    ) -> Result<T, BackendError> {
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retriable() && attempt < self.max_attempts => {
                    let delay = self.delay_for(attempt, &e);
                    log::warn!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Uniform in [exp / 2, exp].
#[cfg(feature = "http")]
fn jittered(exp: Duration) -> Duration {
    use rand::Rng;
    let nanos = exp.as_nanos() as u64;
    Duration::from_nanos(rand::thread_rng().gen_range(nanos / 2..=nanos))
}

// Without a transport nothing sleeps between retries for real.
#[cfg(not(feature = "http"))]
fn jittered(exp: Duration) -> Duration {
    exp
}

/// Counts live invocations of the wrapped backend.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicU64,
}

impl<B: CompletionBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for CountingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Consults a [`ResponseCache`] before the wrapped backend and stores every
/// successful live response.
pub struct CachedBackend<B> {
    inner: B,
    cache: ResponseCache,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: CompletionBackend> CachedBackend<B> {
    pub fn new(inner: B, cache: ResponseCache) -> Self {
        CachedBackend { inner, cache, hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for CachedBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let key = CacheKey::for_request(request);
        let started = Instant::now();
        match self.cache.get(&key) {
            Ok(Some(mut hit)) => {
                self.hits.fetch_add(1, Ordering::SeqCst);
                hit.from_cache = true;
                hit.latency_ms = started.elapsed().as_millis() as u64;
                return Ok(hit);
            }
            Ok(None) => {}
            Err(e) => log::warn!("cache lookup failed, falling through: {e}"),
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        if let Err(e) = self.cache.put(&key, request, &response) {
            log::warn!("cache write failed: {e}");
        }
        Ok(response)
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Option<String> + Send + Sync;

/// Replays canned responses per prompt kind, in order, and records every
/// request it receives. Useful for driving the pipeline with model outputs
/// captured elsewhere.
pub struct ScriptedBackend {
    id: String,
    queues: Mutex<HashMap<PromptKind, VecDeque<String>>>,
    fallback: Option<Box<Responder>>,
    seen: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedBackend {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedBackend {
            id: id.into(),
            queues: Mutex::new(HashMap::new()),
            fallback: None,
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn push(self, kind: PromptKind, text: impl Into<String>) -> Self {
        self.queues.lock().unwrap().entry(kind).or_default().push_back(text.into());
        self
    }

    /// Called when a kind's queue is empty; `None` yields a malformed-response error.
    pub fn with_fallback(mut self, f: impl Fn(&CompletionRequest) -> Option<String> + Send + Sync + 'static) -> Self {
        self.fallback = Some(Box::new(f));
        self
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        let queued = self
            .queues
            .lock()
            .unwrap()
            .get_mut(&request.kind)
            .and_then(VecDeque::pop_front);
        let text = queued
            .or_else(|| self.fallback.as_ref().and_then(|f| f(request)))
            .ok_or_else(|| BackendError::MalformedResponse(format!("no scripted {} response", request.kind)))?;
        Ok(CompletionResponse::live(text, 0))
    }
}
