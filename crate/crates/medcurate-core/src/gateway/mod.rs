//! Rate-limited LLM API client with record/replay fixtures.
//!
//! Synthesis and judging talk to an external chat-completion endpoint
//! through this one client. Three modes:
//!
//! - `live`: HTTP calls with retry and rate limiting; responses are cached
//!   in memory for the life of the process, so identical requests cost one
//!   network call.
//! - `record`: like live, but responses are also persisted as fixture files
//!   so a later replay run can work offline. Existing fixtures are reused
//!   without going to the network.
//! - `replay`: fixtures only, the network is never touched. A request whose
//!   fixture is missing fails loudly with its cache key.
//!
//! Fixtures are content addressed: the key is the sha256 of (model, prompt,
//! media hashes, temperature, max tokens), stored one JSON file per key in
//! the cache directory. Editing a prompt template therefore invalidates its
//! fixtures with a missing-fixture error rather than silently replaying a
//! stale answer.
//!
//! The wire protocol is a minimal JSON POST: `{model, prompt, media:
//! [{id, sha256}], temperature, max_tokens}` answered by `{text,
//! prompt_tokens, completion_tokens}`. Media travels as hash references;
//! raw bytes never leave the machine. If the environment variable named by
//! `api_key_env` is set, its value is sent as a bearer token.

mod limiter;

pub use limiter::{Clock, FakeClock, RateLimiter, SystemClock};

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no fixture for key {key} (model {model:?}); run in record mode first")]
    MissingFixture { key: String, model: String },
    #[error("request failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("endpoint returned unusable response: {0}")]
    BadResponse(String),
    #[error("cache io error on {path}: {source}")]
    CacheIo {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("fixture {path} is corrupt: {source}")]
    CorruptFixture {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Base delay; attempt n waits `base_backoff_ms * 2^(n-1)`.
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_backoff_ms: 500 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint: String,
    pub model: String,
    pub max_concurrency: usize,
    pub requests_per_minute: u32,
    pub retry: RetryPolicy,
    pub cache_dir: PathBuf,
    pub mode: GatewayMode,
    /// Name of the environment variable holding the API key; sent as a
    /// bearer token when set.
    pub api_key_env: String,
}

impl GatewayConfig {
    /// Replay-mode config over `cache_dir`, suitable for offline runs.
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            endpoint: String::new(),
            model: "default".into(),
            max_concurrency: 4,
            requests_per_minute: 600,
            retry: RetryPolicy::default(),
            cache_dir: cache_dir.into(),
            mode: GatewayMode::Replay,
            api_key_env: "MEDCURATE_API_KEY".into(),
        }
    }
}

/// Media referenced by a request: an identifier plus the sha256 of the
/// underlying bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaAttachment {
    pub id: String,
    pub sha256: String,
}

impl MediaAttachment {
    pub fn from_bytes(id: impl Into<String>, bytes: &[u8]) -> Self {
        MediaAttachment { id: id.into(), sha256: hex::encode(Sha256::digest(bytes)) }
    }

    pub fn from_file(path: &std::path::Path) -> io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(path.to_string_lossy(), &bytes))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub media: Vec<MediaAttachment>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn text(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            media: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// Content hash identifying a logical request. Equal requests to the same
/// model produce equal keys; changing any component (prompt, media bytes,
/// sampling params) produces a different key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn compute(model: &str, request: &CompletionRequest) -> Self {
        #[derive(Serialize)]
        struct Material<'a> {
            model: &'a str,
            prompt: &'a str,
            media: &'a [MediaAttachment],
            temperature: f64,
            max_tokens: u32,
        }
        let material = Material {
            model,
            prompt: &request.prompt,
            media: &request.media,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let json = serde_json::to_vec(&material).expect("key material serializes");
        CacheKey(hex::encode(Sha256::digest(&json)))
    }

    pub fn hex(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Cache key of the request that produced this response.
    pub key: String,
    /// True when served from memory or fixture rather than the network.
    pub cached: bool,
}

/// One fixture file: the request summary for human audit plus the response.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Fixture {
    key: String,
    model: String,
    prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    media: Vec<MediaAttachment>,
    temperature: f64,
    max_tokens: u32,
    text: String,
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Wire format of the endpoint's reply.
#[derive(Debug, Deserialize)]
struct WireResponse {
    text: String,
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub network_calls: u64,
    pub memory_hits: u64,
    pub fixture_hits: u64,
}

/// Thread-safe client; share one instance per run so rate limiting and
/// caching are global.
pub struct LlmGateway {
    config: GatewayConfig,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    memory: Mutex<BTreeMap<String, CompletionResponse>>,
    agent: ureq::Agent,
    network_calls: AtomicU64,
    memory_hits: AtomicU64,
    fixture_hits: AtomicU64,
}

impl LlmGateway {
    pub fn new(config: GatewayConfig) -> Self {
        Self::with_clock(config, Arc::new(SystemClock::new()))
    }

    /// Injects a clock; tests pass [`FakeClock`] so rate limiting and
    /// backoff run instantly.
    pub fn with_clock(config: GatewayConfig, clock: Arc<dyn Clock>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        let limiter = RateLimiter::new(config.requests_per_minute);
        LlmGateway {
            config,
            clock,
            limiter,
            memory: Mutex::new(BTreeMap::new()),
            agent,
            network_calls: AtomicU64::new(0),
            memory_hits: AtomicU64::new(0),
            fixture_hits: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            network_calls: self.network_calls.load(Ordering::SeqCst),
            memory_hits: self.memory_hits.load(Ordering::SeqCst),
            fixture_hits: self.fixture_hits.load(Ordering::SeqCst),
        }
    }

    pub fn cache_key(&self, request: &CompletionRequest) -> CacheKey {
        CacheKey::compute(&self.config.model, request)
    }

    /// Completes one request according to the configured mode.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let key = self.cache_key(request);

        if let Some(hit) = self.memory.lock().unwrap().get(key.hex()) {
            self.memory_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(CompletionResponse { cached: true, ..hit.clone() });
        }

        let response = match self.config.mode {
            GatewayMode::Replay => self.read_fixture(&key)?,
            GatewayMode::Record => match self.try_read_fixture(&key)? {
                Some(response) => response,
                None => {
                    let response = self.call_network(request, &key)?;
                    self.write_fixture(request, &response)?;
                    response
                }
            },
            GatewayMode::Live => self.call_network(request, &key)?,
        };

        self.memory.lock().unwrap().insert(key.hex().to_string(), response.clone());
        Ok(response)
    }

    /// Completes a batch with at most `max_concurrency` requests in flight;
    /// results come back in request order, failures reported positionally.
    pub fn complete_batch(
        &self,
        requests: &[CompletionRequest],
    ) -> Vec<Result<CompletionResponse, GatewayError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let workers = self.config.max_concurrency.max(1).min(requests.len());
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<CompletionResponse, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(request) = requests.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(self.complete(request));
                });
            }
        });

        slots
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
            .collect()
    }

    /// Persists a fixture for `request` as if it had been recorded,
    /// returning the cache key. Lets tests and offline tooling seed replay
    /// runs.
    pub fn store_fixture(
        &self,
        request: &CompletionRequest,
        text: &str,
    ) -> Result<CacheKey, GatewayError> {
        let key = self.cache_key(request);
        let response = CompletionResponse {
            text: text.to_string(),
            prompt_tokens: 0,
            completion_tokens: 0,
            key: key.hex().to_string(),
            cached: true,
        };
        self.write_fixture(request, &response)?;
        Ok(key)
    }

    fn fixture_path(&self, key: &CacheKey) -> PathBuf {
        self.config.cache_dir.join(format!("{}.json", key.hex()))
    }

    fn try_read_fixture(&self, key: &CacheKey) -> Result<Option<CompletionResponse>, GatewayError> {
        let path = self.fixture_path(key);
        let bytes = match std::fs::read(&path) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(GatewayError::CacheIo { path, source }),
        };
        let fixture: Fixture = serde_json::from_slice(&bytes)
            .map_err(|source| GatewayError::CorruptFixture { path, source })?;
        self.fixture_hits.fetch_add(1, Ordering::SeqCst);
        Ok(Some(CompletionResponse {
            text: fixture.text,
            prompt_tokens: fixture.prompt_tokens,
            completion_tokens: fixture.completion_tokens,
            key: key.hex().to_string(),
            cached: true,
        }))
    }

    fn read_fixture(&self, key: &CacheKey) -> Result<CompletionResponse, GatewayError> {
        self.try_read_fixture(key)?.ok_or_else(|| GatewayError::MissingFixture {
            key: key.hex().to_string(),
            model: self.config.model.clone(),
        })
    }

    /// Atomic write: temp file in the same directory, then rename.
    fn write_fixture(
        &self,
        request: &CompletionRequest,
        response: &CompletionResponse,
    ) -> Result<(), GatewayError> {
        let dir = &self.config.cache_dir;
        std::fs::create_dir_all(dir)
            .map_err(|source| GatewayError::CacheIo { path: dir.clone(), source })?;
        let fixture = Fixture {
            key: response.key.clone(),
            model: self.config.model.clone(),
            prompt: request.prompt.clone(),
            media: request.media.clone(),
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            text: response.text.clone(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
        };
        let mut bytes = serde_json::to_vec_pretty(&fixture).expect("fixture serializes");
        bytes.push(b'\n');
        let final_path = self.fixture_path(&CacheKey(response.key.clone()));
        let tmp_path = dir.join(format!(".tmp-{}", response.key));
        std::fs::write(&tmp_path, &bytes)
            .map_err(|source| GatewayError::CacheIo { path: tmp_path.clone(), source })?;
        std::fs::rename(&tmp_path, &final_path)
            .map_err(|source| GatewayError::CacheIo { path: final_path, source })?;
        Ok(())
    }

    fn call_network(
        &self,
        request: &CompletionRequest,
        key: &CacheKey,
    ) -> Result<CompletionResponse, GatewayError> {
        #[derive(Serialize)]
        struct WireRequest<'a> {
            model: &'a str,
            prompt: &'a str,
            media: &'a [MediaAttachment],
            temperature: f64,
            max_tokens: u32,
        }
        let body = WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            media: &request.media,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let api_key = std::env::var(&self.config.api_key_env).ok();

        let mut last_error = String::new();
        for attempt in 1..=self.config.retry.max_attempts.max(1) {
            if attempt > 1 {
                let backoff = self.config.retry.base_backoff_ms << (attempt - 2);
                self.clock.sleep(Duration::from_millis(backoff));
            }
            self.limiter.acquire(self.clock.as_ref());
            self.network_calls.fetch_add(1, Ordering::SeqCst);

            let mut call = self.agent.post(&self.config.endpoint);
            if let Some(k) = &api_key {
                call = call.header("authorization", &format!("Bearer {k}"));
            }
            match call.send_json(&body) {
                Ok(mut response) => {
                    let status = response.status();
                    if status.is_success() {
                        let wire: WireResponse = response
                            .body_mut()
                            .read_json()
                            .map_err(|e| GatewayError::BadResponse(e.to_string()))?;
                        return Ok(CompletionResponse {
                            text: wire.text,
                            prompt_tokens: wire.prompt_tokens,
                            completion_tokens: wire.completion_tokens,
                            key: key.hex().to_string(),
                            cached: false,
                        });
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let body_text = response
                        .body_mut()
                        .read_to_string()
                        .unwrap_or_else(|_| "<unreadable body>".into());
                    last_error = format!("HTTP {status}: {body_text}");
                    if !retryable {
                        return Err(GatewayError::RetriesExhausted { attempts: attempt, last_error });
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.config.retry.max_attempts.max(1),
            last_error,
        })
    }
}
