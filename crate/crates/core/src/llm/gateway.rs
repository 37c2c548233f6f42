use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Clock, SystemClock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Distinguishes intentional re-samples of the same prompt in the cache.
    pub seed_tag: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, temperature: f64, seed_tag: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature,
            max_tokens: 1024,
            seed_tag: seed_tag.into(),
        }
    }

    /// Cache key: SHA-256 over prompt, temperature and seed tag.
    pub fn cache_key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.prompt.as_bytes());
        h.update([0]);
        h.update(format!("{:.6}", self.temperature).as_bytes());
        h.update([0]);
        h.update(self.seed_tag.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RawCompletion {
    pub text: String,
    pub backend_name: String,
    pub cached: bool,
    pub latency_ms: u64,
}

#[derive(Debug, Error)]
pub enum BackendError {
    /// Connection resets, timeouts, 5xx and 429 responses. Retried.
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend refused request: {0}")]
    Fatal(String),
}

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn call(&self, request: &CompletionRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("replay miss for key {key} (seed tag {seed_tag:?})")]
    ReplayMiss { key: String, seed_tag: String },
    #[error("retry budget exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error(transparent)]
    Backend(BackendError),
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("record mode needs a configured backend")]
    NoBackend,
    #[error("cache I/O: {0}")]
    Cache(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Record,
    Replay,
}

/// Exponential backoff on transient failures only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: u32,
}

impl Default for RetryPolicy {
    /// 1s, 4s, 16s.
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_secs(1), factor: 4 }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, ..Self::default() }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * self.factor.saturating_pow(retry)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub prompt: String,
    pub params: CacheParams,
    pub completion: String,
    pub timestamp: u64,
}

/// JSON-Lines completion cache. Lookups are concurrent; inserts serialize on the file.
pub struct CompletionCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    file: Mutex<Option<File>>,
}

impl CompletionCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: RwLock::default(), file: Mutex::new(None) }
    }

    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(&line).map_err(|e| {
                    io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
                })?;
                entries.insert(e.key.clone(), e);
            }
        }
        Ok(Self { path: Some(path), entries: RwLock::new(entries), file: Mutex::new(None) })
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, entry: CacheEntry) -> io::Result<()> {
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(path) = &self.path {
            if file.is_none() {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)?;
                }
                *file = Some(OpenOptions::new().create(true).append(true).open(path)?);
            }
            let f = file.as_mut().expect("opened above");
            let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(entry.key.clone(), entry);
        Ok(())
    }
}

/// Calls a backend through the record/replay cache with retries.
pub struct Gateway {
    backend: Option<Arc<dyn ChatBackend>>,
    cache: CompletionCache,
    mode: BackendMode,
    retry: RetryPolicy,
    clock: Arc<dyn Clock>,
    sleep: Arc<dyn Fn(Duration) + Send + Sync>,
}

impl Gateway {
    pub fn new(backend: Option<Arc<dyn ChatBackend>>, cache: CompletionCache, mode: BackendMode) -> Self {
        Self {
            backend,
            cache,
            mode,
            retry: RetryPolicy::default(),
            clock: Arc::new(SystemClock),
            sleep: Arc::new(std::thread::sleep),
        }
    }

    /// Replay-only gateway over an existing cache.
    pub fn replay(cache: CompletionCache) -> Self {
        Self::new(None, cache, BackendMode::Replay)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleep(mut self, sleep: Arc<dyn Fn(Duration) + Send + Sync>) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    pub fn cache(&self) -> &CompletionCache {
        &self.cache
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<RawCompletion, GatewayError> {
        if request.prompt.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let key = request.cache_key();
        if let Some(hit) = self.cache.get(&key) {
            return Ok(RawCompletion {
                text: hit.completion,
                backend_name: "cache".into(),
                cached: true,
                latency_ms: 0,
            });
        }
        if self.mode == BackendMode::Replay {
            return Err(GatewayError::ReplayMiss { key, seed_tag: request.seed_tag.clone() });
        }
        let backend = self.backend.as_ref().ok_or(GatewayError::NoBackend)?;
        let started = Instant::now();
        let mut retries = 0;
        let text = loop {
            match backend.call(request) {
                Ok(text) => break text,
                Err(BackendError::Transient(msg)) => {
                    if retries >= self.retry.max_retries {
                        return Err(GatewayError::RetriesExhausted { attempts: retries + 1, last: msg });
                    }
                    tracing::warn!(retry = retries + 1, "transient backend failure: {msg}");
                    (self.sleep)(self.retry.delay(retries));
                    retries += 1;
                }
                Err(e) => return Err(GatewayError::Backend(e)),
            }
        };
        self.cache.insert(CacheEntry {
            key,
            prompt: request.prompt.clone(),
            params: CacheParams {
                temperature: request.temperature,
                max_tokens: request.max_tokens,
                seed_tag: request.seed_tag.clone(),
            },
            completion: text.clone(),
            timestamp: self.clock.now_millis(),
        })?;
        Ok(RawCompletion {
            text,
            backend_name: backend.name().to_owned(),
            cached: false,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// OpenAI-style `/chat/completions` endpoint over plain HTTP.
pub struct HttpBackend {
    name: String,
    url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        let model = model.into();
        Ok(Self { name: format!("http:{model}"), url: url.into(), model, api_key, client })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl ChatBackend for HttpBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn call(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("HTTP {status}")));
        }
        let text = resp.text().map_err(|e| BackendError::Transient(e.to_string()))?;
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
    }
}
