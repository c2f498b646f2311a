//! Completion gateway: one `complete()` call against an HTTP completions
//! endpoint, an HTTP chat endpoint, or an offline mock, with retries,
//! bounded parallelism, and an append-only response cache.
//!
//! The cache is a JSONL file keyed by a SHA-256 over the request fields that
//! affect the completion (model, prompt, temperature, max output tokens,
//! stop sequences). Records are only ever appended; corrupt lines are
//! skipped on load so a crash mid-write costs at most one entry. Identical
//! keys always map to identical requests, so replaying a run hits the cache
//! and an interrupted run resumes where it stopped.
//!
//! API keys are read from the environment variable *named* in the backend
//! config; the key itself never appears in config files or on the command
//! line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

// ─── Token estimate ─────────────────────────────────────────────────────────

/// Crude token estimate: `ceil(chars / 4)`. Good enough for budget checks;
/// never used for billing.
pub fn count_tokens_approx(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

// ─── Config and request types ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    HttpCompletions,
    HttpChat,
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "http-completions" => Ok(BackendKind::HttpCompletions),
            "http-chat" => Ok(BackendKind::HttpChat),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!(
                "unknown backend kind {other:?}: expected http-completions, http-chat, or mock"
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key. The variable
    /// must be set for HTTP backends; its value is never logged.
    #[serde(default)]
    pub auth_env_var: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    /// Mock backend only: fixture file mapping prompts to completions.
    #[serde(default)]
    pub fixture_path: Option<PathBuf>,
    /// Base retry delay; production default is one second, tests shrink it.
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
}

fn default_timeout_s() -> f64 {
    60.0
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_parallel() -> usize {
    1
}
fn default_retry_base_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: String,
    pub max_output_tokens: u32,
    /// Defaults to 0 for reproducibility.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    /// True when served from the response cache.
    pub cached: bool,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("auth environment variable {0} is not set")]
    AuthMissing(String),
    #[error("rate limited: retries exhausted after {attempts} attempts")]
    RateLimitedExhausted { attempts: u32 },
    #[error("request timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("prompt exceeds the model's token limit: {0}")]
    TokenLimitExceeded(String),
    #[error("mock fixture has no completion for prompt hash {0}")]
    MockMiss(String),
    #[error("backend returned HTTP {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache I/O error: {0}")]
    CacheIo(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

impl GatewayError {
    /// Errors that mean "the backend is unhealthy", distinct from bad
    /// requests or data problems; callers map these to a dedicated exit code.
    pub fn is_backend_exhaustion(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimitedExhausted { .. } | GatewayError::Timeout { .. }
        )
    }
}

// ─── Cache ──────────────────────────────────────────────────────────────────

/// Key over exactly the fields that determine a completion.
pub fn request_cache_key(request: &CompletionRequest) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.model_id.as_bytes());
    hasher.update([0]);
    hasher.update(request.prompt.as_bytes());
    hasher.update([0]);
    hasher.update(format!("{:?}", request.temperature).as_bytes());
    hasher.update([0]);
    hasher.update(request.max_output_tokens.to_le_bytes());
    for stop in &request.stop_sequences {
        hasher.update([0]);
        hasher.update(stop.as_bytes());
    }
    hex(&hasher.finalize())
}

/// SHA-256 of a prompt alone; mock fixtures may match on this.
pub fn prompt_sha256(prompt: &str) -> String {
    hex(&Sha256::digest(prompt.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    model_id: String,
    prompt: String,
    completion: String,
    finish_reason: FinishReason,
    /// Seconds since the Unix epoch at write time; informational only.
    timestamp: u64,
}

struct ResponseCache {
    entries: RwLock<HashMap<String, (String, FinishReason)>>,
    file: Mutex<File>,
}

impl ResponseCache {
    fn open(dir: &Path) -> Result<Self, GatewayError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| GatewayError::CacheIo(format!("{}: {e}", dir.display())))?;
        let path = dir.join("responses.jsonl");
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path)
                .map_err(|e| GatewayError::CacheIo(format!("{}: {e}", path.display())))?;
            for line in BufReader::new(file).lines() {
                let Ok(line) = line else { break };
                // Corrupt records (e.g. from a crash mid-append) are skipped.
                if let Ok(record) = serde_json::from_str::<CacheRecord>(&line) {
                    entries.insert(record.key, (record.completion, record.finish_reason));
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::CacheIo(format!("{}: {e}", path.display())))?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Mutex::new(file),
        })
    }

    fn get(&self, key: &str) -> Option<(String, FinishReason)> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    fn put(&self, key: &str, request: &CompletionRequest, text: &str, finish: FinishReason) {
        let record = CacheRecord {
            key: key.to_string(),
            model_id: request.model_id.clone(),
            prompt: request.prompt.clone(),
            completion: text.to_string(),
            finish_reason: finish,
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let line = serde_json::to_string(&record).expect("serializable record");
        {
            let mut file = self.file.lock().expect("cache file lock");
            // One write call per record keeps lines atomic enough for the
            // skip-corrupt loader.
            let _ = file.write_all(format!("{line}\n").as_bytes());
            let _ = file.flush();
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key.to_string(), (text.to_string(), finish));
    }
}

// ─── Mock fixtures ──────────────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
struct FixtureEntry {
    /// Exact prompt hash to match (preferred when known).
    #[serde(default)]
    prompt_sha256: Option<String>,
    /// Substring of the prompt to match (convenient for hand-written
    /// fixtures keyed on the question text).
    #[serde(default)]
    contains: Option<String>,
    completion: String,
}

struct MockFixtures {
    entries: Vec<FixtureEntry>,
}

impl MockFixtures {
    fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| {
                GatewayError::Fixture(format!("{} line {}: {e}", path.display(), i + 1))
            })?;
            if entry.prompt_sha256.is_none() && entry.contains.is_none() {
                return Err(GatewayError::Fixture(format!(
                    "{} line {}: entry needs prompt_sha256 or contains",
                    path.display(),
                    i + 1
                )));
            }
            entries.push(entry);
        }
        Ok(MockFixtures { entries })
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        let hash = prompt_sha256(prompt);
        // Hash matches are exact and take precedence over substring matches.
        for entry in &self.entries {
            if entry.prompt_sha256.as_deref() == Some(hash.as_str()) {
                return Some(&entry.completion);
            }
        }
        for entry in &self.entries {
            if entry.contains.as_deref().is_some_and(|c| prompt.contains(c)) {
                return Some(&entry.completion);
            }
        }
        None
    }
}

// ─── Semaphore ──────────────────────────────────────────────────────────────

/// Counting semaphore bounding in-flight backend requests.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Semaphore {
            permits: Mutex::new(permits.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().expect("semaphore lock");
        while *permits == 0 {
            permits = self.cv.wait(permits).expect("semaphore wait");
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().expect("semaphore lock");
        *permits += 1;
        self.semaphore.cv.notify_one();
    }
}

// ─── Gateway ────────────────────────────────────────────────────────────────

pub struct Gateway {
    config: BackendConfig,
    cache: Option<ResponseCache>,
    mock: Option<MockFixtures>,
    client: reqwest::blocking::Client,
    slots: Semaphore,
}

impl Gateway {
    /// Build a gateway. HTTP backends fail fast if the auth variable is
    /// unset; the mock backend loads its fixture file eagerly.
    pub fn new(config: BackendConfig, cache_dir: Option<&Path>) -> Result<Self, GatewayError> {
        let mock = match config.kind {
            BackendKind::Mock => {
                let path = config.fixture_path.as_ref().ok_or_else(|| {
                    GatewayError::Fixture("mock backend needs a fixture_path".to_string())
                })?;
                Some(MockFixtures::load(path)?)
            }
            _ => {
                if config.auth_env_var.is_empty()
                    || std::env::var(&config.auth_env_var).is_err()
                {
                    return Err(GatewayError::AuthMissing(config.auth_env_var.clone()));
                }
                None
            }
        };
        let cache = cache_dir.map(ResponseCache::open).transpose()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let slots = Semaphore::new(config.max_parallel);
        Ok(Gateway {
            config,
            cache,
            mock,
            client,
            slots,
        })
    }

    /// Issue one completion, consulting the cache first. Identical requests
    /// return identical completions for the life of the cache.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".to_string()));
        }
        if request.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be at least 1".to_string(),
            ));
        }
        let key = request_cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some((text, finish)) = cache.get(&key) {
                return Ok(CompletionResult {
                    text,
                    finish_reason: finish,
                    latency_ms: 0,
                    cached: true,
                });
            }
        }

        let _slot = self.slots.acquire();
        let start = Instant::now();
        let (text, finish) = match self.config.kind {
            BackendKind::Mock => {
                let fixtures = self.mock.as_ref().expect("mock fixtures loaded in new()");
                let text = fixtures
                    .lookup(&request.prompt)
                    .ok_or_else(|| GatewayError::MockMiss(prompt_sha256(&request.prompt)))?;
                (text.to_string(), FinishReason::Stop)
            }
            BackendKind::HttpCompletions | BackendKind::HttpChat => self.http_complete(request)?,
        };
        let latency_ms = start.elapsed().as_millis() as u64;
        if let Some(cache) = &self.cache {
            cache.put(&key, request, &text, finish);
        }
        Ok(CompletionResult {
            text,
            finish_reason: finish,
            latency_ms,
            cached: false,
        })
    }

    fn http_complete(
        &self,
        request: &CompletionRequest,
    ) -> Result<(String, FinishReason), GatewayError> {
        let auth = std::env::var(&self.config.auth_env_var)
            .map_err(|_| GatewayError::AuthMissing(self.config.auth_env_var.clone()))?;
        let body = match self.config.kind {
            BackendKind::HttpCompletions => serde_json::json!({
                "model": request.model_id,
                "prompt": request.prompt,
                "max_tokens": request.max_output_tokens,
                "temperature": request.temperature,
                "stop": request.stop_sequences,
            }),
            BackendKind::HttpChat => serde_json::json!({
                "model": request.model_id,
                "messages": [{"role": "user", "content": request.prompt}],
                "max_tokens": request.max_output_tokens,
                "temperature": request.temperature,
                "stop": request.stop_sequences,
            }),
            BackendKind::Mock => unreachable!("mock handled by caller"),
        };

        let attempts = self.config.max_retries + 1;
        let mut last_retryable: Option<GatewayError> = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(backoff_delay(self.config.retry_base_ms, attempt - 1));
            }
            let sent = self
                .client
                .post(&self.config.endpoint_url)
                .bearer_auth(&auth)
                .json(&body)
                .send();
            match sent {
                Err(e) if e.is_timeout() => {
                    last_retryable = Some(GatewayError::Timeout { attempts });
                }
                Err(e) => return Err(GatewayError::Transport(e.to_string())),
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response.text().unwrap_or_default();
                    if status == 429 || status >= 500 {
                        last_retryable = Some(GatewayError::RateLimitedExhausted { attempts });
                        continue;
                    }
                    if status == 400 && looks_like_token_limit(&text) {
                        return Err(GatewayError::TokenLimitExceeded(truncate_detail(&text)));
                    }
                    if status != 200 {
                        return Err(GatewayError::Http {
                            status,
                            detail: truncate_detail(&text),
                        });
                    }
                    return parse_http_completion(self.config.kind, &text);
                }
            }
        }
        Err(last_retryable.unwrap_or(GatewayError::Timeout { attempts }))
    }
}

/// Exponential backoff with jitter: `base * 2^attempt` plus up to 25% of the
/// base, so synchronized clients spread out.
fn backoff_delay(base_ms: u64, attempt: u32) -> Duration {
    let exp = base_ms.saturating_mul(1u64 << attempt.min(16));
    let jitter = pseudo_jitter() % (base_ms / 4 + 1);
    Duration::from_millis(exp + jitter)
}

/// Cheap jitter source that avoids threading an RNG through the gateway.
fn pseudo_jitter() -> u64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.subsec_nanos() as u64)
        .unwrap_or(0)
}

fn looks_like_token_limit(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("context length")
        || lower.contains("context_length")
        || lower.contains("maximum context")
        || lower.contains("too many tokens")
        || lower.contains("token limit")
}

fn truncate_detail(body: &str) -> String {
    let trimmed = body.trim();
    if trimmed.chars().count() > 300 {
        let cut: String = trimmed.chars().take(300).collect();
        format!("{cut}…")
    } else {
        trimmed.to_string()
    }
}

fn parse_http_completion(
    kind: BackendKind,
    body: &str,
) -> Result<(String, FinishReason), GatewayError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| GatewayError::BadResponse(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| GatewayError::BadResponse("missing choices[0]".to_string()))?;
    let text = match kind {
        BackendKind::HttpCompletions => choice.get("text").and_then(|t| t.as_str()),
        BackendKind::HttpChat => choice
            .get("message")
            .and_then(|m| m.get("content"))
            .and_then(|t| t.as_str()),
        BackendKind::Mock => unreachable!("mock never parses HTTP"),
    }
    .ok_or_else(|| GatewayError::BadResponse("missing completion text".to_string()))?;
    let finish = match choice.get("finish_reason").and_then(|f| f.as_str()) {
        Some("stop") => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };
    Ok((text.to_string(), finish))
}

// ─── Tests ──────────────────────────────────────────────────────────────────
