//! Provider-agnostic text completion.
//!
//! A [`Gateway`] wraps one [`CompletionBackend`] with a shared rate limiter
//! and exponential-backoff retries for transient failures. Backends are
//! either a remote HTTP completion endpoint or a scripted mock.

mod limiter;
mod mock;
mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limiter::{RateLimit, RateLimiter};
pub use mock::{FnBackend, ScriptEntry, ScriptedMock};
pub use remote::RemoteHttp;

use crate::error::{Error, Result};

/// Temperature for the first sampling pass.
pub const FIRST_PASS_TEMPERATURE: f64 = 0.7;
/// Temperature for the single re-request of a no-answer completion.
pub const RETRY_TEMPERATURE: f64 = 1.0;
pub const FEW_SHOT_MAX_TOKENS: u32 = 100;
pub const COT_MAX_TOKENS: u32 = 150;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub presence_penalty: f64,
    pub frequency_penalty: f64,
    pub n: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: FIRST_PASS_TEMPERATURE,
            max_tokens: FEW_SHOT_MAX_TOKENS,
            presence_penalty: 0.0,
            frequency_penalty: 0.0,
            n: 1,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn max_tokens(mut self, m: u32) -> Self {
        self.max_tokens = m;
        self
    }

    pub fn n(mut self, n: u32) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::Request(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(Error::Request("max_tokens must be positive".into()));
        }
        if self.n == 0 {
            return Err(Error::Request("n must be positive".into()));
        }
        Ok(())
    }

    pub fn prompt_hash(&self) -> String {
        crate::sha256_hex(&self.prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub texts: Vec<String>,
    pub backend_id: String,
    #[serde(with = "millis")]
    pub latency: Duration,
    pub raw_payload: String,
    /// Transport retries spent before this result.
    pub retries: u32,
}

mod millis {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

/// Raw output of a single backend call.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCompletion {
    pub texts: Vec<String>,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transient transport failure: {0}")]
    Transient(String),
    #[error("rate limited by backend")]
    RateLimited,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed backend payload: {0}")]
    Malformed(String),
    #[error("request rejected with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no scripted completion for prompt {0}")]
    Unscripted(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<BackendError> },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transient(_) | BackendError::RateLimited)
    }
}

/// One completion provider. Implementations must be callable from many threads.
pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> String;
    fn call(&self, request: &CompletionRequest) -> std::result::Result<RawCompletion, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn call(&self, request: &CompletionRequest) -> std::result::Result<RawCompletion, BackendError> {
        (**self).call(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): initial * 2^retry, capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BackendKind {
    RemoteHttp {
        endpoint: String,
        model: String,
        /// Name of the environment variable holding the API key.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
    },
    ScriptedMock {
        script: std::path::PathBuf,
    },
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    #[serde(flatten)]
    pub kind: BackendKind,
    #[serde(default)]
    pub rate_limit: RateLimit,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl BackendSpec {
    pub fn scripted(script: impl Into<std::path::PathBuf>) -> Self {
        Self {
            kind: BackendKind::ScriptedMock { script: script.into() },
            rate_limit: RateLimit::default(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.kind, BackendKind::ScriptedMock { .. })
    }
}

/// One first-pass sample or its temperature retry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleAttempt {
    pub sample_index: u32,
    /// 0 for the first pass, 1 for the temperature retry.
    pub attempt: u32,
    pub temperature: f64,
    pub text: String,
    pub backend_id: String,
    pub transport_retries: u32,
}

pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    limiter: RateLimiter,
    retry: RetryPolicy,
    calls: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl CompletionBackend + 'static, rate_limit: RateLimit, retry: RetryPolicy) -> Self {
        Self {
            backend: Box::new(backend),
            limiter: RateLimiter::new(rate_limit),
            retry,
            calls: AtomicU64::new(0),
        }
    }

    /// Builds the backend described by `spec`. Relative mock script paths
    /// resolve against the working directory.
    pub fn from_spec(spec: &BackendSpec) -> Result<Self> {
        let backend: Box<dyn CompletionBackend> = match &spec.kind {
            BackendKind::ScriptedMock { script } => Box::new(ScriptedMock::load(script)?),
            BackendKind::RemoteHttp {
                endpoint,
                model,
                api_key_env,
                timeout_secs,
            } => {
                let key = match api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| {
                        Error::Backend(BackendError::Auth(format!("environment variable {var} is not set")))
                    })?),
                    None => None,
                };
                Box::new(RemoteHttp::new(endpoint, model, key, Duration::from_secs(*timeout_secs))?)
            }
        };
        Ok(Self {
            backend,
            limiter: RateLimiter::new(spec.rate_limit),
            retry: spec.retry,
            calls: AtomicU64::new(0),
        })
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    /// Backend invocations so far, including failed and retried ones.
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Sends `request`, retrying transient failures with exponential backoff.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult> {
        request.validate()?;
        let started = Instant::now();
        let mut retries = 0u32;
        loop {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                self.backend.call(request)
            };
            match outcome {
                Ok(raw) => {
                    if raw.texts.len() != request.n as usize {
                        return Err(BackendError::Malformed(format!(
                            "asked for {} completions, got {}",
                            request.n,
                            raw.texts.len()
                        ))
                        .into());
                    }
                    return Ok(CompletionResult {
                        texts: raw.texts,
                        backend_id: self.backend.id(),
                        latency: started.elapsed(),
                        raw_payload: raw.payload,
                        retries,
                    });
                }
                Err(err) if err.is_retryable() && retries < self.retry.max_retries => {
                    let delay = self.retry.backoff(retries);
                    tracing::warn!(%err, retry = retries + 1, ?delay, "retrying completion");
                    std::thread::sleep(delay);
                    retries += 1;
                }
                Err(err) if err.is_retryable() => {
                    return Err(BackendError::RetriesExhausted {
                        attempts: retries + 1,
                        last: Box::new(err),
                    }
                    .into())
                }
                Err(err) => return Err(err.into()),
            }
        }
    }

    /// Requests `n` completions at the first-pass temperature, then
    /// re-requests each one `is_no_answer` flags exactly once at
    /// [`RETRY_TEMPERATURE`]. Both attempts are returned, ordered by
    /// (sample_index, attempt).
    pub fn sample_answers_with_retry(
        &self,
        prompt: &str,
        max_tokens: u32,
        n: u32,
        is_no_answer: impl Fn(&str) -> bool,
    ) -> Result<Vec<SampleAttempt>> {
        if n == 0 {
            return Err(Error::Request("n must be at least 1".into()));
        }
        let first = self.complete(
            &CompletionRequest::new(prompt)
                .temperature(FIRST_PASS_TEMPERATURE)
                .max_tokens(max_tokens)
                .n(n),
        )?;
        let mut attempts = Vec::new();
        for (idx, text) in first.texts.iter().enumerate() {
            attempts.push(SampleAttempt {
                sample_index: idx as u32,
                attempt: 0,
                temperature: FIRST_PASS_TEMPERATURE,
                text: text.clone(),
                backend_id: first.backend_id.clone(),
                transport_retries: first.retries,
            });
            if is_no_answer(text) {
                let retry = self.complete(
                    &CompletionRequest::new(prompt)
                        .temperature(RETRY_TEMPERATURE)
                        .max_tokens(max_tokens)
                        .n(1),
                )?;
                attempts.push(SampleAttempt {
                    sample_index: idx as u32,
                    attempt: 1,
                    temperature: RETRY_TEMPERATURE,
                    text: retry.texts.into_iter().next().unwrap_or_default(),
                    backend_id: retry.backend_id,
                    transport_retries: retry.retries,
                });
            }
        }
        Ok(attempts)
    }
}
