//! Uniform chat-completion access.
//!
//! A [`Gateway`] wraps one [`Transport`] (live HTTP, scripted replay or the
//! synthetic respondent) and adds the retry policy, the in-flight cap and the
//! requests-per-minute cap. Gateways are `Send + Sync` and meant to be shared
//! by reference across worker threads.

pub mod fault;
pub mod http;
mod limiter;
pub mod scripted;
pub mod synthetic;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use limiter::{Limiter, Permit};
pub use synthetic::{synth_rating, ItemKey, SyntheticRespondentConfig};

/// Default sampling temperature for every survey and generation call.
pub const DEFAULT_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("adjective {0:?} has no synthetic key entry")]
    UnknownAdjective(String),
    #[error("interrupted: {0}")]
    Interrupted(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GatewayError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Idempotency key; unique per (survey, agent, item) within a run.
    pub request_key: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        if self.request_key.is_empty() {
            return Err(GatewayError::InvalidRequest("request_key must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    Text(String),
    ContentFiltered,
    Refused,
    TransportError(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResult {
    pub outcome: Outcome,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// What a single transport attempt produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Attempt {
    Text(String),
    ContentFiltered,
    Refused,
    /// Timeouts, rate limiting, server errors: retried.
    Transient(String),
    /// Errors a retry cannot fix (bad request, missing script entry).
    Permanent(String),
}

pub trait Transport: Send + Sync {
    /// One attempt. `Err` aborts the caller's whole run.
    fn send(&self, request: &ChatRequest) -> Result<Attempt, GatewayError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, initial_backoff_ms: 500, max_backoff_ms: 30_000, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Retries without sleeping; for scripted and synthetic runs.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, initial_backoff_ms: 0, max_backoff_ms: 0, multiplier: 1.0 }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    pub max_in_flight: usize,
    pub requests_per_minute: Option<u32>,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_in_flight: 8, requests_per_minute: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http(http::HttpConfig),
    Scripted { path: PathBuf },
    Synthetic(synthetic::SyntheticFiles),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub backend: BackendConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub limits: Limits,
}

pub struct Gateway {
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Limiter,
}

impl Gateway {
    pub fn new(transport: Arc<dyn Transport>, retry: RetryPolicy, limits: Limits) -> Result<Self, GatewayError> {
        Ok(Self { transport, retry, limiter: Limiter::new(&limits)? })
    }

    pub fn from_config(config: &GatewayConfig) -> Result<Self, GatewayError> {
        let transport: Arc<dyn Transport> = match &config.backend {
            BackendConfig::Http(cfg) => Arc::new(http::HttpTransport::new(cfg)?),
            BackendConfig::Scripted { path } => Arc::new(scripted::ScriptedTransport::from_file(path)?),
            BackendConfig::Synthetic(files) => Arc::new(synthetic::SyntheticTransport::from_files(files)?),
        };
        Self::new(transport, config.retry.clone(), config.limits.clone())
    }

    pub fn limits(&self) -> &Limiter {
        &self.limiter
    }

    /// Issues `request`, retrying transient failures with exponential backoff.
    ///
    /// Content-filter hits and refusals are returned on first sight. After
    /// `max_retries` failed retries the last transport error is surfaced as
    /// [`Outcome::TransportError`].
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResult, GatewayError> {
        request.validate()?;
        let started = Instant::now();
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            let attempt = {
                let _permit = self.limiter.acquire();
                self.transport.send(request)?
            };
            let outcome = match attempt {
                Attempt::Text(text) if !text.trim().is_empty() => Outcome::Text(text),
                Attempt::Text(_) => {
                    if let Some(delay) = self.next_delay(attempts) {
                        log::debug!("{}: empty completion, retrying", request.request_key);
                        std::thread::sleep(delay);
                        continue;
                    }
                    Outcome::TransportError("empty completion".into())
                }
                Attempt::ContentFiltered => Outcome::ContentFiltered,
                Attempt::Refused => Outcome::Refused,
                Attempt::Permanent(detail) => Outcome::TransportError(detail),
                Attempt::Transient(detail) => {
                    if let Some(delay) = self.next_delay(attempts) {
                        log::debug!("{}: {detail}; retry {attempts}", request.request_key);
                        std::thread::sleep(delay);
                        continue;
                    }
                    Outcome::TransportError(detail)
                }
            };
            return Ok(ChatResult {
                outcome,
                latency_ms: started.elapsed().as_millis() as u64,
                attempt_count: attempts,
            });
        }
    }

    fn next_delay(&self, attempts_so_far: u32) -> Option<Duration> {
        (attempts_so_far <= self.retry.max_retries).then(|| self.retry.backoff(attempts_so_far))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Sequence(Mutex<Vec<Attempt>>);

    impl Transport for Sequence {
        fn send(&self, _: &ChatRequest) -> Result<Attempt, GatewayError> {
            let mut q = self.0.lock().unwrap();
            Ok(if q.len() > 1 { q.remove(0) } else { q[0].clone() })
        }
    }

    fn request() -> ChatRequest {
        ChatRequest {
            system_prompt: "sys".into(),
            user_prompt: "user".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 64,
            request_key: "s:0:kind".into(),
        }
    }

    fn gateway(seq: Vec<Attempt>, retries: u32) -> Gateway {
        Gateway::new(Arc::new(Sequence(Mutex::new(seq))), RetryPolicy::immediate(retries), Limits::default())
            .unwrap()
    }

    #[test]
    fn transient_failures_are_retried() {
        let gw = gateway(
            vec![
                Attempt::Transient("timeout".into()),
                Attempt::Transient("timeout".into()),
                Attempt::Transient("timeout".into()),
                Attempt::Text("Very Accurate".into()),
            ],
            5,
        );
        let res = gw.complete(&request()).unwrap();
        assert_eq!(res.outcome, Outcome::Text("Very Accurate".into()));
        assert_eq!(res.attempt_count, 4);
    }

    #[test]
    fn retries_exhaust_into_transport_error() {
        let gw = gateway(vec![Attempt::Transient("503".into())], 5);
        let res = gw.complete(&request()).unwrap();
        assert_eq!(res.outcome, Outcome::TransportError("503".into()));
        assert_eq!(res.attempt_count, 6);
    }

    #[test]
    fn filtered_and_refused_are_not_retried() {
        for (attempt, outcome) in [
            (Attempt::ContentFiltered, Outcome::ContentFiltered),
            (Attempt::Refused, Outcome::Refused),
            (Attempt::Permanent("400".into()), Outcome::TransportError("400".into())),
        ] {
            let gw = gateway(vec![attempt, Attempt::Text("late".into())], 5);
            let res = gw.complete(&request()).unwrap();
            assert_eq!(res.outcome, outcome);
            assert_eq!(res.attempt_count, 1);
        }
    }

    #[test]
    fn empty_text_is_never_returned() {
        let gw = gateway(vec![Attempt::Text("  ".into())], 2);
        let res = gw.complete(&request()).unwrap();
        assert!(matches!(res.outcome, Outcome::TransportError(_)));
        assert_eq!(res.attempt_count, 3);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let gw = gateway(vec![Attempt::Text("x".into())], 0);
        let mut req = request();
        req.temperature = 2.5;
        assert!(matches!(gw.complete(&req), Err(GatewayError::InvalidRequest(_))));
        let mut req = request();
        req.user_prompt.clear();
        assert!(matches!(gw.complete(&req), Err(GatewayError::InvalidRequest(_))));
        let mut req = request();
        req.max_tokens = 0;
        assert!(matches!(gw.complete(&req), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let policy = RetryPolicy { max_retries: 5, initial_backoff_ms: 100, max_backoff_ms: 1_000, multiplier: 2.0 };
        let delays: Vec<u64> = (1..=5).map(|r| policy.backoff(r).as_millis() as u64).collect();
        assert_eq!(delays, vec![100, 200, 400, 800, 1_000]);
    }

    #[test]
    fn backend_config_parses_from_json() {
        let cfg: GatewayConfig = serde_json::from_str(
            r#"{"backend": {"kind": "scripted", "path": "script.json"}, "limits": {"max_in_flight": 2}}"#,
        )
        .unwrap();
        assert_eq!(cfg.backend, BackendConfig::Scripted { path: "script.json".into() });
        assert_eq!(cfg.limits.max_in_flight, 2);
        assert_eq!(cfg.retry.max_retries, 5);
        assert!(serde_json::from_str::<GatewayConfig>(r#"{"backend": {"kind": "carrier-pigeon"}}"#).is_err());
    }
}
