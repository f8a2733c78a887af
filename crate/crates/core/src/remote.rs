//! Blocking JSON-over-HTTP plumbing shared by the remote model clients:
//! bounded exponential backoff and a process-local rate limiter.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

use crate::net::{self, NetworkForbidden};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error(transparent)]
    Forbidden(#[from] NetworkForbidden),
    #[error("endpoint unavailable: {0}")]
    Unavailable(String),
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl RemoteError {
    /// Connection failures, timeouts, 429 and 5xx are worth another attempt.
    pub fn is_transient(&self) -> bool {
        match self {
            RemoteError::Unavailable(_) => true,
            RemoteError::Status { code, .. } => *code == 429 || *code >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 4, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy { max_attempts: 1, ..Default::default() }
    }

    /// Delay before attempt `attempt` (1-based; the first attempt has none).
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt <= 1 {
            return Duration::ZERO;
        }
        let factor = 1u32.checked_shl(attempt - 2).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Spaces calls at least `min_interval` apart across all holders.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter { min_interval, next_slot: Mutex::new(None) }
    }

    pub fn per_second(rate: f64) -> Self {
        if rate <= 0.0 || !rate.is_finite() {
            return RateLimiter::new(Duration::ZERO);
        }
        RateLimiter::new(Duration::from_secs_f64(1.0 / rate))
    }

    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.min_interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    agent: ureq::Agent,
    url: String,
    headers: Vec<(String, String)>,
    retry: RetryPolicy,
    limiter: Arc<RateLimiter>,
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build();
        JsonEndpoint {
            agent: ureq::Agent::new_with_config(config),
            url: url.into(),
            headers: Vec::new(),
            retry: RetryPolicy::default(),
            limiter: Arc::new(RateLimiter::new(Duration::ZERO)),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    /// Same agent and policies, different path.
    pub fn join(&self, path: &str) -> Self {
        let mut next = self.clone();
        next.url = format!("{}/{}", self.url.trim_end_matches('/'), path.trim_start_matches('/'));
        next
    }

    fn send_once(&self, method: &str, body: Option<&Value>) -> Result<Value, RemoteError> {
        net::ensure_allowed(&self.url)?;
        self.limiter.acquire();
        let result = match body {
            Some(body) => {
                let mut req = self.agent.post(&self.url);
                for (k, v) in &self.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.send_json(body)
            }
            None => {
                debug_assert_eq!(method, "GET");
                let mut req = self.agent.get(&self.url);
                for (k, v) in &self.headers {
                    req = req.header(k.as_str(), v.as_str());
                }
                req.call()
            }
        };
        let mut response = result.map_err(|e| RemoteError::Unavailable(e.to_string()))?;
        let code = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| RemoteError::Unavailable(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(RemoteError::Status { code, body: text });
        }
        serde_json::from_str(&text).map_err(|e| RemoteError::Malformed(e.to_string()))
    }

    fn with_retries(&self, method: &str, body: Option<&Value>) -> Result<Value, RemoteError> {
        let mut attempt = 1;
        loop {
            std::thread::sleep(self.retry.delay_before(attempt));
            match self.send_once(method, body) {
                Err(e) if e.is_transient() && attempt < self.retry.max_attempts => {
                    log::warn!("{} attempt {attempt} failed: {e}", self.url);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    pub fn post(&self, body: &Value) -> Result<Value, RemoteError> {
        self.with_retries("POST", Some(body))
    }

    pub fn get(&self) -> Result<Value, RemoteError> {
        self.with_retries("GET", None)
    }
}
