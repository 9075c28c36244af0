//! Blocking HTTP/JSON client shared by the grounding and embedding services.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Environment variable holding the text-generation (grounding) service URL.
pub const GROUNDING_URL_ENV: &str = "SEMREC_GROUNDING_URL";
/// Bearer token for the grounding service.
pub const GROUNDING_TOKEN_ENV: &str = "SEMREC_GROUNDING_TOKEN";
/// Environment variable holding the embedding service URL.
pub const EMBEDDING_URL_ENV: &str = "SEMREC_EMBEDDING_URL";
/// Bearer token for the embedding service.
pub const EMBEDDING_TOKEN_ENV: &str = "SEMREC_EMBEDDING_TOKEN";

/// Exponential backoff: attempt `n` (0-based) waits `base * factor^(n-1)`
/// before being issued.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay slept before attempt `attempt` (0-based). Zero for the first.
    pub fn delay_before(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            return Duration::ZERO;
        }
        self.base_delay
            .mul_f64(self.factor.powi(attempt.saturating_sub(1) as i32))
    }
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
        }
    }

    /// Reads the endpoint from `url_var`, with an optional token in
    /// `token_var`. Returns `None` when the URL variable is unset or blank.
    pub fn from_env(url_var: &str, token_var: &str) -> Option<Self> {
        let url = std::env::var(url_var).ok()?;
        if url.trim().is_empty() {
            return None;
        }
        let mut cfg = Self::new(url.trim());
        cfg.token = std::env::var(token_var).ok().filter(|t| !t.is_empty());
        Some(cfg)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CallError {
    /// The service rejected the request (4xx other than 429); not retried.
    #[error("service rejected request with status {status}")]
    Rejected { status: u16 },
    #[error("service unavailable after {attempts} attempts: {last}")]
    Unavailable { attempts: u32, last: String },
    #[error("malformed service response: {0}")]
    Decode(String),
}

/// POST `body` as JSON and decode the JSON response, retrying transient
/// failures (transport errors, 429, 5xx) according to the endpoint's policy.
pub fn post_json<B, R>(endpoint: &EndpointConfig, body: &B) -> Result<R, CallError>
where
    B: Serialize,
    R: DeserializeOwned,
{
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .build()
        .into();
    let attempts = endpoint.retry.attempts.max(1);
    let mut last = String::new();
    for attempt in 0..attempts {
        let delay = endpoint.retry.delay_before(attempt);
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
        let mut req = agent.post(&endpoint.url);
        if let Some(token) = &endpoint.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => {
                return resp
                    .body_mut()
                    .read_json::<R>()
                    .map_err(|e| CallError::Decode(e.to_string()));
            }
            Err(ureq::Error::StatusCode(status)) if (400..500).contains(&status) && status != 429 => {
                return Err(CallError::Rejected { status });
            }
            Err(e) => {
                log::warn!("{} attempt {} failed: {e}", endpoint.url, attempt + 1);
                last = e.to_string();
            }
        }
    }
    Err(CallError::Unavailable { attempts, last })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_doubles_from_base() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay_before(0), Duration::ZERO);
        assert_eq!(p.delay_before(1), Duration::from_secs(1));
        assert_eq!(p.delay_before(2), Duration::from_secs(2));
        assert_eq!(p.delay_before(3), Duration::from_secs(4));
    }
}
