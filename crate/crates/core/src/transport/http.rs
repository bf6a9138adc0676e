use std::time::Duration;

use log::warn;
use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as Json};

use super::types::{CompletionRequest, TokenDistribution};
use super::{CompletionModel, TransportError};

pub const DEFAULT_API_KEY_ENV: &str = "RISKBENCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_secs: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_backoff_secs: 1.0,
        }
    }
}

impl RetryPolicy {
    /// Exponential backoff with up to 100% multiplicative jitter.
    pub fn delay(&self, attempt: u32) -> Duration {
        let base = self.base_backoff_secs * 2f64.powi(attempt.saturating_sub(1) as i32);
        let jitter: f64 = rand::rng().random_range(0.0..1.0);
        Duration::from_secs_f64((base * (1.0 + jitter)).max(0.0))
    }
}

/// Where and how to reach a completions endpoint. The API key is read from
/// the environment variable named by `api_key_env`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}
fn default_in_flight() -> usize {
    8
}
fn default_timeout() -> f64 {
    60.0
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: default_key_env(),
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.max_in_flight < 1 {
            return Err(TransportError::Config("max_in_flight must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(TransportError::Config("timeout must be positive".into()));
        }
        if self.retry.max_attempts < 1 {
            return Err(TransportError::Config("retry.max_attempts must be at least 1".into()));
        }
        reqwest::Url::parse(&self.base_url)
            .map_err(|e| TransportError::Config(format!("bad base_url {}: {e}", self.base_url)))?;
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Client for a `POST {base_url}/completions` endpoint that returns
/// per-position top-k log-probabilities.
#[derive(Debug)]
pub struct HttpCompletionModel {
    config: EndpointConfig,
    client: Client,
    api_key: Option<String>,
}

enum Attempt {
    Done(Result<Vec<TokenDistribution>, TransportError>),
    Retry(TransportError),
}

impl HttpCompletionModel {
    pub fn new(config: EndpointConfig) -> Result<Self, TransportError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let client = Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::Config(e.to_string()))?;
        Ok(Self {
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn attempt(&self, request: &CompletionRequest) -> Attempt {
        let body = json!({
            "model": request.model_id,
            "prompt": request.prompt,
            "max_tokens": request.max_generated_tokens,
            "logprobs": request.top_k_logprobs,
            "temperature": 0,
        });
        let mut req = self.client.post(self.config.completions_url()).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(TransportError::Endpoint(e.to_string())),
        };
        let status = resp.status();
        let text = match resp.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(TransportError::Endpoint(e.to_string())),
        };
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(TransportError::RateLimited {
                attempts: 0,
            });
        }
        if status.is_server_error() {
            return Attempt::Retry(TransportError::Endpoint(format!("HTTP {status}: {}", truncate(&text))));
        }
        if !status.is_success() {
            return Attempt::Done(Err(TransportError::Http {
                status: status.as_u16(),
                body: truncate(&text),
            }));
        }
        Attempt::Done(
            serde_json::from_str::<Json>(&text)
                .map_err(|e| TransportError::Malformed(format!("response is not JSON: {e}")))
                .and_then(|v| parse_completion_response(&v, request.max_generated_tokens as usize)),
        )
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(300).collect()
}

impl CompletionModel for HttpCompletionModel {
    fn complete(&self, request: &CompletionRequest) -> Result<Vec<TokenDistribution>, TransportError> {
        request.validate()?;
        let max = self.config.retry.max_attempts;
        let mut attempt = 1;
        loop {
            match self.attempt(request) {
                Attempt::Done(r) => return r,
                Attempt::Retry(err) => {
                    if attempt >= max {
                        return Err(match err {
                            TransportError::RateLimited { .. } => {
                                TransportError::RateLimited { attempts: attempt }
                            }
                            TransportError::Endpoint(msg) => TransportError::Endpoint(format!(
                                "{msg} (after {attempt} attempts)"
                            )),
                            other => other,
                        });
                    }
                    let delay = self.config.retry.delay(attempt);
                    warn!("completion attempt {attempt} failed ({err}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }
}

/// Reads per-position top-k distributions from a completions response.
///
/// Accepts the legacy shape (`choices[0].logprobs.top_logprobs`, a list of
/// token → logprob maps) and the chat shape (`choices[0].logprobs.content`,
/// a list of `{top_logprobs: [{token, logprob}]}`).
pub fn parse_completion_response(
    body: &Json,
    max_positions: usize,
) -> Result<Vec<TokenDistribution>, TransportError> {
    let no_logprobs = || TransportError::Capability("endpoint does not expose logprobs".into());
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::Malformed("response has no choices".into()))?;
    let logprobs = choice.get("logprobs").filter(|l| !l.is_null()).ok_or_else(no_logprobs)?;

    let mut out = Vec::new();
    if let Some(top) = logprobs.get("top_logprobs").and_then(Json::as_array) {
        for (pos, map) in top.iter().take(max_positions).enumerate() {
            let map = map.as_object().ok_or_else(no_logprobs)?;
            let entries = map
                .iter()
                .map(|(t, lp)| lp.as_f64().map(|lp| (t.clone(), lp)).ok_or_else(no_logprobs))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(TokenDistribution::from_logprobs(pos, entries)?);
        }
    } else if let Some(content) = logprobs.get("content").and_then(Json::as_array) {
        for (pos, item) in content.iter().take(max_positions).enumerate() {
            let top = item.get("top_logprobs").and_then(Json::as_array).ok_or_else(no_logprobs)?;
            let entries = top
                .iter()
                .map(|e| {
                    let tok = e.get("token").and_then(Json::as_str);
                    let lp = e.get("logprob").and_then(Json::as_f64);
                    tok.zip(lp).map(|(t, l)| (t.to_string(), l)).ok_or_else(no_logprobs)
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(TokenDistribution::from_logprobs(pos, entries)?);
        }
    }
    if out.is_empty() || out.iter().all(|d| d.entries().is_empty()) {
        return Err(no_logprobs());
    }
    Ok(out)
}
