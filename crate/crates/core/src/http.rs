//! HTTP client for logprob-capable completion endpoints.
//!
//! Two wire protocols are supported. The OpenAI-compatible one scores each
//! candidate with a completions call using echo + logprobs, summing the
//! logprobs of the tokens that start at or after the forced-prefix boundary.
//! The native one sends the whole candidate list to a scoring endpoint and
//! trusts its probabilities. Queries are idempotent reads, so transport
//! failures and retryable statuses (429, 5xx) are retried with exponential
//! backoff before giving up.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use crate::backend::{Backend, BackendConfig, ContinuationQuery, ContinuationResult, WireProtocol};
use crate::error::BackendError;
use crate::prompt::{ApproxTokenCounter, TokenCount, TokenCounter};

#[derive(Debug)]
pub struct HttpBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    auth_token: Option<String>,
}

enum PostError {
    Retryable(String),
    Fatal(BackendError),
}

#[derive(Deserialize)]
struct CompletionsResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    logprobs: Option<EchoLogprobs>,
}

#[derive(Deserialize)]
struct EchoLogprobs {
    token_logprobs: Vec<Option<f64>>,
    text_offset: Vec<usize>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    probabilities: Vec<f64>,
    #[serde(default)]
    other_mass: Option<f64>,
}

impl HttpBackend {
    pub fn new(config: BackendConfig) -> Result<HttpBackend, BackendError> {
        config.validate()?;
        let auth_token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("auth environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            config,
            client,
            auth_token,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.config.endpoint.trim_end_matches('/'))
    }

    fn try_post(&self, url: &str, body: &Value) -> Result<Value, PostError> {
        let mut request = self.client.post(url).json(body);
        if let Some(token) = &self.auth_token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| PostError::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| PostError::Retryable(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(PostError::Retryable(format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err(PostError::Fatal(BackendError::Config(format!(
                "{url} answered {status}: {text}"
            ))));
        }
        serde_json::from_str(&text).map_err(|e| {
            PostError::Fatal(BackendError::Capability(format!(
                "{url} returned non-JSON body: {e}"
            )))
        })
    }

    fn post_json(&self, url: &str, body: &Value) -> Result<Value, BackendError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let message = match self.try_post(url, body) {
                Ok(value) => return Ok(value),
                Err(PostError::Fatal(err)) => return Err(err),
                Err(PostError::Retryable(message)) => message,
            };
            if attempt >= self.config.retry.max_attempts {
                return Err(BackendError::Transport {
                    attempts: attempt,
                    message,
                });
            }
            let backoff = self.config.retry.initial_backoff_ms << (attempt - 1);
            thread::sleep(Duration::from_millis(backoff));
        }
    }

    fn with_model(&self, mut body: Value) -> Value {
        if let Some(model) = &self.config.model {
            body["model"] = Value::String(model.clone());
        }
        body
    }

    /// Probability of one candidate as the continuation of the prefix, via
    /// echoed logprobs. Tokens straddling the prefix boundary are counted
    /// with the prefix, which can only lose candidate mass, never invent it.
    fn score_candidate(&self, prefix: &str, candidate: &str) -> Result<f64, BackendError> {
        let body = self.with_model(json!({
            "prompt": format!("{prefix}{candidate}"),
            "max_tokens": 0,
            "echo": true,
            "logprobs": 0,
        }));
        let raw = self.post_json(&self.url("/v1/completions"), &body)?;
        let parsed: CompletionsResponse = serde_json::from_value(raw)
            .map_err(|e| BackendError::Capability(format!("unexpected completions shape: {e}")))?;
        let logprobs = parsed
            .choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .ok_or_else(|| {
                BackendError::Capability(
                    "endpoint returned no logprobs for an echoed prompt".into(),
                )
            })?;
        if logprobs.token_logprobs.len() != logprobs.text_offset.len() {
            return Err(BackendError::Capability(
                "token_logprobs and text_offset lengths differ".into(),
            ));
        }
        let boundary = prefix.len();
        let mut total = 0.0;
        let mut scored = 0;
        for (lp, &offset) in logprobs.token_logprobs.iter().zip(&logprobs.text_offset) {
            if offset < boundary {
                continue;
            }
            let lp = lp.ok_or_else(|| BackendError::Candidate {
                candidate: candidate.to_string(),
                message: "missing logprob at the forced position".into(),
            })?;
            total += lp;
            scored += 1;
        }
        if scored == 0 {
            return Err(BackendError::Candidate {
                candidate: candidate.to_string(),
                message: "no tokens start at the forced position".into(),
            });
        }
        Ok(total.exp())
    }

    fn query_native(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        let body = self.with_model(json!({
            "prefix": q.prefix,
            "candidates": q.candidates,
        }));
        let raw = self.post_json(&self.url("/score"), &body)?;
        let parsed: ScoreResponse = serde_json::from_value(raw)
            .map_err(|e| BackendError::Capability(format!("unexpected score shape: {e}")))?;
        if parsed.probabilities.len() != q.candidates.len() {
            return Err(BackendError::Capability(format!(
                "endpoint scored {} of {} candidates",
                parsed.probabilities.len(),
                q.candidates.len()
            )));
        }
        let other_mass = parsed
            .other_mass
            .unwrap_or_else(|| (1.0 - parsed.probabilities.iter().sum::<f64>()).max(0.0));
        Ok(ContinuationResult {
            probabilities: parsed.probabilities,
            other_mass,
        })
    }
}

impl Backend for HttpBackend {
    fn query(&self, q: &ContinuationQuery) -> Result<ContinuationResult, BackendError> {
        q.validate()?;
        match self.config.protocol {
            WireProtocol::NativeScore => self.query_native(q),
            WireProtocol::OpenAiCompletions => {
                let probabilities: Vec<f64> = q
                    .candidates
                    .iter()
                    .map(|c| self.score_candidate(&q.prefix, c))
                    .collect::<Result<_, _>>()?;
                let other_mass = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
                Ok(ContinuationResult {
                    probabilities,
                    other_mass,
                })
            }
        }
    }

    fn count_tokens(&self, text: &str) -> TokenCount {
        if let Some(url) = &self.config.tokenize_endpoint {
            let body = self.with_model(json!({ "text": text }));
            if let Ok(value) = self.post_json(url, &body) {
                if let Some(count) = value.get("count").and_then(Value::as_u64) {
                    return TokenCount {
                        count: count as usize,
                        approximate: false,
                    };
                }
            }
        }
        ApproxTokenCounter.count(text)
    }
}
