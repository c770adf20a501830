//! Completion client for a remote language model over HTTP.
//!
//! One batch is one `POST` carrying `n`; the server returns up to `n`
//! choices. Replies continue the prompt, so extraction falls back to treating
//! a reply as the body of the requested header.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{extract_with_header, CandidateBatch, GenerationError, GenerationRequest, Generator, GeneratorParams};

pub const API_KEY_VAR: &str = "CTRLSYNTH_API_KEY";
pub const ENDPOINT_VAR: &str = "CTRLSYNTH_ENDPOINT";
pub const GENERATOR_ID: &str = "remote";

/// Exponential retry schedule for transport failures and 5xx replies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backoff {
    pub initial: Duration,
    pub factor: f64,
    /// Retries after the first attempt.
    pub max_retries: u32,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            initial: Duration::from_millis(500),
            factor: 2.0,
            max_retries: 3,
        }
    }
}

impl Backoff {
    /// Delay before retry `k` (0-based).
    pub fn delay(&self, k: u32) -> Duration {
        self.initial.mul_f64(self.factor.powi(k as i32))
    }
}

#[derive(Debug, Serialize)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub temperature: f64,
    pub top_p: f64,
    pub repeat_penalty_window: usize,
    pub max_tokens: usize,
    pub n: usize,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    message: Option<Message>,
}

#[derive(Debug, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl Choice {
    fn into_text(self) -> Option<String> {
        self.text.or_else(|| self.message.and_then(|m| m.content))
    }
}

/// Texts of the choices in a response body; `None` for choices with neither
/// `text` nor `message.content`.
pub fn parse_response(body: &str) -> Result<Vec<Option<String>>, GenerationError> {
    let resp: CompletionResponse =
        serde_json::from_str(body).map_err(|e| GenerationError::Malformed(e.to_string()))?;
    Ok(resp.choices.into_iter().map(Choice::into_text).collect())
}

#[derive(Debug)]
pub struct RemoteGenerator {
    params: GeneratorParams,
    backoff: Backoff,
    agent: ureq::Agent,
}

impl RemoteGenerator {
    pub fn new(params: GeneratorParams, backoff: Backoff, max_connections: usize) -> Result<Self, GenerationError> {
        params.validate()?;
        if params.endpoint.is_none() {
            return Err(GenerationError::Config(format!(
                "remote generator needs an endpoint: set {ENDPOINT_VAR} or pass endpoint=<url>"
            )));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .max_idle_connections_per_host(max_connections.max(1))
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Ok(RemoteGenerator { params, backoff, agent })
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    /// Sends one request, retrying transport failures and 5xx replies.
    /// Returns the response body of the first 2xx reply.
    fn post(&self, body: &CompletionRequest<'_>) -> Result<String, GenerationError> {
        let url = self.params.endpoint.as_deref().unwrap_or_default();
        let mut last_status = None;
        let mut message = String::new();
        let attempts = self.backoff.max_retries + 1;
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff.delay(attempt - 1));
            }
            let mut req = self.agent.post(url).header("Content-Type", "application/json");
            if let Some(key) = &self.params.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    match status {
                        200..=299 => {
                            return resp
                                .body_mut()
                                .read_to_string()
                                .map_err(|e| GenerationError::Malformed(e.to_string()));
                        }
                        401 | 403 => return Err(GenerationError::Auth { status }),
                        500..=599 => {
                            last_status = Some(status);
                            message = format!("server error {status}");
                        }
                        _ => {
                            return Err(GenerationError::Transport {
                                attempts: attempt + 1,
                                last_status: Some(status),
                                message: format!("unexpected status {status}"),
                            })
                        }
                    }
                }
                Err(e) => message = e.to_string(),
            }
            debug!(attempt, %message, "completion request failed");
        }
        Err(GenerationError::Transport {
            attempts,
            last_status,
            message,
        })
    }
}

impl Generator for RemoteGenerator {
    fn id(&self) -> &str {
        GENERATOR_ID
    }

    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<CandidateBatch, GenerationError> {
        let mut batch = CandidateBatch {
            sources: Vec::new(),
            failures: 0,
            prompt_lineage: req.prompt.lineage,
            generator_id: GENERATOR_ID.into(),
        };
        if req.n == 0 {
            return Ok(batch);
        }
        let body = CompletionRequest {
            model: &self.params.model_id,
            prompt: &req.prompt.text,
            temperature: self.params.temperature,
            top_p: self.params.top_p,
            repeat_penalty_window: self.params.repeat_last_n,
            max_tokens: self.params.max_tokens,
            n: req.n,
        };
        let replies = parse_response(&self.post(&body)?)?;
        for reply in replies.into_iter().take(req.n) {
            match reply.map(|r| extract_with_header(&r, &req.prompt.target_header)) {
                Some(Ok(src)) => batch.sources.push(src),
                _ => batch.failures += 1,
            }
        }
        batch.failures = req.n - batch.sources.len();
        if batch.failures > 0 {
            warn!(failures = batch.failures, "replies without an extractable policy");
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule() {
        let b = Backoff {
            initial: Duration::from_millis(100),
            factor: 2.0,
            max_retries: 3,
        };
        assert_eq!(b.delay(0), Duration::from_millis(100));
        assert_eq!(b.delay(2), Duration::from_millis(400));
    }

    #[test]
    fn response_shapes() {
        let t = parse_response(r#"{"choices":[{"text":"a"},{"message":{"content":"b"}},{}]}"#).unwrap();
        assert_eq!(t, vec![Some("a".into()), Some("b".into()), None]);
        assert!(matches!(parse_response("not json"), Err(GenerationError::Malformed(_))));
        assert!(matches!(parse_response(r#"{"data":[]}"#), Err(GenerationError::Malformed(_))));
    }

    #[test]
    fn request_field_names() {
        let body = CompletionRequest {
            model: "m",
            prompt: "p",
            temperature: 1.0,
            top_p: 0.95,
            repeat_penalty_window: 15,
            max_tokens: 512,
            n: 4,
        };
        let v = serde_json::to_value(&body).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["max_tokens", "model", "n", "prompt", "repeat_penalty_window", "temperature", "top_p"]
        );
    }

    #[test]
    fn missing_endpoint_is_config_error() {
        let err = RemoteGenerator::new(GeneratorParams::default(), Backoff::default(), 1).unwrap_err();
        assert!(err.to_string().contains(ENDPOINT_VAR));
    }
}
