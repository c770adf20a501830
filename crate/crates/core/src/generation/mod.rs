//! Prompt construction and candidate generators.
//!
//! A generator turns a prompt (two parent programs and the header of the
//! version to write) into a batch of candidate source texts. Generators never
//! see the database or the environment; their only state is a seed.

mod extract;
pub mod mock;
mod prompt;
pub mod remote;

use std::fmt;

use thiserror::Error;

use crate::policy_lang::PolicyProgram;
use crate::spec_input::RunConfig;

pub use extract::{extract_named, extract_policy, extract_with_header, ExtractionFailure};
pub use mock::{generate_mock, MockGenerator};
pub use prompt::{build_prompt, target_name, Prompt, DEFAULT_DESCRIPTION, IMPROVE_INSTRUCTION, VERSIONS};
pub use remote::{Backoff, RemoteGenerator, API_KEY_VAR, ENDPOINT_VAR};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("generator transport failed after {attempts} attempts (last status {}): {message}",
        .last_status.map_or_else(|| "none".to_string(), |s| s.to_string()))]
    Transport {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("generator rejected credentials (HTTP {status}); check {}", API_KEY_VAR)]
    Auth { status: u16 },
    #[error("malformed generator response: {0}")]
    Malformed(String),
    #[error("generator configuration: {0}")]
    Config(String),
}

/// Sampling parameters forwarded to a remote generator.
#[derive(Clone, PartialEq)]
pub struct GeneratorParams {
    pub temperature: f64,
    pub top_p: f64,
    pub repeat_last_n: usize,
    pub max_tokens: usize,
    pub endpoint: Option<String>,
    pub model_id: String,
    pub api_key: Option<String>,
}

impl fmt::Debug for GeneratorParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorParams")
            .field("temperature", &self.temperature)
            .field("top_p", &self.top_p)
            .field("repeat_last_n", &self.repeat_last_n)
            .field("max_tokens", &self.max_tokens)
            .field("endpoint", &self.endpoint)
            .field("model_id", &self.model_id)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            temperature: 1.0,
            top_p: 0.95,
            repeat_last_n: 15,
            max_tokens: 512,
            endpoint: None,
            model_id: "default".into(),
            api_key: None,
        }
    }
}

impl GeneratorParams {
    /// Parameters from a run configuration. The endpoint falls back to the
    /// environment when the configuration leaves it unset.
    pub fn from_config(cfg: &RunConfig) -> Self {
        GeneratorParams {
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            repeat_last_n: cfg.repeat_last_n,
            max_tokens: cfg.max_tokens,
            endpoint: cfg
                .endpoint
                .clone()
                .or_else(|| std::env::var(ENDPOINT_VAR).ok().filter(|s| !s.is_empty())),
            model_id: cfg.model.clone(),
            api_key: std::env::var(API_KEY_VAR).ok().filter(|s| !s.is_empty()),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GenerationError::Config(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(GenerationError::Config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// One call's worth of candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBatch {
    pub sources: Vec<String>,
    /// Replies from which no policy could be extracted.
    pub failures: usize,
    pub prompt_lineage: (Option<u64>, Option<u64>),
    pub generator_id: String,
}

pub struct GenerationRequest<'a> {
    pub prompt: &'a Prompt,
    pub low: &'a PolicyProgram,
    pub high: &'a PolicyProgram,
    pub n: usize,
    /// Position of this batch in the run; seeds the mock generator.
    pub batch_index: u64,
}

pub trait Generator {
    fn id(&self) -> &str;
    fn generate(&mut self, req: &GenerationRequest<'_>) -> Result<CandidateBatch, GenerationError>;
}
