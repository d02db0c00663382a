//! Prover policy: prompt rendering, completion generation, proof extraction.

mod extract;
mod prompt;
mod remote;

pub use extract::{extract_proof, fenced_blocks, FencedBlock, NoLeanCodeFound};
pub use prompt::{render_prompt, PromptBundle, MAX_PROMPT_TOKENS, PROMPT_TEMPLATE};
pub use remote::RemotePolicy;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_response_tokens: usize,
    /// Only honored by scripted/simulated clients.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            top_p: 0.999,
            max_response_tokens: 32_000,
            seed: None,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(format!("top_p must lie in [0, 1], got {}", self.top_p));
        }
        if !(self.temperature >= 0.0) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_response_tokens == 0 {
            return Err("max_response_tokens must be positive".into());
        }
        Ok(())
    }
}

/// Everything a client may condition on for one completion.
#[derive(Debug, Clone)]
pub struct GenerateRequest<'a> {
    pub statement_id: &'a str,
    pub sample_index: u32,
    pub round_index: u32,
    pub seed: u64,
    pub prompt: &'a str,
    pub params: &'a SamplingParams,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum PolicyError {
    #[error("policy unavailable: {0}")]
    Unavailable(String),
}

/// A completion source. Implementations must tolerate concurrent calls and
/// keep no per-session state between them.
pub trait PolicyClient: Send + Sync {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<String, PolicyError>;
}

impl<P: PolicyClient + ?Sized> PolicyClient for Arc<P> {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<String, PolicyError> {
        (**self).generate(request)
    }
}

/// One completion for `request`, cut to `max_response_tokens` tokens.
pub fn generate(client: &dyn PolicyClient, request: &GenerateRequest<'_>) -> Result<String, PolicyError> {
    let text = client.generate(request)?;
    Ok(crate::tokenize::truncate_tokens(&text, request.params.max_response_tokens).to_string())
}
