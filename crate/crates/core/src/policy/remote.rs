use serde::{Deserialize, Serialize};

use super::{GenerateRequest, PolicyClient, PolicyError};
use crate::http::{Endpoint, JsonClient};

#[derive(Serialize)]
struct GenerateBody<'a> {
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Chat-completion style endpoint speaking `POST /generate`.
pub struct RemotePolicy {
    client: JsonClient,
    model: Option<String>,
}

impl RemotePolicy {
    pub fn new(endpoint: Endpoint, model: Option<String>) -> Result<Self, PolicyError> {
        let client = JsonClient::new(endpoint).map_err(|e| PolicyError::Unavailable(e.to_string()))?;
        Ok(RemotePolicy { client, model })
    }
}

impl PolicyClient for RemotePolicy {
    fn generate(&self, request: &GenerateRequest<'_>) -> Result<String, PolicyError> {
        let body = GenerateBody {
            prompt: request.prompt,
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            max_tokens: request.params.max_response_tokens,
            model: self.model.as_deref(),
        };
        let resp: GenerateResponse = self
            .client
            .post("generate", &body, None)
            .map_err(|e| PolicyError::Unavailable(e.to_string()))?;
        // servers count tokens their own way; enforce the cap in ours
        Ok(crate::tokenize::truncate_tokens(&resp.text, request.params.max_response_tokens).to_string())
    }
}
