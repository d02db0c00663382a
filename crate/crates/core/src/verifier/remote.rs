use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{elapsed_ms, Verdict, Verifier, VerifierError, VerifyRequest, EVAL_HEARTBEAT_CAP};
use crate::http::{Endpoint, HttpError, JsonClient};

#[derive(Debug, Clone)]
pub struct RemoteVerifierConfig {
    pub endpoint: Endpoint,
    pub heartbeat_cap: u64,
    /// Opaque backend flags forwarded untouched (e.g. proof reconstruction).
    pub options: Option<Value>,
    /// Extra slack on top of the proof timeout for transport overhead.
    pub grace_ms: u64,
}

impl RemoteVerifierConfig {
    pub fn new(endpoint: Endpoint) -> Self {
        RemoteVerifierConfig {
            endpoint,
            heartbeat_cap: EVAL_HEARTBEAT_CAP,
            options: None,
            grace_ms: 5_000,
        }
    }
}

#[derive(Serialize)]
struct VerifyBody<'a> {
    proof: &'a str,
    timeout_ms: u64,
    heartbeat_cap: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    options: Option<&'a Value>,
}

#[derive(Deserialize)]
struct VerifyResponse {
    verified: bool,
    #[serde(default)]
    diagnostics: String,
    #[serde(default)]
    elapsed_ms: Option<u64>,
}

/// Client for a Lean server speaking `POST /verify`.
pub struct RemoteVerifier {
    client: JsonClient,
    config: RemoteVerifierConfig,
}

impl RemoteVerifier {
    pub fn new(config: RemoteVerifierConfig) -> Result<Self, VerifierError> {
        let client = JsonClient::new(config.endpoint.clone())
            .map_err(|e| VerifierError::Unavailable(e.to_string()))?;
        Ok(RemoteVerifier { client, config })
    }
}

impl Verifier for RemoteVerifier {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        if request.proof_text.trim().is_empty() {
            return Err(VerifierError::EmptyProof);
        }
        let body = VerifyBody {
            proof: request.proof_text,
            timeout_ms: request.timeout_ms,
            heartbeat_cap: self.config.heartbeat_cap,
            options: self.config.options.as_ref(),
        };
        let start = Instant::now();
        let wait = Duration::from_millis(request.timeout_ms.saturating_add(self.config.grace_ms));
        match self.client.post::<_, VerifyResponse>("verify", &body, Some(wait)) {
            Ok(resp) => {
                let elapsed = resp.elapsed_ms.unwrap_or_else(|| elapsed_ms(start));
                if elapsed > request.timeout_ms {
                    return Ok(Verdict::timed_out(request.timeout_ms));
                }
                let mut verdict = Verdict::from_backend(resp.verified, &resp.diagnostics, elapsed);
                if !verdict.verified && verdict.feedback.trim().is_empty() {
                    verdict.feedback = "verification failed without diagnostics".to_string();
                }
                Ok(verdict)
            }
            Err(HttpError::Timeout) => Ok(Verdict::timed_out(request.timeout_ms)),
            Err(e) => Err(VerifierError::Unavailable(e.to_string())),
        }
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.client.endpoint().base_url)
    }
}
