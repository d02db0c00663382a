use std::sync::Arc;

use anyhow::Context;

use prover_core::engine::{BatchConfig, RolloutConfig};
use prover_core::fixtures::{self, load_world_spec, make_world};
use prover_core::http::Endpoint;
use prover_core::policy::{PolicyClient, RemotePolicy, SamplingParams};
use prover_core::retrieval::{EmbeddingProvider, HashingEmbedder, RemoteEmbedder};
use prover_core::verifier::{InFlightLimit, RemoteVerifier, RemoteVerifierConfig, Verifier};

use crate::config::{ConfigError, EmbedderBackend, PolicyBackend, RunConfig, VerifierBackend};

pub struct Backends {
    /// One per coevolution iteration; the last repeats.
    pub policies: Vec<Arc<dyn PolicyClient>>,
    pub verifier: Arc<dyn Verifier>,
    pub embedder: Arc<dyn EmbeddingProvider>,
}

impl Backends {
    pub fn policy(&self) -> &dyn PolicyClient {
        self.policies[0].as_ref()
    }

    pub fn policy_refs(&self) -> Vec<&dyn PolicyClient> {
        self.policies.iter().map(|p| p.as_ref()).collect()
    }
}

pub fn build(cfg: &RunConfig) -> anyhow::Result<Backends> {
    let needs_world = cfg.policy == PolicyBackend::Scripted || cfg.verifier == VerifierBackend::Simulated;
    let world = if needs_world {
        Some(match &cfg.world {
            Some(path) => {
                let spec = load_world_spec(path).map_err(|e| ConfigError(format!("world spec: {e}")))?;
                make_world(&spec).map_err(|e| ConfigError(format!("world spec: {e}")))?
            }
            None => fixtures::world20(),
        })
    } else {
        None
    };
    let endpoint = |url: &str| Endpoint::new(url, cfg.api_key.clone());

    let policies: Vec<Arc<dyn PolicyClient>> = match cfg.policy {
        PolicyBackend::Scripted => vec![Arc::new(world.as_ref().expect("world loaded").policy.clone())],
        PolicyBackend::Remote => {
            let urls: Vec<&String> = if cfg.policy_urls.is_empty() {
                cfg.policy_url.iter().collect()
            } else {
                cfg.policy_urls.iter().collect()
            };
            urls.into_iter()
                .map(|u| {
                    RemotePolicy::new(endpoint(u), cfg.model.clone())
                        .map(|p| Arc::new(p) as Arc<dyn PolicyClient>)
                        .with_context(|| format!("policy endpoint {u}"))
                })
                .collect::<anyhow::Result<_>>()?
        }
    };
    let verifier: Arc<dyn Verifier> = match cfg.verifier {
        VerifierBackend::Simulated => Arc::new(world.as_ref().expect("world loaded").verifier.clone()),
        VerifierBackend::Remote => {
            let url = cfg.verifier_url.as_deref().expect("validated");
            let mut vc = RemoteVerifierConfig::new(endpoint(url));
            vc.heartbeat_cap = cfg.heartbeat_cap;
            let remote = RemoteVerifier::new(vc).context("verifier endpoint")?;
            Arc::new(InFlightLimit::new(remote, cfg.max_in_flight))
        }
    };
    let embedder: Arc<dyn EmbeddingProvider> = match cfg.embedder {
        EmbedderBackend::Test => Arc::new(HashingEmbedder::new(cfg.embed_dim)),
        EmbedderBackend::Remote => {
            let url = cfg.embed_url.as_deref().expect("validated");
            Arc::new(RemoteEmbedder::new(endpoint(url), cfg.embed_dim).context("embedding endpoint")?)
        }
    };
    Ok(Backends {
        policies,
        verifier,
        embedder,
    })
}

pub fn rollout_config(cfg: &RunConfig) -> RolloutConfig {
    RolloutConfig {
        round_budget: cfg.round_budget,
        k_retrieval: cfg.k_retrieval,
        max_prompt_tokens: cfg.max_prompt_tokens,
        timeout_ms: cfg.timeout_ms,
        params: SamplingParams {
            temperature: cfg.temperature,
            top_p: cfg.top_p,
            max_response_tokens: cfg.max_response_tokens,
            seed: Some(cfg.seed),
        },
    }
}

pub fn batch_config(cfg: &RunConfig) -> BatchConfig {
    BatchConfig {
        n_samples: cfg.n_samples,
        parallelism: cfg.parallelism,
        run_seed: cfg.seed,
        rollout: rollout_config(cfg),
    }
}
