//! Run configuration. Sources are layered: defaults for the chosen profile,
//! then the TOML file, then `PROVER_*` environment variables, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prover_core::engine::{DEFAULT_K_RETRIEVAL, EVAL_ROUND_BUDGET, RL_ROUND_BUDGET};
use prover_core::policy::MAX_PROMPT_TOKENS;
use prover_core::retrieval::HASHING_DIM;
use prover_core::verifier::{EVAL_HEARTBEAT_CAP, EVAL_TIMEOUT_MS, RL_HEARTBEAT_CAP, RL_TIMEOUT_MS};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";

/// Invalid configuration or arguments; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Eval,
    Rl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PolicyBackend {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VerifierBackend {
    Simulated,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderBackend {
    Test,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub policy: PolicyBackend,
    pub verifier: VerifierBackend,
    pub embedder: EmbedderBackend,
    /// World spec backing the scripted policy and simulated verifier; the
    /// built-in 20-statement world when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub world: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy_url: Option<String>,
    /// Per-iteration policy endpoints for `coevolve`; the last one repeats.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub policy_urls: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verifier_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embed_url: Option<String>,
    /// Never written back out.
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub embed_dim: usize,
    pub round_budget: u32,
    pub n_samples: u32,
    pub k_retrieval: usize,
    pub parallelism: usize,
    pub seed: u64,
    pub max_prompt_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub max_response_tokens: usize,
    pub timeout_ms: u64,
    pub heartbeat_cap: u64,
    pub max_in_flight: usize,
}

impl RunConfig {
    pub fn defaults(profile: Profile) -> Self {
        let (round_budget, timeout_ms, heartbeat_cap) = match profile {
            Profile::Eval => (EVAL_ROUND_BUDGET, EVAL_TIMEOUT_MS, EVAL_HEARTBEAT_CAP),
            Profile::Rl => (RL_ROUND_BUDGET, RL_TIMEOUT_MS, RL_HEARTBEAT_CAP),
        };
        RunConfig {
            profile,
            policy: PolicyBackend::Scripted,
            verifier: VerifierBackend::Simulated,
            embedder: EmbedderBackend::Test,
            world: None,
            policy_url: None,
            policy_urls: Vec::new(),
            model: None,
            verifier_url: None,
            embed_url: None,
            api_key: None,
            embed_dim: HASHING_DIM,
            round_budget,
            n_samples: 8,
            k_retrieval: DEFAULT_K_RETRIEVAL,
            parallelism: 4,
            seed: 0,
            max_prompt_tokens: MAX_PROMPT_TOKENS,
            temperature: 1.0,
            top_p: 0.999,
            max_response_tokens: 32_000,
            timeout_ms,
            heartbeat_cap,
            max_in_flight: 16,
        }
    }

    fn apply(&mut self, p: Partial) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = p.$f { self.$f = v; } )* };
        }
        macro_rules! take_opt {
            ($($f:ident),*) => { $( if p.$f.is_some() { self.$f = p.$f; } )* };
        }
        take!(
            policy, verifier, embedder, policy_urls, embed_dim, round_budget, n_samples,
            k_retrieval, parallelism, seed, max_prompt_tokens, temperature, top_p,
            max_response_tokens, timeout_ms, heartbeat_cap, max_in_flight
        );
        take_opt!(world, policy_url, model, verifier_url, embed_url, api_key);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.round_budget == 0 {
            return bad("round_budget must be at least 1".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be at least 1".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.top_p) || !(self.top_p > 0.0) {
            return bad(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if !(self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.policy == PolicyBackend::Remote && self.policy_url.is_none() && self.policy_urls.is_empty() {
            return bad("remote policy needs policy_url (or PROVER_POLICY_URL)".into());
        }
        if self.verifier == VerifierBackend::Remote && self.verifier_url.is_none() {
            return bad("remote verifier needs verifier_url (or PROVER_VERIFIER_URL)".into());
        }
        if self.embedder == EmbedderBackend::Remote && self.embed_url.is_none() {
            return bad("remote embedder needs embed_url (or PROVER_EMBED_URL)".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the effective configuration into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RESOLVED_CONFIG_FILE), self.to_toml())?;
        Ok(())
    }
}

/// One configuration layer; unset keys fall through to the layer below.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partial {
    pub profile: Option<Profile>,
    pub policy: Option<PolicyBackend>,
    pub verifier: Option<VerifierBackend>,
    pub embedder: Option<EmbedderBackend>,
    pub world: Option<PathBuf>,
    pub policy_url: Option<String>,
    pub policy_urls: Option<Vec<String>>,
    pub model: Option<String>,
    pub verifier_url: Option<String>,
    pub embed_url: Option<String>,
    pub api_key: Option<String>,
    pub embed_dim: Option<usize>,
    pub round_budget: Option<u32>,
    pub n_samples: Option<u32>,
    pub k_retrieval: Option<usize>,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
    pub max_prompt_tokens: Option<usize>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub max_response_tokens: Option<usize>,
    pub timeout_ms: Option<u64>,
    pub heartbeat_cap: Option<u64>,
    pub max_in_flight: Option<usize>,
}

impl Partial {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))
    }

    pub fn from_env(get: impl Fn(&str) -> Option<String>) -> Self {
        let non_empty = |k: &str| get(k).filter(|v| !v.is_empty());
        Partial {
            policy_url: non_empty("PROVER_POLICY_URL"),
            verifier_url: non_empty("PROVER_VERIFIER_URL"),
            embed_url: non_empty("PROVER_EMBED_URL"),
            api_key: non_empty("PROVER_API_KEY"),
            ..Partial::default()
        }
    }
}

/// Flags > env > file > profile defaults. The profile itself is taken from
/// the highest layer that sets it.
pub fn resolve(file: Option<Partial>, env: Partial, flags: Partial) -> Result<RunConfig, ConfigError> {
    let profile = flags
        .profile
        .or(env.profile)
        .or(file.as_ref().and_then(|f| f.profile))
        .unwrap_or(Profile::Eval);
    let mut cfg = RunConfig::defaults(profile);
    if let Some(f) = file {
        cfg.apply(f);
    }
    cfg.apply(env);
    cfg.apply(flags);
    cfg.validate()?;
    Ok(cfg)
}
