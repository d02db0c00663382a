//! The bounded multi-round refinement loop and its batch runner.
//!
//! Round `t` conditions on the statement, the retrieved references, and the
//! attempt and feedback of round `t - 1` only. A rollout stops at the first
//! verified attempt or when the round budget is spent.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::corpus::TheoremStatement;
use crate::policy::{self, extract_proof, render_prompt, GenerateRequest, PolicyClient, SamplingParams, MAX_PROMPT_TOKENS};
use crate::retrieval::{query_topk, EmbeddingProvider, MemoryEntry, RetrievalIndex};
use crate::verifier::{Verdict, Verifier, VerifierError, VerifyRequest, EVAL_TIMEOUT_MS};

/// Default round budget for evaluation sweeps.
pub const EVAL_ROUND_BUDGET: u32 = 16;
/// Default round budget for RL-style collection.
pub const RL_ROUND_BUDGET: u32 = 4;
/// Default number of references retrieved per round.
pub const DEFAULT_K_RETRIEVAL: usize = 2;

/// What the policy conditions on at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionState {
    pub statement: TheoremStatement,
    pub retrieved: Vec<MemoryEntry>,
    pub prev_attempt: Option<String>,
    pub prev_feedback: Option<String>,
    pub round_index: u32,
}

impl InteractionState {
    pub fn initial(statement: TheoremStatement, retrieved: Vec<MemoryEntry>) -> Self {
        InteractionState {
            statement,
            retrieved,
            prev_attempt: None,
            prev_feedback: None,
            round_index: 1,
        }
    }

    /// State for the round after `record`; only `record`'s attempt and
    /// feedback carry over.
    pub fn next(&self, record: &RoundRecord, retrieved: Vec<MemoryEntry>) -> Self {
        InteractionState {
            statement: self.statement.clone(),
            retrieved,
            prev_attempt: Some(record.attempt.clone()),
            prev_feedback: Some(record.verdict.feedback.clone()),
            round_index: record.round_index + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    pub retrieved_ids: Vec<String>,
    /// Raw completion, kept so format predicates can be re-applied later.
    pub completion: String,
    /// Extracted proof; empty when the completion had no code block.
    pub attempt: String,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Verified,
    BudgetExhausted,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub statement_id: String,
    pub sample_index: u32,
    pub rounds: Vec<RoundRecord>,
    pub outcome: Outcome,
    pub round_budget: u32,
    /// Memory snapshot every round of this rollout retrieved from.
    #[serde(default)]
    pub snapshot_id: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Trajectory {
    /// `"<statement_id>#<sample_index>"`.
    pub fn key(&self) -> String {
        format!("{}#{}", self.statement_id, self.sample_index)
    }

    pub fn is_verified(&self) -> bool {
        self.outcome == Outcome::Verified
    }

    /// The verified proof, if the rollout succeeded.
    pub fn final_proof(&self) -> Option<&RoundRecord> {
        match self.outcome {
            Outcome::Verified => self.rounds.last(),
            _ => None,
        }
    }

    /// Round at which the rollout verified.
    pub fn success_round(&self) -> Option<u32> {
        self.final_proof().map(|r| r.round_index)
    }

    /// Structural invariants of a finished rollout.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.rounds.len() as u32;
        if n > self.round_budget {
            return Err(format!("{} rounds exceed budget {}", n, self.round_budget));
        }
        if self.outcome != Outcome::Aborted && n == 0 {
            return Err("finished rollout without rounds".into());
        }
        for (i, r) in self.rounds.iter().enumerate() {
            if r.round_index != i as u32 + 1 {
                return Err(format!("round {} has index {}", i + 1, r.round_index));
            }
            let last = i + 1 == self.rounds.len();
            if r.verdict.verified && !last {
                return Err(format!("round {} follows a verified round", i + 2));
            }
            if r.verdict.verified && !r.verdict.failure_tags.is_empty() {
                return Err("verified verdict carries failure tags".into());
            }
        }
        let last_verified = self.rounds.last().is_some_and(|r| r.verdict.verified);
        if (self.outcome == Outcome::Verified) != last_verified {
            return Err(format!("outcome {:?} disagrees with last verdict", self.outcome));
        }
        if self.outcome == Outcome::BudgetExhausted && n != self.round_budget {
            return Err("budget_exhausted before the budget was spent".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub round_budget: u32,
    pub k_retrieval: usize,
    pub max_prompt_tokens: usize,
    pub timeout_ms: u64,
    pub params: SamplingParams,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            round_budget: EVAL_ROUND_BUDGET,
            k_retrieval: DEFAULT_K_RETRIEVAL,
            max_prompt_tokens: MAX_PROMPT_TOKENS,
            timeout_ms: EVAL_TIMEOUT_MS,
            params: SamplingParams::default(),
        }
    }
}

/// Shared backends; all must tolerate concurrent calls.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub policy: &'a dyn PolicyClient,
    pub verifier: &'a dyn Verifier,
    pub embedder: &'a dyn EmbeddingProvider,
}

/// Seed of one rollout, derived from its identity and the run seed.
pub fn rollout_seed(statement_id: &str, sample_index: u32, run_seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(statement_id.as_bytes());
    h.update([0u8]);
    h.update(sample_index.to_le_bytes());
    h.update(run_seed.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Runs one rollout of at most `config.round_budget` rounds against the
/// pinned `snapshot`. Backend outages end the rollout as `Aborted` with the
/// completed rounds kept.
pub fn run_rollout(
    statement: &TheoremStatement,
    sample_index: u32,
    seed: u64,
    snapshot: &RetrievalIndex,
    services: Services<'_>,
    config: &RolloutConfig,
) -> Trajectory {
    let mut trajectory = Trajectory {
        statement_id: statement.id.clone(),
        sample_index,
        rounds: Vec::new(),
        outcome: Outcome::BudgetExhausted,
        round_budget: config.round_budget,
        snapshot_id: snapshot.snapshot_id(),
        seed,
        abort_reason: None,
        extra: Map::new(),
    };
    let abort = |mut t: Trajectory, reason: String| {
        t.outcome = Outcome::Aborted;
        t.abort_reason = Some(reason);
        t
    };

    let mut state: Option<InteractionState> = None;
    for round in 1..=config.round_budget {
        let retrieved = match query_topk(
            snapshot,
            &statement.lean_statement,
            config.k_retrieval,
            services.embedder,
        ) {
            Ok(hits) => hits.into_iter().map(|h| h.entry.clone()).collect::<Vec<_>>(),
            Err(e) => return abort(trajectory, e.to_string()),
        };
        let current = match (&state, trajectory.rounds.last()) {
            (Some(prev), Some(record)) => prev.next(record, retrieved),
            _ => InteractionState::initial(statement.clone(), retrieved),
        };
        debug_assert_eq!(current.round_index, round);

        let prompt = render_prompt(&current, config.max_prompt_tokens);
        let request = GenerateRequest {
            statement_id: &statement.id,
            sample_index,
            round_index: round,
            seed,
            prompt: &prompt.rendered_text,
            params: &config.params,
        };
        let completion = match policy::generate(services.policy, &request) {
            Ok(c) => c,
            Err(e) => return abort(trajectory, e.to_string()),
        };

        let (attempt, verdict) = match extract_proof(&completion) {
            Ok(proof) if !proof.trim().is_empty() => {
                let req = VerifyRequest {
                    statement_id: &statement.id,
                    proof_text: &proof,
                    timeout_ms: config.timeout_ms,
                };
                match services.verifier.verify(&req) {
                    Ok(v) => (proof, v),
                    Err(VerifierError::EmptyProof) => (String::new(), Verdict::no_code()),
                    Err(e) => return abort(trajectory, e.to_string()),
                }
            }
            _ => (String::new(), Verdict::no_code()),
        };

        let verified = verdict.verified;
        trajectory.rounds.push(RoundRecord {
            round_index: round,
            retrieved_ids: current.retrieved.iter().map(|e| e.proof_ref.clone()).collect(),
            completion,
            attempt,
            verdict,
            reward: None,
        });
        state = Some(current);
        if verified {
            trajectory.outcome = Outcome::Verified;
            break;
        }
    }
    trajectory
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub n_samples: u32,
    pub parallelism: usize,
    pub run_seed: u64,
    pub rollout: RolloutConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub statements: usize,
    pub trajectories: usize,
    pub verified: usize,
    pub budget_exhausted: usize,
    pub aborted: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("n_samples must be at least 1")]
    NoSamples,
    #[error("parallelism must be at least 1")]
    NoWorkers,
    #[error("round_budget must be at least 1")]
    NoRounds,
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Runs `n_samples` independent rollouts per statement on a pool of
/// `parallelism` workers. Output is sorted by (statement_id, sample_index)
/// whatever the completion order.
pub fn run_batch(
    statements: &[TheoremStatement],
    snapshot: &RetrievalIndex,
    services: Services<'_>,
    config: &BatchConfig,
) -> Result<(Vec<Trajectory>, BatchReport), BatchError> {
    if config.n_samples == 0 {
        return Err(BatchError::NoSamples);
    }
    if config.parallelism == 0 {
        return Err(BatchError::NoWorkers);
    }
    if config.rollout.round_budget == 0 {
        return Err(BatchError::NoRounds);
    }
    let jobs: Vec<(&TheoremStatement, u32)> = statements
        .iter()
        .flat_map(|s| (0..config.n_samples).map(move |i| (s, i)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| BatchError::Pool(e.to_string()))?;
    let mut trajectories: Vec<Trajectory> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|(s, i)| {
                let seed = rollout_seed(&s.id, *i, config.run_seed);
                run_rollout(s, *i, seed, snapshot, services, &config.rollout)
            })
            .collect()
    });
    trajectories.sort_by(|a, b| {
        a.statement_id
            .cmp(&b.statement_id)
            .then(a.sample_index.cmp(&b.sample_index))
    });

    let mut report = BatchReport {
        statements: statements.len(),
        trajectories: trajectories.len(),
        ..BatchReport::default()
    };
    for t in &trajectories {
        match t.outcome {
            Outcome::Verified => report.verified += 1,
            Outcome::BudgetExhausted => report.budget_exhausted += 1,
            Outcome::Aborted => report.aborted += 1,
        }
    }
    Ok((trajectories, report))
}

/// Splits off aborted rollouts, which are quarantined rather than scored.
pub fn partition_aborted(trajectories: Vec<Trajectory>) -> (Vec<Trajectory>, Vec<Trajectory>) {
    trajectories
        .into_iter()
        .partition(|t| t.outcome != Outcome::Aborted)
}
