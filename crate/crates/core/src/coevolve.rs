//! The outer data loop: roll out over a statement pool, route the results,
//! grow the proof corpus, and re-index it for the next iteration.
//!
//! The policy is not trained here. Callers close the loop by pointing later
//! iterations at an updated policy (see [`run_coevolution`]'s `policies`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, Corpus, CorpusError, RepairExample, TheoremStatement, VerifiedProof};
use crate::engine::{partition_aborted, run_batch, BatchConfig, BatchError, Services, Trajectory};
use crate::policy::PolicyClient;
use crate::repair::{extract_and_dedup, RepairFilterReport};
use crate::retrieval::{EmbeddingProvider, MemoryStore, RetrievalError};
use crate::rl::{assign_rewards, build_groups, format_check, select_hard_cases, RewardedGroup};
use crate::verifier::Verifier;

pub const NEW_PROOFS_FILE: &str = "new_proofs.jsonl";
pub const ITER_REPAIRS_FILE: &str = "repairs.jsonl";
pub const HARD_CASES_FILE: &str = "hard_cases.txt";
pub const REPORT_FILE: &str = "report.json";
pub const ABORTED_FILE: &str = "aborted.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum CoevolveError {
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("batch: {0}")]
    Batch(#[from] BatchError),
    #[error("all {0} rollouts aborted: {1}")]
    AllAborted(usize, String),
    #[error("io on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("K must be at least 1")]
    NoIterations,
    #[error("no policy supplied")]
    NoPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoevolveConfig {
    pub batch: BatchConfig,
    /// Remove statements solved by every rollout from the next pool.
    #[serde(default)]
    pub drop_solved: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub pool_size: usize,
    pub rollouts: usize,
    pub aborted: usize,
    pub new_verified: usize,
    pub repair_examples: usize,
    pub hard_cases: usize,
    pub corpus_size_before: usize,
    pub corpus_size_after: usize,
    pub index_snapshot_before: u64,
    pub index_snapshot_after: u64,
    pub index_size_after: usize,
    pub repair_filter: RepairFilterReport,
}

/// What one iteration's rollouts feed back into.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Routing {
    pub verified_proofs: Vec<VerifiedProof>,
    pub repair_examples: Vec<RepairExample>,
    pub repair_filter: RepairFilterReport,
    pub hard_case_ids: Vec<String>,
}

/// Verified final proofs go to the proof set, repairs come only from
/// successful rollouts, and partially solved groups become hard cases.
pub fn route_rollouts(trajectories: &[Trajectory], groups: &[RewardedGroup], iteration: u32) -> Routing {
    let verified: Vec<&Trajectory> = trajectories.iter().filter(|t| t.is_verified()).collect();
    let verified_proofs = verified
        .iter()
        .filter_map(|t| {
            t.final_proof().map(|r| {
                VerifiedProof::new(
                    t.statement_id.clone(),
                    r.attempt.clone(),
                    iteration,
                    format!("rollout {} round {}", t.key(), r.round_index),
                )
            })
        })
        .collect();
    let (repair_examples, repair_filter) = extract_and_dedup(verified.iter().copied());
    Routing {
        verified_proofs,
        repair_examples,
        repair_filter,
        hard_case_ids: select_hard_cases(groups),
    }
}

/// Everything produced by one iteration.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub report: IterationReport,
    pub routing: Routing,
    pub trajectories: Vec<Trajectory>,
    pub aborted: Vec<Trajectory>,
    pub groups: Vec<RewardedGroup>,
}

pub fn iteration_dir(corpus_dir: &Path, iteration: u32) -> PathBuf {
    corpus_dir.join(format!("iter_{iteration}"))
}

/// One pass of the loop. The pool is rolled out against the snapshot pinned
/// at entry; the corpus and index change only after all rollouts finish.
pub fn run_iteration(
    iteration: u32,
    pool: &[TheoremStatement],
    corpus: &mut Corpus,
    memory: &MemoryStore,
    services: Services<'_>,
    config: &CoevolveConfig,
) -> Result<IterationOutput, CoevolveError> {
    corpus.add_statements(pool.iter().cloned())?;
    let snapshot = memory.pin();
    let corpus_size_before = corpus.proofs().len();

    let (all, _) = run_batch(pool, &snapshot, services, &config.batch)?;
    let rollouts = all.len();
    let (mut trajectories, aborted) = partition_aborted(all);
    if rollouts > 0 && trajectories.is_empty() {
        let reason = aborted
            .first()
            .and_then(|t| t.abort_reason.clone())
            .unwrap_or_default();
        return Err(CoevolveError::AllAborted(rollouts, reason));
    }
    if !aborted.is_empty() {
        log::warn!("iteration {iteration}: {} of {rollouts} rollouts aborted", aborted.len());
    }
    for t in &mut trajectories {
        assign_rewards(t, &format_check);
    }
    let groups = build_groups(&trajectories, &format_check);
    let routing = route_rollouts(&trajectories, &groups, iteration);

    let delta = corpus.ingest_verified(routing.verified_proofs.iter().cloned())?;
    corpus.append_trajectories(&trajectories)?;
    corpus.append_repairs(&routing.repair_examples)?;
    let index = if delta.added > 0 || snapshot.len() != corpus.proofs().len() {
        memory.rebuild(corpus, services.embedder)?
    } else {
        snapshot.clone()
    };

    let report = IterationReport {
        iteration,
        pool_size: pool.len(),
        rollouts,
        aborted: aborted.len(),
        new_verified: delta.added,
        repair_examples: routing.repair_examples.len(),
        hard_cases: routing.hard_case_ids.len(),
        corpus_size_before,
        corpus_size_after: corpus.proofs().len(),
        index_snapshot_before: snapshot.snapshot_id(),
        index_snapshot_after: index.snapshot_id(),
        index_size_after: index.len(),
        repair_filter: routing.repair_filter,
    };
    let out = IterationOutput {
        report,
        routing,
        trajectories,
        aborted,
        groups,
    };
    if let Some(dir) = corpus.dir() {
        write_iteration(&iteration_dir(dir, iteration), &out)?;
    }
    log::info!(
        "iteration {iteration}: {} new proofs, {} repairs, {} hard cases",
        out.report.new_verified,
        out.report.repair_examples,
        out.report.hard_cases
    );
    Ok(out)
}

fn write_iteration(dir: &Path, out: &IterationOutput) -> Result<(), CoevolveError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CoevolveError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_jsonl(&dir.join(NEW_PROOFS_FILE), &out.routing.verified_proofs)?;
    write_jsonl(&dir.join(ITER_REPAIRS_FILE), &out.routing.repair_examples)?;
    write_jsonl(&dir.join(ABORTED_FILE), &out.aborted)?;
    let hard: String = out.routing.hard_case_ids.iter().map(|id| format!("{id}\n")).collect();
    let p = dir.join(HARD_CASES_FILE);
    fs::write(&p, hard).map_err(io(&p))?;
    let p = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&out.report).expect("report serializes");
    fs::write(&p, json + "\n").map_err(io(&p))?;
    Ok(())
}

/// Result of a multi-iteration run; on failure the completed iterations are
/// kept alongside the error.
#[derive(Debug)]
pub struct CoevolveRun {
    pub reports: Vec<IterationReport>,
    pub error: Option<(u32, CoevolveError)>,
}

/// `iterations` passes of [`run_iteration`]. Iteration `k` uses
/// `policies[min(k, len - 1)]`.
#[allow(clippy::too_many_arguments)]
pub fn run_coevolution(
    iterations: u32,
    pool: &[TheoremStatement],
    corpus: &mut Corpus,
    memory: &MemoryStore,
    policies: &[&dyn PolicyClient],
    verifier: &dyn Verifier,
    embedder: &dyn EmbeddingProvider,
    config: &CoevolveConfig,
) -> Result<CoevolveRun, CoevolveError> {
    if iterations == 0 {
        return Err(CoevolveError::NoIterations);
    }
    if policies.is_empty() {
        return Err(CoevolveError::NoPolicy);
    }
    let mut pool: Vec<TheoremStatement> = pool.iter().cloned().map(|s| s.with_content_id()).collect();
    let mut reports = Vec::new();
    for k in 0..iterations {
        let services = Services {
            policy: policies[(k as usize).min(policies.len() - 1)],
            verifier,
            embedder,
        };
        match run_iteration(k, &pool, corpus, memory, services, config) {
            Ok(out) => {
                if config.drop_solved {
                    let solved: Vec<&str> = out
                        .groups
                        .iter()
                        .filter(|g| g.n_rollouts > 0 && g.success_count == g.n_rollouts)
                        .map(|g| g.statement_id.as_str())
                        .collect();
                    pool.retain(|s| !solved.contains(&s.id.as_str()));
                }
                reports.push(out.report);
            }
            Err(e) => {
                return Ok(CoevolveRun {
                    reports,
                    error: Some((k, e)),
                })
            }
        }
    }
    Ok(CoevolveRun { reports, error: None })
}
