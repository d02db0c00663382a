//! Deterministic simulated worlds: statements, canonical solutions, defect
//! patterns, and a scripted policy that follows a per-statement program.
//!
//! A world spec is JSONL, one record per statement:
//!
//! ```json
//! {"statement": "theorem t : 1 + 1 = 2", "success_round": 2,
//!  "solved_samples": 3, "defect_sequence": ["BAD_TYPE"],
//!  "format_ok_sequence": [true, false]}
//! ```
//!
//! `solution` defaults to the statement followed by `:= by simp`. Samples
//! with index below `solved_samples` (all, if absent) succeed from
//! `success_round` on; the rest fail every round. Failing round `t` emits
//! `defect_sequence[(t - 1) % len]`, which is a marker from
//! [`DefectPattern::catalog`] or one of [`NO_CODE`] and [`EMPTY`].

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_jsonl, Source, TheoremStatement};
use crate::policy::{extract_proof, GenerateRequest, PolicyClient, PolicyError};
use crate::verifier::{DefectPattern, SimulatedVerifier, Verifier, VerifyRequest};

/// Defect marker: a prose-only completion with no code block.
pub const NO_CODE: &str = "NO_CODE";
/// Defect marker: an empty lean block.
pub const EMPTY: &str = "EMPTY";

pub const WORLD20_SPEC: &str = include_str!("../fixtures/world20.jsonl");
pub const CASE_A_SPEC: &str = include_str!("../fixtures/case_a.jsonl");

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("spec line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("statement {id}: {message}")]
    Inconsistent { id: String, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpecRecord {
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success_round: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solved_samples: Option<u32>,
    #[serde(default)]
    pub defect_sequence: Vec<String>,
    #[serde(default)]
    pub format_ok_sequence: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedBehavior {
    pub statement_id: String,
    pub statement: String,
    pub solution: String,
    pub success_round: Option<u32>,
    pub solved_samples: Option<u32>,
    pub defect_sequence: Vec<String>,
    pub format_ok_sequence: Vec<bool>,
}

impl ScriptedBehavior {
    pub fn sample_succeeds(&self, sample_index: u32) -> bool {
        self.success_round.is_some() && self.solved_samples.is_none_or(|m| sample_index < m)
    }

    /// Round at which `sample_index` verifies, if ever.
    pub fn success_round_for(&self, sample_index: u32) -> Option<u32> {
        self.success_round.filter(|_| self.sample_succeeds(sample_index))
    }

    /// Number of successful samples among `n`.
    pub fn expected_successes(&self, n: u32, round_budget: u32) -> u32 {
        (0..n)
            .filter(|i| self.success_round_for(*i).is_some_and(|r| r <= round_budget))
            .count() as u32
    }

    fn format_ok(&self, round: u32) -> bool {
        self.format_ok_sequence
            .get(round as usize - 1)
            .copied()
            .unwrap_or(true)
    }

    fn defect(&self, round: u32) -> &str {
        if self.defect_sequence.is_empty() {
            "sorry"
        } else {
            &self.defect_sequence[(round as usize - 1) % self.defect_sequence.len()]
        }
    }

    /// The completion emitted at (`sample_index`, `round`).
    pub fn completion(&self, sample_index: u32, round: u32) -> String {
        if self.success_round_for(sample_index).is_some_and(|r| round >= r) {
            wrap(&self.solution, self.format_ok(round))
        } else {
            self.defect_completion(round)
        }
    }

    /// The failing completion scripted for `round`.
    pub fn defect_completion(&self, round: u32) -> String {
        let format_ok = self.format_ok(round);
        match self.defect(round) {
            NO_CODE => "I am not sure how to formalize this yet; an induction seems plausible.".into(),
            EMPTY => wrap("", format_ok),
            marker => {
                let snippet = DefectPattern::find(marker)
                    .map(|p| p.snippet)
                    .unwrap_or_else(|| format!("  {marker}"));
                wrap(
                    &format!("{} := by\n{snippet}\n  -- attempt {round}", self.statement),
                    format_ok,
                )
            }
        }
    }
}

fn wrap(proof: &str, with_plan: bool) -> String {
    let fence = if proof.is_empty() {
        "```lean\n```\n".to_string()
    } else {
        format!("```lean\n{proof}\n```\n")
    };
    if with_plan {
        format!("Proof plan: reduce the goal and close it with the standard tactics.\n\n{fence}")
    } else {
        fence
    }
}

/// Policy following each statement's [`ScriptedBehavior`]. A pure function
/// of (statement, sample, round); seeds and prompts are ignored.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    behaviors: BTreeMap<String, ScriptedBehavior>,
}

impl ScriptedPolicy {
    pub fn new(behaviors: impl IntoIterator<Item = ScriptedBehavior>) -> Self {
        ScriptedPolicy {
            behaviors: behaviors
                .into_iter()
                .map(|b| (b.statement_id.clone(), b))
                .collect(),
        }
    }

    pub fn behavior(&self, statement_id: &str) -> Option<&ScriptedBehavior> {
        self.behaviors.get(statement_id)
    }
}

impl PolicyClient for ScriptedPolicy {
    fn generate(&self, r: &GenerateRequest<'_>) -> Result<String, PolicyError> {
        self.behaviors
            .get(r.statement_id)
            .map(|b| b.completion(r.sample_index, r.round_index))
            .ok_or_else(|| PolicyError::Unavailable(format!("no script for {}", r.statement_id)))
    }
}

/// A self-consistent simulated world.
#[derive(Debug, Clone)]
pub struct World {
    pub statements: Vec<TheoremStatement>,
    pub verifier: SimulatedVerifier,
    pub policy: ScriptedPolicy,
    pub behaviors: Vec<ScriptedBehavior>,
}

impl World {
    /// Ids of statements whose group of `n` rollouts (budget `round_budget`)
    /// is partially solved.
    pub fn partially_solved(&self, n: u32, round_budget: u32) -> Vec<String> {
        let mut ids: Vec<String> = self
            .behaviors
            .iter()
            .filter(|b| {
                let m = b.expected_successes(n, round_budget);
                m > 0 && m < n
            })
            .map(|b| b.statement_id.clone())
            .collect();
        ids.sort();
        ids
    }
}

pub fn parse_world_spec(text: &str) -> Result<Vec<WorldSpecRecord>, SpecError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| SpecError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn load_world_spec(path: &Path) -> Result<Vec<WorldSpecRecord>, SpecError> {
    Ok(read_jsonl(path)?)
}

/// Builds the world and checks that every scripted success verifies and
/// every scripted defect does not.
pub fn make_world(spec: &[WorldSpecRecord]) -> Result<World, SpecError> {
    let mut verifier = SimulatedVerifier::new();
    let mut statements = Vec::new();
    let mut behaviors = Vec::new();
    let mut seen = HashSet::new();
    for rec in spec {
        let stmt = TheoremStatement::new(rec.statement.clone(), Source::Public);
        let fail = |message: String| SpecError::Inconsistent {
            id: stmt.id.clone(),
            message,
        };
        if !seen.insert(stmt.id.clone()) {
            return Err(fail("duplicate statement".into()));
        }
        if rec.success_round == Some(0) {
            return Err(fail("success_round must be at least 1".into()));
        }
        if let Some(r) = rec.success_round {
            if (rec.defect_sequence.len() as u32) < r - 1 {
                return Err(fail(format!(
                    "success at round {r} needs {} defects, got {}",
                    r - 1,
                    rec.defect_sequence.len()
                )));
            }
        }
        for d in &rec.defect_sequence {
            if d != NO_CODE && d != EMPTY && DefectPattern::find(d).is_none() {
                return Err(fail(format!("unknown defect {d:?}")));
            }
        }
        let solution = rec
            .solution
            .clone()
            .unwrap_or_else(|| format!("{} := by\n  simp", rec.statement));
        verifier.register(stmt.id.clone(), &solution);
        let behavior = ScriptedBehavior {
            statement_id: stmt.id.clone(),
            statement: rec.statement.clone(),
            solution,
            success_round: rec.success_round,
            solved_samples: rec.solved_samples,
            defect_sequence: rec.defect_sequence.clone(),
            format_ok_sequence: rec.format_ok_sequence.clone(),
        };
        check_behavior(&behavior, &verifier).map_err(fail)?;
        statements.push(stmt);
        behaviors.push(behavior);
    }
    Ok(World {
        statements,
        verifier,
        policy: ScriptedPolicy::new(behaviors.clone()),
        behaviors,
    })
}

fn check_behavior(b: &ScriptedBehavior, v: &SimulatedVerifier) -> Result<(), String> {
    let verify = |completion: &str| -> Result<bool, String> {
        let Ok(proof) = extract_proof(completion) else {
            return Ok(false);
        };
        if proof.trim().is_empty() {
            return Ok(false);
        }
        v.verify(&VerifyRequest {
            statement_id: &b.statement_id,
            proof_text: &proof,
            timeout_ms: u64::MAX,
        })
        .map(|verdict| verdict.verified)
        .map_err(|e| e.to_string())
    };
    if let Some(r) = b.success_round {
        if !verify(&b.completion(0, r))? {
            return Err("scripted success does not verify".into());
        }
    }
    let distinct = b.defect_sequence.len().max(1) as u32;
    for t in 1..=distinct.max(b.success_round.unwrap_or(1) - 1) {
        if verify(&b.defect_completion(t))? {
            return Err(format!("scripted defect at round {t} verifies"));
        }
    }
    Ok(())
}

/// The shipped 20-statement world.
pub fn world20() -> World {
    make_world(&parse_world_spec(WORLD20_SPEC).expect("shipped spec parses")).expect("shipped spec is consistent")
}

/// One statement: an ill-typed `decide` round, then the repair.
pub fn case_a_world() -> World {
    make_world(&parse_world_spec(CASE_A_SPEC).expect("shipped spec parses")).expect("shipped spec is consistent")
}
