//! Deterministic stand-in for a Lean server.
//!
//! Each registered statement has a canonical solution. A proof verifies iff
//! it equals that solution up to whitespace. Otherwise the feedback is
//! assembled from the defect patterns whose marker occurs in the proof, so
//! tests control exactly which diagnostics a failing round produces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Verdict, Verifier, VerifierError, VerifyRequest};
use crate::tokenize;

/// Diagnostic for an ill-typed hypothesis followed by a failed `linarith`.
pub const SAMPLE_DIAGNOSTIC: &str = "type mismatch
h0
has type
Nat.succ ?m.123
but is expected to have type
Real

tactic 'linarith' failed to find a contradiction
case h
x y : Real
h0 : x <= y
h1 : y <= 0
turnstile False";

/// `decide` applied to a type-valued term.
pub const CASE_A_FEEDBACK: &str = "Lean errors:
application type mismatch
@decide ((i : Nat) -> (fun n => Nat) (i + 1))
argument has type
Type
but is expected to have type
Prop

tactic 'assumption' failed
Goal: False";

/// Automation stuck on a nonlinear bound.
pub const CASE_B_FEEDBACK: &str = "Lean errors:
linarith failed to find a contradiction

Context:
x : Real
hx : x in S
h2 : x ^ 4 + 36 <= 13 * x ^ 2
h3 : x <= 3
h5 : x ^ 3 - 3 * x <= 18
Goal: False";

/// Several interacting structural failures in one attempt.
pub const CASE_C_FEEDBACK: &str = "Lean errors:
invalid match-expression, type of pattern variable contains metavariables
type mismatch in function equality
application type mismatch at congr_fun
alternative 'hn' has not been provided
unknown identifier";

pub const UNSOLVED_GOALS_FEEDBACK: &str = "unsolved goals
x : Real
⊢ False";

pub const UNKNOWN_IDENTIFIER_FEEDBACK: &str = "unknown identifier 'Nat.add_comm_wrong'";

pub const HEARTBEAT_FEEDBACK: &str = "(deterministic) timeout at `whnf`, maximum number of heartbeats (4000000) has been reached
Use `set_option maxHeartbeats <num>` to set the limit.";

/// Feedback for a failing proof that shows no registered defect.
pub const GENERIC_FEEDBACK: &str = "unsolved goals
⊢ False";

/// A marker that, when present in a proof, triggers a fixed diagnostic.
/// `snippet` is the tactic text a scripted policy writes to exhibit it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectPattern {
    pub marker: String,
    pub snippet: String,
    pub feedback: String,
}

impl DefectPattern {
    pub fn new(marker: &str, snippet: &str, feedback: &str) -> Self {
        DefectPattern {
            marker: marker.to_string(),
            snippet: snippet.to_string(),
            feedback: feedback.to_string(),
        }
    }

    /// Built-in patterns, keyed by marker.
    pub fn catalog() -> Vec<DefectPattern> {
        vec![
            DefectPattern::new("sorry", "  sorry", UNSOLVED_GOALS_FEEDBACK),
            DefectPattern::new(
                "BAD_TYPE",
                "  have h0 : Real := Nat.succ BAD_TYPE\n  linarith",
                SAMPLE_DIAGNOSTIC,
            ),
            DefectPattern::new(
                "ILL_TYPED_DECIDE",
                "  have h1 : False := by\n    have h4 := h3 (by decide) -- ILL_TYPED_DECIDE\n    trivial\n  exfalso\n  exact h1",
                CASE_A_FEEDBACK,
            ),
            DefectPattern::new(
                "LINARITH_STUCK",
                "  nlinarith [sq_nonneg (x - 2), LINARITH_STUCK]",
                CASE_B_FEEDBACK,
            ),
            DefectPattern::new(
                "MISSING_CASE",
                "  induction n with\n  | zero => simp -- MISSING_CASE\n  | succ k ih => omega",
                CASE_C_FEEDBACK,
            ),
            DefectPattern::new(
                "UNKNOWN_IDENT",
                "  rw [Nat.add_comm_wrong] -- UNKNOWN_IDENT",
                UNKNOWN_IDENTIFIER_FEEDBACK,
            ),
            DefectPattern::new(
                "HEAVY_SEARCH",
                "  aesop (config := { maxRuleApplications := 100000 }) -- HEAVY_SEARCH",
                HEARTBEAT_FEEDBACK,
            ),
        ]
    }

    pub fn find(marker: &str) -> Option<DefectPattern> {
        DefectPattern::catalog()
            .into_iter()
            .find(|p| p.marker == marker)
    }
}

fn normalize_ws(text: &str) -> String {
    tokenize::tokens(text).collect::<Vec<_>>().join(" ")
}

/// Pure function of `(statement_id, proof_text)`.
#[derive(Debug, Clone)]
pub struct SimulatedVerifier {
    solutions: HashMap<String, String>,
    patterns: Vec<DefectPattern>,
}

impl Default for SimulatedVerifier {
    fn default() -> Self {
        SimulatedVerifier {
            solutions: HashMap::new(),
            patterns: DefectPattern::catalog(),
        }
    }
}

impl SimulatedVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, statement_id: impl Into<String>, canonical_solution: &str) {
        self.solutions
            .insert(statement_id.into(), normalize_ws(canonical_solution));
    }

    pub fn add_pattern(&mut self, pattern: DefectPattern) {
        self.patterns.retain(|p| p.marker != pattern.marker);
        self.patterns.push(pattern);
    }

    pub fn patterns(&self) -> &[DefectPattern] {
        &self.patterns
    }

    /// Simulated cost: one millisecond per proof token.
    fn cost_ms(proof_text: &str) -> u64 {
        tokenize::token_count(proof_text) as u64
    }
}

impl Verifier for SimulatedVerifier {
    fn verify(&self, request: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        let proof = request.proof_text;
        if proof.trim().is_empty() {
            return Err(VerifierError::EmptyProof);
        }
        let elapsed = Self::cost_ms(proof);
        if elapsed > request.timeout_ms {
            return Ok(Verdict::timed_out(request.timeout_ms));
        }
        let canonical = self.solutions.get(request.statement_id);
        if canonical.is_some_and(|c| *c == normalize_ws(proof)) {
            return Ok(Verdict::from_backend(true, "", elapsed));
        }
        let hits: Vec<&str> = self
            .patterns
            .iter()
            .filter(|p| proof.contains(p.marker.as_str()))
            .map(|p| p.feedback.as_str())
            .collect();
        let feedback = if hits.is_empty() {
            GENERIC_FEEDBACK.to_string()
        } else {
            hits.join("\n\n")
        };
        Ok(Verdict::from_backend(false, &feedback, elapsed))
    }

    fn describe(&self) -> String {
        "simulated".to_string()
    }
}
