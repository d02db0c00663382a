//! Round-level repair examples extracted from refinement trajectories.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Map;

use crate::corpus::RepairExample;
use crate::engine::{Outcome, Trajectory};
use crate::tokenize::{token_count, token_edit_distance};
use crate::verifier::NO_LEAN_CODE_FOUND;

/// Feedback longer than this many tokens is not kept as repair context.
pub const MAX_FEEDBACK_TOKENS: usize = 8_000;
/// Transitions changing fewer tokens than this are near no-ops.
pub const MIN_EDIT_TOKENS: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairFilterReport {
    pub extracted: usize,
    pub kept: usize,
    pub dropped_empty_prev: usize,
    pub dropped_long_feedback: usize,
    pub dropped_near_noop: usize,
    pub dropped_dedup: usize,
}

impl RepairFilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_empty_prev + self.dropped_long_feedback + self.dropped_near_noop + self.dropped_dedup
    }

    pub fn is_consistent(&self) -> bool {
        self.extracted == self.kept + self.dropped()
    }

    pub fn merge(&mut self, other: &RepairFilterReport) {
        self.extracted += other.extracted;
        self.kept += other.kept;
        self.dropped_empty_prev += other.dropped_empty_prev;
        self.dropped_long_feedback += other.dropped_long_feedback;
        self.dropped_near_noop += other.dropped_near_noop;
        self.dropped_dedup += other.dropped_dedup;
    }
}

/// Shallow well-formedness check: non-empty, not the extraction-failure
/// placeholder, and carrying a `:=` proof head.
pub fn is_malformed(proof: &str) -> bool {
    let p = proof.trim();
    p.is_empty() || p == NO_LEAN_CODE_FOUND || !p.contains(":=")
}

/// Candidate transitions `(p_{t-1}, f_{t-1}) -> p_t` for `t >= 2`, filtered.
/// Aborted trajectories yield nothing.
pub fn extract_repairs(trajectory: &Trajectory) -> (Vec<RepairExample>, RepairFilterReport) {
    let mut report = RepairFilterReport::default();
    let mut out = Vec::new();
    if trajectory.outcome == Outcome::Aborted {
        return (out, report);
    }
    for pair in trajectory.rounds.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        report.extracted += 1;
        if is_malformed(&prev.attempt) || is_malformed(&cur.attempt) {
            report.dropped_empty_prev += 1;
            continue;
        }
        if token_count(&prev.verdict.feedback) > MAX_FEEDBACK_TOKENS {
            report.dropped_long_feedback += 1;
            continue;
        }
        if token_edit_distance(&prev.attempt, &cur.attempt) < MIN_EDIT_TOKENS {
            report.dropped_near_noop += 1;
            continue;
        }
        report.kept += 1;
        out.push(RepairExample {
            statement_id: trajectory.statement_id.clone(),
            retrieved_ids: cur.retrieved_ids.clone(),
            snapshot_id: trajectory.snapshot_id,
            prev_proof: prev.attempt.clone(),
            prev_feedback: prev.verdict.feedback.clone(),
            target_proof: cur.attempt.clone(),
            source_trajectory: trajectory.key(),
            round_index: cur.round_index,
            extra: Map::new(),
        });
    }
    (out, report)
}

/// Keeps the first example of each byte-identical
/// `(prev_proof, prev_feedback, target_proof)` triple.
pub fn dedup_repairs(examples: Vec<RepairExample>) -> Vec<RepairExample> {
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    examples
        .into_iter()
        .filter(|e| {
            seen.insert((
                e.prev_proof.clone(),
                e.prev_feedback.clone(),
                e.target_proof.clone(),
            ))
        })
        .collect()
}

/// Extraction over many trajectories followed by deduplication.
pub fn extract_and_dedup<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> (Vec<RepairExample>, RepairFilterReport) {
    let mut report = RepairFilterReport::default();
    let mut all = Vec::new();
    for t in trajectories {
        let (ex, r) = extract_repairs(t);
        report.merge(&r);
        all.extend(ex);
    }
    let before = all.len();
    let kept = dedup_repairs(all);
    report.dropped_dedup += before - kept.len();
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::RoundRecord;
    use crate::verifier::Verdict;

    fn round(i: u32, attempt: &str, feedback: &str, verified: bool) -> RoundRecord {
        RoundRecord {
            round_index: i,
            retrieved_ids: vec![format!("p-{i}")],
            completion: String::new(),
            attempt: attempt.to_string(),
            verdict: Verdict::from_backend(verified, feedback, 1),
            reward: None,
        }
    }

    fn traj(rounds: Vec<RoundRecord>) -> Trajectory {
        let verified = rounds.last().unwrap().verdict.verified;
        Trajectory {
            statement_id: "s".into(),
            sample_index: 0,
            round_budget: rounds.len() as u32,
            rounds,
            outcome: if verified { Outcome::Verified } else { Outcome::BudgetExhausted },
            snapshot_id: 3,
            seed: 0,
            abort_reason: None,
            extra: Map::new(),
        }
    }

    #[test]
    fn single_round_has_no_candidates() {
        let (ex, r) = extract_repairs(&traj(vec![round(1, "t := by simp", "", true)]));
        assert!(ex.is_empty());
        assert_eq!(r.extracted, 0);
    }

    #[test]
    fn four_rounds_yield_three() {
        let t = traj(vec![
            round(1, "t := by a1 b1 c1", "err one", false),
            round(2, "t := by a2 b2 c2", "err two", false),
            round(3, "t := by a3 b3 c3", "err three", false),
            round(4, "t := by a4 b4 c4", "", true),
        ]);
        let (ex, r) = extract_repairs(&t);
        assert_eq!(ex.len(), 3);
        assert_eq!(r.kept, 3);
        assert_eq!(ex[0].prev_feedback, "err one");
        assert_eq!(ex[0].retrieved_ids, vec!["p-2".to_string()]);
        assert_eq!(ex[2].round_index, 4);
        assert_eq!(ex[1].source_trajectory, "s#0");
        assert_eq!(ex[1].snapshot_id, 3);
    }

    #[test]
    fn near_noop_boundary() {
        let two = traj(vec![
            round(1, "t := by x y z", "e", false),
            round(2, "t := by x q r", "", true),
        ]);
        assert_eq!(extract_repairs(&two).1.dropped_near_noop, 1);
        let three = traj(vec![
            round(1, "t := by x y z", "e", false),
            round(2, "t := by p q r", "", true),
        ]);
        assert_eq!(extract_repairs(&three).1.kept, 1);
    }

    #[test]
    fn feedback_length_boundary() {
        let fb = |n: usize| vec!["w"; n].join(" ");
        for (n, kept) in [(8_000, 1), (8_001, 0)] {
            let t = traj(vec![
                round(1, "t := by a b c", &fb(n), false),
                round(2, "t := by d e f", "", true),
            ]);
            let (_, r) = extract_repairs(&t);
            assert_eq!(r.kept, kept, "n = {n}");
            assert_eq!(r.dropped_long_feedback, 1 - kept);
        }
    }

    #[test]
    fn malformed_prev_dropped() {
        for prev in ["", "no_lean_code_found", "just some words"] {
            let t = traj(vec![
                round(1, prev, "e", false),
                round(2, "t := by d e f", "", true),
            ]);
            assert_eq!(extract_repairs(&t).1.dropped_empty_prev, 1, "{prev:?}");
        }
    }

    #[test]
    fn dedup_keeps_first_and_differing_feedback() {
        let mk = |fb: &str, src: &str| RepairExample {
            statement_id: "s".into(),
            retrieved_ids: vec![],
            snapshot_id: 0,
            prev_proof: "a".into(),
            prev_feedback: fb.into(),
            target_proof: "b".into(),
            source_trajectory: src.into(),
            round_index: 2,
            extra: Map::new(),
        };
        let out = dedup_repairs(vec![mk("e", "1"), mk("e", "2"), mk("f", "3")]);
        let srcs: Vec<&str> = out.iter().map(|e| e.source_trajectory.as_str()).collect();
        assert_eq!(srcs, vec!["1", "3"]);
        assert_eq!(dedup_repairs(out.clone()), out);
    }
}
