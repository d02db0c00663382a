//! Per-round rewards, pooled group-relative advantages, and hard-case
//! selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Outcome, Trajectory};
use crate::policy::fenced_blocks;
use crate::verifier::Verdict;

pub const REWARD_VERIFIED: f64 = 1.0;
pub const REWARD_VERIFIED_BAD_FORMAT: f64 = 0.8;
pub const REWARD_FAILED: f64 = 0.0;
/// Added to the population std before dividing.
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RlError {
    #[error("group {0:?} has no rounds")]
    EmptyGroup(String),
}

pub fn round_reward(verdict: &Verdict, format_ok: bool) -> f64 {
    match (verdict.verified, format_ok) {
        (true, true) => REWARD_VERIFIED,
        (true, false) => REWARD_VERIFIED_BAD_FORMAT,
        (false, _) => REWARD_FAILED,
    }
}

/// A plan, then exactly one fenced block, labeled lean, ending the
/// completion.
pub fn format_check(completion: &str) -> bool {
    let blocks = fenced_blocks(completion);
    let [block] = blocks.as_slice() else {
        return false;
    };
    block.is_lean()
        && !block.content.trim().is_empty()
        && !completion[..block.start].trim().is_empty()
        && completion[block.end..].trim().is_empty()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundReward {
    pub sample_index: u32,
    pub round_index: u32,
    pub reward: f64,
}

/// All realized rounds of one statement's rollouts, pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardedGroup {
    pub statement_id: String,
    pub rounds: Vec<RoundReward>,
    pub n_rollouts: usize,
    pub success_count: usize,
}

impl RewardedGroup {
    pub fn success_rate(&self) -> f64 {
        if self.n_rollouts == 0 {
            0.0
        } else {
            self.success_count as f64 / self.n_rollouts as f64
        }
    }

    pub fn is_hard(&self) -> bool {
        self.success_count > 0 && self.success_count < self.n_rollouts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundAdvantage {
    pub sample_index: u32,
    pub round_index: u32,
    pub reward: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageGroup {
    pub statement_id: String,
    pub rounds: Vec<RoundAdvantage>,
    pub n_rollouts: usize,
    pub success_count: usize,
    pub epsilon: f64,
}

/// Fills `reward` on every round of `trajectory` using `format_ok`.
pub fn assign_rewards(trajectory: &mut Trajectory, format_ok: &dyn Fn(&str) -> bool) {
    for r in &mut trajectory.rounds {
        r.reward = Some(round_reward(&r.verdict, format_ok(&r.completion)));
    }
}

/// One group per statement (sorted by id); aborted rollouts are left out.
pub fn build_groups(
    trajectories: &[Trajectory],
    format_ok: &dyn Fn(&str) -> bool,
) -> Vec<RewardedGroup> {
    let mut groups: BTreeMap<&str, RewardedGroup> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| t.outcome != Outcome::Aborted) {
        let g = groups.entry(&t.statement_id).or_insert_with(|| RewardedGroup {
            statement_id: t.statement_id.clone(),
            rounds: Vec::new(),
            n_rollouts: 0,
            success_count: 0,
        });
        g.n_rollouts += 1;
        if t.outcome == Outcome::Verified {
            g.success_count += 1;
        }
        for r in &t.rounds {
            g.rounds.push(RoundReward {
                sample_index: t.sample_index,
                round_index: r.round_index,
                reward: round_reward(&r.verdict, format_ok(&r.completion)),
            });
        }
    }
    groups.into_values().collect()
}

/// `a_i = (r_i - mean) / (std + epsilon)` over the pooled rounds, with the
/// population std. Groups whose rewards are all equal get zero advantages.
pub fn group_advantages(group: &RewardedGroup, epsilon: f64) -> Result<AdvantageGroup, RlError> {
    if group.rounds.is_empty() {
        return Err(RlError::EmptyGroup(group.statement_id.clone()));
    }
    let n = group.rounds.len() as f64;
    let first = group.rounds[0].reward;
    let degenerate = group.rounds.iter().all(|r| r.reward == first);
    let mean = group.rounds.iter().map(|r| r.reward).sum::<f64>() / n;
    let var = group.rounds.iter().map(|r| (r.reward - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + epsilon;
    let rounds = group
        .rounds
        .iter()
        .map(|r| RoundAdvantage {
            sample_index: r.sample_index,
            round_index: r.round_index,
            reward: r.reward,
            advantage: if degenerate { 0.0 } else { (r.reward - mean) / denom },
        })
        .collect();
    Ok(AdvantageGroup {
        statement_id: group.statement_id.clone(),
        rounds,
        n_rollouts: group.n_rollouts,
        success_count: group.success_count,
        epsilon,
    })
}

/// Statements whose success rate is strictly between 0 and 1.
pub fn select_hard_cases(groups: &[RewardedGroup]) -> Vec<String> {
    groups
        .iter()
        .filter(|g| g.is_hard())
        .map(|g| g.statement_id.clone())
        .collect()
}
