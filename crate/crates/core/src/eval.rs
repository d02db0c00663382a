//! Pass@k estimation, depth-truncated Pass(R, k), and fixed-budget
//! allocation analysis.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{Outcome, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no allocation R*k = {budget} fits depth {depth} and {samples} samples")]
    NoFeasibleAllocation {
        budget: u32,
        depth: u32,
        samples: usize,
    },
}

/// Unbiased estimate of P(at least one success among k of n draws without
/// replacement), given m successes.
pub fn pass_at_k(n: usize, m: usize, k: usize) -> Result<f64, EvalError> {
    if k == 0 || k > n {
        return Err(EvalError::Domain(format!("k = {k} outside [1, n = {n}]")));
    }
    if m > n {
        return Err(EvalError::Domain(format!("m = {m} exceeds n = {n}")));
    }
    if n - m < k {
        return Ok(1.0);
    }
    let mut miss = 1.0f64;
    for i in 0..k {
        miss *= (n - m - i) as f64 / (n - i) as f64;
    }
    Ok((1.0 - miss).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementTally {
    pub statement_id: String,
    pub n: usize,
    pub m: usize,
}

/// Unweighted mean of per-statement pass@k.
pub fn benchmark_pass_at_k(tallies: &[StatementTally], k: usize) -> Result<f64, EvalError> {
    if tallies.is_empty() {
        return Err(EvalError::Domain("no statements to score".into()));
    }
    let short: Vec<String> = tallies
        .iter()
        .filter(|t| t.n < k)
        .map(|t| format!("{} (n = {})", t.statement_id, t.n))
        .collect();
    if !short.is_empty() {
        return Err(EvalError::Domain(format!(
            "fewer than k = {k} samples for: {}",
            short.join(", ")
        )));
    }
    let mut sum = 0.0;
    for t in tallies {
        sum += pass_at_k(t.n, t.m, k)?;
    }
    Ok(sum / tallies.len() as f64)
}

/// Per-statement tallies where a sample counts as solved iff it verified
/// within its first `depth` rounds. Aborted rollouts are excluded.
pub fn tallies_at_depth(trajectories: &[Trajectory], depth: u32) -> Result<Vec<StatementTally>, EvalError> {
    let mut by_id: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| t.outcome != Outcome::Aborted) {
        if t.round_budget < depth {
            return Err(EvalError::Domain(format!(
                "{} ran with budget {} < depth {depth}",
                t.key(),
                t.round_budget
            )));
        }
        let e = by_id.entry(&t.statement_id).or_default();
        e.0 += 1;
        if t.success_round().is_some_and(|r| r <= depth) {
            e.1 += 1;
        }
    }
    Ok(by_id
        .into_iter()
        .map(|(id, (n, m))| StatementTally {
            statement_id: id.to_string(),
            n,
            m,
        })
        .collect())
}

/// Tallies at full depth.
pub fn tallies(trajectories: &[Trajectory]) -> Vec<StatementTally> {
    let depth = available_depth(trajectories);
    tallies_at_depth(trajectories, depth).expect("depth is the minimum budget")
}

pub fn pass_rk(trajectories: &[Trajectory], rounds: u32, k: usize) -> Result<f64, EvalError> {
    if rounds == 0 {
        return Err(EvalError::Domain("R must be at least 1".into()));
    }
    benchmark_pass_at_k(&tallies_at_depth(trajectories, rounds)?, k)
}

/// Smallest round budget among non-aborted rollouts.
pub fn available_depth(trajectories: &[Trajectory]) -> u32 {
    trajectories
        .iter()
        .filter(|t| t.outcome != Outcome::Aborted)
        .map(|t| t.round_budget)
        .min()
        .unwrap_or(0)
}

/// Smallest per-statement sample count among non-aborted rollouts.
pub fn available_samples(trajectories: &[Trajectory]) -> usize {
    tallies_at_depth(trajectories, 0)
        .map(|ts| ts.iter().map(|t| t.n).min().unwrap_or(0))
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub rounds: u32,
    pub k: usize,
    pub pass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub budget: u32,
    pub allocations: Vec<Allocation>,
    pub best: Allocation,
}

/// Every feasible `R * k = budget` split, scored, with the best one. Ties
/// go to the smaller R.
pub fn best_pass(trajectories: &[Trajectory], budget: u32) -> Result<BudgetPoint, EvalError> {
    if budget == 0 {
        return Err(EvalError::Domain("budget must be at least 1".into()));
    }
    let depth = available_depth(trajectories);
    let samples = available_samples(trajectories);
    let mut allocations = Vec::new();
    for r in (1..=budget).filter(|r| budget % r == 0) {
        let k = (budget / r) as usize;
        if r > depth || k > samples {
            continue;
        }
        allocations.push(Allocation {
            rounds: r,
            k,
            pass: pass_rk(trajectories, r, k)?,
        });
    }
    let best = allocations
        .iter()
        .copied()
        .reduce(|a, b| if b.pass > a.pass { b } else { a })
        .ok_or(EvalError::NoFeasibleAllocation {
            budget,
            depth,
            samples,
        })?;
    Ok(BudgetPoint {
        budget,
        allocations,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub budget: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<BudgetPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `best_pass` per budget; failures become row annotations.
pub fn budget_sweep(trajectories: &[Trajectory], budgets: &[u32]) -> Vec<SweepRow> {
    budgets
        .iter()
        .map(|&b| match best_pass(trajectories, b) {
            Ok(p) => SweepRow {
                budget: b,
                point: Some(p),
                error: None,
            },
            Err(e) => SweepRow {
                budget: b,
                point: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// CSV with columns `B,R,k,pass,is_best`; infeasible budgets are omitted.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("B,R,k,pass,is_best\n");
    for row in rows {
        let Some(p) = &row.point else { continue };
        for a in &p.allocations {
            let is_best = a.rounds == p.best.rounds;
            let _ = writeln!(out, "{},{},{},{:.6},{}", p.budget, a.rounds, a.k, a.pass, is_best);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub statements: usize,
    pub samples: usize,
    pub aborted_excluded: usize,
    pub pass_at_k: f64,
    pub tallies: Vec<StatementTally>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
}

pub fn evaluate(trajectories: &[Trajectory], k: usize, budgets: &[u32]) -> Result<EvalReport, EvalError> {
    let tallies = tallies(trajectories);
    let pass = benchmark_pass_at_k(&tallies, k)?;
    Ok(EvalReport {
        k,
        statements: tallies.len(),
        samples: tallies.iter().map(|t| t.n).sum(),
        aborted_excluded: trajectories
            .iter()
            .filter(|t| t.outcome == Outcome::Aborted)
            .count(),
        pass_at_k: pass,
        tallies,
        sweep: budget_sweep(trajectories, budgets),
    })
}
