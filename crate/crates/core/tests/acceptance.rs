//! Acceptance criteria, one PASS/FAIL line each. Runs with a custom
//! harness so the lines are always printed.

use std::collections::BTreeSet;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Map;

use prover_core::coevolve::{run_coevolution, CoevolveConfig};
use prover_core::corpus::{Corpus, Source, TheoremStatement, VerifiedProof};
use prover_core::engine::{
    run_batch, run_rollout, BatchConfig, InteractionState, Outcome, RolloutConfig, RoundRecord, Services, Trajectory,
};
use prover_core::eval::{benchmark_pass_at_k, best_pass, budget_sweep, pass_at_k, pass_rk, StatementTally};
use prover_core::fixtures::world20;
use prover_core::policy::{render_prompt, GenerateRequest, PolicyClient, PolicyError, MAX_PROMPT_TOKENS};
use prover_core::repair::extract_and_dedup;
use prover_core::retrieval::{
    query_topk, rebuild_index, save_index, EmbeddingProvider, EmbeddingVector, HashingEmbedder, MemoryEntry,
    MemoryStore, RetrievalIndex,
};
use prover_core::rl::{group_advantages, round_reward, RewardedGroup, RoundReward, DEFAULT_EPSILON};
use prover_core::verifier::simulated::SAMPLE_DIAGNOSTIC;
use prover_core::verifier::{sanitize_feedback, Verdict, Verifier, VerifierError, VerifyRequest};

type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("pass@k equals exhaustive subset enumeration", c1_pass_at_k_oracle),
        ("estimator consistent on Bernoulli(0.1) samples", c2_estimator_consistency),
        ("reward table exact", c3_reward_table),
        ("pooled advantage normalization", c4_advantages),
        ("repair extraction, filters and dedup", c5_repair_rules),
        ("refinement loop invariants", c6_loop_invariants),
        ("co-evolution end to end", c7_coevolution),
        ("retrieval correctness and snapshot immutability", c8_retrieval),
        ("budget analysis", c9_budget),
        ("prompt goldens and feedback sanitizing", c10_prompt_golden),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())))));
        match result {
            Ok(()) => println!("criterion {:>2}: PASS  {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2}: FAIL  {name}: {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Fraction of size-k subsets of n items (the first m successes) holding
/// at least one success, by enumeration.
fn enumerate(n: usize, m: usize, k: usize) -> (u128, u128) {
    let (mut hit, mut total) = (0u128, 0u128);
    let success_mask: u32 = (1u32 << m) - 1;
    for subset in 0u32..(1 << n) {
        if subset.count_ones() as usize != k {
            continue;
        }
        total += 1;
        if subset & success_mask != 0 {
            hit += 1;
        }
    }
    (hit, total)
}

/// Product form `1 - prod (n-m-i)/(n-i)` in exact rationals.
fn product_form(n: usize, m: usize, k: usize) -> (u128, u128) {
    let (mut num, mut den) = (1u128, 1u128);
    for i in 0..k {
        let a = (n - m).saturating_sub(i) as u128;
        num *= a;
        den *= (n - i) as u128;
        let g = gcd(num, den).max(1);
        num /= g;
        den /= g;
    }
    (den - num, den)
}

fn c1_pass_at_k_oracle() -> Result<(), String> {
    for n in 1..=10usize {
        for m in 0..=n {
            for k in 1..=n {
                let (h, t) = enumerate(n, m, k);
                let (p, q) = product_form(n, m, k);
                ensure!(h * q == p * t, "rational mismatch at ({n},{m},{k}): {h}/{t} vs {p}/{q}");
                let f = pass_at_k(n, m, k).map_err(|e| e.to_string())?;
                let exact = h as f64 / t as f64;
                ensure!((f - exact).abs() <= 1e-12, "float path off at ({n},{m},{k}): {f} vs {exact}");
            }
        }
    }
    let (h, t) = enumerate(4, 2, 2);
    ensure!(h * 6 == 5 * t, "(4,2,2) is {h}/{t}, expected 5/6");
    ensure!((pass_at_k(4, 2, 2).unwrap() - 5.0 / 6.0).abs() <= 1e-12, "(4,2,2) float");
    Ok(())
}

// ---------------------------------------------------------------- 2

fn c2_estimator_consistency() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let (statements, n, k, p) = (10_000usize, 64usize, 32usize, 0.1f64);
    let tallies: Vec<StatementTally> = (0..statements)
        .map(|i| StatementTally {
            statement_id: format!("b{i}"),
            n,
            m: (0..n).filter(|_| rng.gen_bool(p)).count(),
        })
        .collect();
    let mean = benchmark_pass_at_k(&tallies, k).map_err(|e| e.to_string())?;
    let values: Vec<f64> = tallies.iter().map(|t| pass_at_k(t.n, t.m, k).unwrap()).collect();
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (statements as f64 - 1.0);
    let se = (var / statements as f64).sqrt();
    let target = 1.0 - 0.9f64.powi(32);
    ensure!(
        (mean - target).abs() <= 3.0 * se,
        "mean {mean:.6} vs {target:.6}, 3 SE = {:.6}",
        3.0 * se
    );
    Ok(())
}

// ---------------------------------------------------------------- 3

fn c3_reward_table() -> Result<(), String> {
    let yes = Verdict::from_backend(true, "", 0);
    let no = Verdict::from_backend(false, "unsolved goals", 0);
    let table = [(&yes, true, 1.0), (&yes, false, 0.8), (&no, true, 0.0), (&no, false, 0.0)];
    for (v, fmt, want) in table {
        let got = round_reward(v, fmt);
        ensure!(got == want, "verified={} fmt={fmt}: {got} != {want}", v.verified);
    }
    Ok(())
}

// ---------------------------------------------------------------- 4

/// Rewards of `rollouts` realistic rollouts: failed rounds score 0, a
/// verified final round 1.0 or 0.8.
fn random_group(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let rollouts = rng.gen_range(1..=8);
    let budget = rng.gen_range(1..=16);
    let mut rewards = Vec::new();
    for _ in 0..rollouts {
        let success = rng.gen_bool(0.5).then(|| rng.gen_range(1..=budget));
        let len = success.unwrap_or(budget);
        for t in 1..=len {
            rewards.push(match success {
                Some(s) if s == t => {
                    if rng.gen_bool(0.7) {
                        1.0
                    } else {
                        0.8
                    }
                }
                _ => 0.0,
            });
        }
    }
    rewards
}

fn as_group(rewards: &[f64]) -> RewardedGroup {
    RewardedGroup {
        statement_id: "g".into(),
        rounds: rewards
            .iter()
            .enumerate()
            .map(|(i, r)| RoundReward {
                sample_index: 0,
                round_index: i as u32 + 1,
                reward: *r,
            })
            .collect(),
        n_rollouts: 1,
        success_count: 0,
    }
}

fn c4_advantages() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut done = 0;
    while done < 1_000 {
        let rewards = random_group(&mut rng);
        if rewards.iter().all(|r| *r == rewards[0]) {
            continue;
        }
        done += 1;
        let a = group_advantages(&as_group(&rewards), DEFAULT_EPSILON).map_err(|e| e.to_string())?;
        let adv: Vec<f64> = a.rounds.iter().map(|r| r.advantage).collect();
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        ensure!(mean.abs() <= 1e-9, "group {done}: mean {mean:e}");
        ensure!((std - 1.0).abs() <= 1e-6, "group {done}: std {std}");
        for i in 0..rewards.len() {
            for j in 0..rewards.len() {
                if rewards[i] > rewards[j] {
                    ensure!(adv[i] > adv[j], "group {done}: ordering broken");
                }
            }
        }
    }
    for value in [0.0, 0.8, 1.0] {
        for len in [1, 5, 64] {
            let a = group_advantages(&as_group(&vec![value; len]), DEFAULT_EPSILON).unwrap();
            ensure!(a.rounds.iter().all(|r| r.advantage == 0.0), "degenerate {value} x {len}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 5

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Kind {
    Keep,
    KeepThreeTokens,
    NearNoop,
    LongFeedback,
    KeepBoundaryFeedback,
    EmptyPrev,
    PlaceholderPrev,
}

fn words(n: usize) -> String {
    vec!["w"; n].join(" ")
}

/// Replaces the last `count` tokens of `proof` with fresh ones.
fn mutate(proof: &str, count: usize, tag: &str) -> String {
    let mut toks: Vec<String> = proof.split_whitespace().map(str::to_string).collect();
    let len = toks.len();
    for (j, t) in toks[len - count..].iter_mut().enumerate() {
        *t = format!("{tag}_{j}");
    }
    toks.join(" ")
}

fn c5_repair_rules() -> Result<(), String> {
    // transition kinds cycle; EmptyPrev/PlaceholderPrev only as first transition
    let middle = [Kind::Keep, Kind::NearNoop, Kind::LongFeedback, Kind::KeepThreeTokens, Kind::KeepBoundaryFeedback];
    let mut trajectories = Vec::new();
    let mut expected: Vec<(String, u32)> = Vec::new();
    let mut expect_counts = [0usize; 4]; // empty, long, noop, dedup
    let mut expected_extracted = 0usize;
    let mut originals: Vec<Vec<(RoundRecord, Kind)>> = Vec::new();

    for i in 0..50usize {
        let copy_of = (i % 10 == 9).then(|| i - 1);
        let (rounds, kinds): (Vec<RoundRecord>, Vec<Kind>) = match copy_of {
            Some(src) => originals[src].iter().cloned().unzip(),
            None => {
                let transitions = 1 + i % 3;
                let mut kinds = Vec::new();
                for t in 0..transitions {
                    kinds.push(match (t, i % 7) {
                        (0, 0) => Kind::EmptyPrev,
                        (0, 1) => Kind::PlaceholderPrev,
                        _ => middle[(i + t) % middle.len()],
                    });
                }
                let mut attempts = vec![match kinds[0] {
                    Kind::EmptyPrev => String::new(),
                    Kind::PlaceholderPrev => "no_lean_code_found".to_string(),
                    _ => format!("theorem t{i} := by a{i} b{i} c{i} d{i}"),
                }];
                let mut feedback = Vec::new();
                for (t, kind) in kinds.iter().enumerate() {
                    let prev = &attempts[t];
                    let tag = format!("x{i}r{t}");
                    let next = match kind {
                        Kind::NearNoop => mutate(prev, 2, &tag),
                        Kind::KeepThreeTokens => mutate(prev, 3, &tag),
                        _ => format!("theorem t{i} := by {tag}a {tag}b {tag}c {tag}d"),
                    };
                    feedback.push(match kind {
                        Kind::LongFeedback => words(8_001),
                        Kind::KeepBoundaryFeedback => words(8_000),
                        _ => format!("unsolved goals in t{i} round {}", t + 1),
                    });
                    attempts.push(next);
                }
                feedback.push(String::new());
                let last = attempts.len() - 1;
                let rounds: Vec<RoundRecord> = attempts
                    .iter()
                    .zip(&feedback)
                    .enumerate()
                    .map(|(r, (a, f))| RoundRecord {
                        round_index: r as u32 + 1,
                        retrieved_ids: vec![format!("p-{i}-{r}")],
                        completion: String::new(),
                        attempt: a.clone(),
                        verdict: Verdict::from_backend(r == last, if r == last { "" } else { f }, 0),
                        reward: None,
                    })
                    .collect();
                let mut padded = kinds.clone();
                padded.push(Kind::Keep);
                originals.push(rounds.iter().cloned().zip(padded).collect());
                (rounds, kinds)
            }
        };
        if copy_of.is_some() {
            originals.push(Vec::new());
        }
        let key = format!("s{}", copy_of.unwrap_or(i));
        let sample = i as u32;
        for (t, kind) in kinds.iter().take(rounds.len() - 1).enumerate() {
            expected_extracted += 1;
            let kept = matches!(kind, Kind::Keep | Kind::KeepThreeTokens | Kind::KeepBoundaryFeedback);
            match kind {
                Kind::EmptyPrev | Kind::PlaceholderPrev => expect_counts[0] += 1,
                Kind::LongFeedback => expect_counts[1] += 1,
                Kind::NearNoop => expect_counts[2] += 1,
                _ if copy_of.is_some() => expect_counts[3] += 1,
                _ => {}
            }
            if kept && copy_of.is_none() {
                expected.push((format!("{key}#{sample}"), t as u32 + 2));
            }
        }
        let verified = rounds.last().unwrap().verdict.verified;
        trajectories.push(Trajectory {
            statement_id: key,
            sample_index: sample,
            round_budget: rounds.len() as u32,
            rounds,
            outcome: if verified { Outcome::Verified } else { Outcome::BudgetExhausted },
            snapshot_id: 1,
            seed: 0,
            abort_reason: None,
            extra: Map::new(),
        });
    }
    ensure!(trajectories.len() == 50, "fixture has {} trajectories", trajectories.len());

    let (examples, report) = extract_and_dedup(&trajectories);
    let got: Vec<(String, u32)> = examples.iter().map(|e| (e.source_trajectory.clone(), e.round_index)).collect();
    ensure!(got == expected, "kept set differs:\n got {got:?}\nwant {expected:?}");
    ensure!(report.extracted == expected_extracted, "extracted {} != {expected_extracted}", report.extracted);
    let counts = [report.dropped_empty_prev, report.dropped_long_feedback, report.dropped_near_noop, report.dropped_dedup];
    ensure!(counts == expect_counts, "drop counts {counts:?} != {expect_counts:?}");
    ensure!(report.is_consistent(), "report does not add up: {report:?}");
    for k in 0..4 {
        ensure!(expect_counts[k] > 0, "fixture never trips filter {k}");
    }
    ensure!(
        report.kept > 0 && examples.iter().any(|e| e.prev_feedback.split_whitespace().count() == 8_000),
        "8000-token boundary example missing"
    );
    Ok(())
}

// ---------------------------------------------------------------- 6

/// Emits attempts tagged with their round; records every prompt.
struct SentinelPolicy {
    prompts: Mutex<Vec<(u32, u32, String)>>,
}

impl PolicyClient for SentinelPolicy {
    fn generate(&self, r: &GenerateRequest<'_>) -> Result<String, PolicyError> {
        self.prompts
            .lock()
            .unwrap()
            .push((r.sample_index, r.round_index, r.prompt.to_string()));
        Ok(format!(
            "Plan.\n```lean\ntheorem s := by\n  tactic ATTEMPT_S{}_R{}\n```",
            r.sample_index, r.round_index
        ))
    }
}

/// Fails every proof with feedback naming the attempt's sentinel.
struct SentinelVerifier;

impl Verifier for SentinelVerifier {
    fn verify(&self, r: &VerifyRequest<'_>) -> Result<Verdict, VerifierError> {
        let tag = r
            .proof_text
            .split_whitespace()
            .find(|t| t.starts_with("ATTEMPT_"))
            .unwrap_or("none")
            .replace("ATTEMPT_", "FEEDBACK_");
        Ok(Verdict::from_backend(false, &format!("unsolved goals {tag}"), 1))
    }

    fn describe(&self) -> String {
        "sentinel".into()
    }
}

fn batch_bytes(parallelism: usize, seed: u64) -> Result<Vec<u8>, String> {
    let w = world20();
    let e = HashingEmbedder::default();
    let index = RetrievalIndex::empty(e.dim(), 0);
    let svc = Services {
        policy: &w.policy,
        verifier: &w.verifier,
        embedder: &e,
    };
    let cfg = BatchConfig {
        n_samples: 8,
        parallelism,
        run_seed: seed,
        rollout: RolloutConfig {
            round_budget: 6,
            ..RolloutConfig::default()
        },
    };
    let (ts, _) = run_batch(&w.statements, &index, svc, &cfg).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for t in &ts {
        t.check_invariants().map_err(|e| format!("{}: {e}", t.key()))?;
        out.extend(serde_json::to_vec(t).unwrap());
        out.push(b'\n');
    }
    Ok(out)
}

fn c6_loop_invariants() -> Result<(), String> {
    let policy = SentinelPolicy {
        prompts: Mutex::new(Vec::new()),
    };
    let e = HashingEmbedder::default();
    let index = RetrievalIndex::empty(e.dim(), 0);
    let svc = Services {
        policy: &policy,
        verifier: &SentinelVerifier,
        embedder: &e,
    };
    let stmt = TheoremStatement::new("theorem s : True", Source::Public);
    let cfg = BatchConfig {
        n_samples: 3,
        parallelism: 3,
        run_seed: 1,
        rollout: RolloutConfig {
            round_budget: 6,
            ..RolloutConfig::default()
        },
    };
    let (ts, _) = run_batch(&[stmt], &index, svc, &cfg).map_err(|e| e.to_string())?;
    for t in &ts {
        ensure!(t.rounds.len() == 6 && t.outcome == Outcome::BudgetExhausted, "rollout shape");
    }
    let prompts = policy.prompts.lock().unwrap();
    ensure!(prompts.len() == 18, "expected 18 prompts, saw {}", prompts.len());
    for (s, t, prompt) in prompts.iter() {
        for j in 1..*t {
            let has_attempt = prompt.contains(&format!("ATTEMPT_S{s}_R{j}\n"));
            let has_feedback = prompt.contains(&format!("FEEDBACK_S{s}_R{j}"));
            let fresh = j + 1 == *t;
            ensure!(has_attempt == fresh, "round {t} prompt attempt of round {j}: {has_attempt}");
            ensure!(has_feedback == fresh, "round {t} prompt feedback of round {j}: {has_feedback}");
        }
        for other in 0..3 {
            ensure!(
                other == *s || !prompt.contains(&format!("_S{other}_")),
                "sample {s} saw sample {other}"
            );
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let budget = rng.gen_range(1..=16u32);
        let at = rng.gen_range(1..=20u32);
        struct At(u32);
        impl PolicyClient for At {
            fn generate(&self, r: &GenerateRequest<'_>) -> Result<String, PolicyError> {
                let body = if r.round_index >= self.0 { "theorem a : 1 = 1 := rfl".to_string() } else { format!("theorem a : 1 = 1 := by\n  sorry -- {}", r.round_index) };
                Ok(format!("P.\n```lean\n{body}\n```"))
            }
        }
        let mut v = prover_core::verifier::SimulatedVerifier::new();
        let s = TheoremStatement::new("theorem a : 1 = 1", Source::Public);
        v.register(s.id.clone(), "theorem a : 1 = 1 := rfl");
        let p = At(at);
        let svc = Services { policy: &p, verifier: &v, embedder: &e };
        let t = run_rollout(&s, 0, 0, &index, svc, &RolloutConfig { round_budget: budget, ..RolloutConfig::default() });
        t.check_invariants().map_err(|e| format!("budget {budget}, success {at}: {e}"))?;
        ensure!(t.rounds.len() as u32 == budget.min(at), "halted after {} rounds", t.rounds.len());
    }

    let one = batch_bytes(1, 77)?;
    let eight = batch_bytes(8, 77)?;
    ensure!(one == eight, "parallelism 1 and 8 disagree");
    ensure!(batch_bytes(8, 77)? == eight, "same seed twice disagrees");
    Ok(())
}

// ---------------------------------------------------------------- 7

/// Final corpus content hash of the K = 3 run on the shipped world.
const COEVOLVE_GOLDEN_HASH: &str = "bf4e59d44dd7eeb346904e81c402afdf280730b99d7201c7b4d3b39ef494db70";

fn coevolve_run() -> Result<(Corpus, Vec<prover_core::coevolve::IterationReport>), String> {
    let w = world20();
    let e = HashingEmbedder::default();
    let mut corpus = Corpus::in_memory();
    let memory = MemoryStore::new(rebuild_index(&corpus, &e, 0).map_err(|e| e.to_string())?);
    let cfg = CoevolveConfig {
        batch: BatchConfig {
            n_samples: 8,
            parallelism: 4,
            run_seed: 2024,
            rollout: RolloutConfig {
                round_budget: 4,
                ..RolloutConfig::default()
            },
        },
        drop_solved: false,
    };
    let run = run_coevolution(3, &w.statements, &mut corpus, &memory, &[&w.policy], &w.verifier, &e, &cfg)
        .map_err(|e| e.to_string())?;
    if let Some((k, err)) = run.error {
        return Err(format!("iteration {k}: {err}"));
    }
    let pinned = memory.pin();
    if pinned.len() != corpus.proofs().len() {
        return Err("final index out of sync".into());
    }
    Ok((corpus, run.reports))
}

fn c7_coevolution() -> Result<(), String> {
    let w = world20();
    let (corpus, reports) = coevolve_run()?;
    let (again, _) = coevolve_run()?;
    ensure!(corpus.content_hash() == again.content_hash(), "corpus hash differs across runs");
    ensure!(reports.len() == 3, "{} iterations reported", reports.len());
    let hard = w.partially_solved(8, 4);
    let mut prev = 0;
    for r in &reports {
        ensure!(r.corpus_size_after >= r.corpus_size_before && r.corpus_size_before >= prev, "corpus shrank");
        ensure!(r.corpus_size_after == r.corpus_size_before + r.new_verified, "size arithmetic");
        ensure!(r.index_size_after == r.corpus_size_after, "index {} != proofs {}", r.index_size_after, r.corpus_size_after);
        ensure!(r.hard_cases == hard.len(), "iteration {}: {} hard cases, expected {}", r.iteration, r.hard_cases, hard.len());
        prev = r.corpus_size_after;
    }
    let expected: BTreeSet<(String, String)> = w
        .behaviors
        .iter()
        .filter(|b| b.expected_successes(8, 4) > 0)
        .map(|b| (b.statement_id.clone(), b.solution.clone()))
        .collect();
    let got: BTreeSet<(String, String)> = corpus
        .proofs()
        .iter()
        .map(|p: &VerifiedProof| (p.statement_id.clone(), p.proof_text.clone()))
        .collect();
    ensure!(got == expected, "corpus proofs differ from the world's solvable set");

    // hard set content, via a fresh single iteration
    let e = HashingEmbedder::default();
    let mut c = Corpus::in_memory();
    let memory = MemoryStore::new(rebuild_index(&c, &e, 0).unwrap());
    let svc = Services { policy: &w.policy, verifier: &w.verifier, embedder: &e };
    let cfg = CoevolveConfig {
        batch: BatchConfig { n_samples: 8, parallelism: 2, run_seed: 3, rollout: RolloutConfig { round_budget: 4, ..RolloutConfig::default() } },
        drop_solved: false,
    };
    let out = prover_core::coevolve::run_iteration(0, &w.statements, &mut c, &memory, svc, &cfg).map_err(|e| e.to_string())?;
    let mut got_hard = out.routing.hard_case_ids.clone();
    got_hard.sort();
    ensure!(got_hard == hard, "hard set {got_hard:?} != {hard:?}");

    // memory growth is visible to later iterations
    let later = corpus.trajectories().iter().filter(|t| t.rounds.iter().any(|r| !r.retrieved_ids.is_empty())).count();
    let first_iter_retrieval = corpus.trajectories()[..160].iter().all(|t| t.rounds.iter().all(|r| r.retrieved_ids.is_empty()));
    ensure!(first_iter_retrieval && later > 0, "retrieval did not pick up earlier proofs");

    let hash = corpus.content_hash();
    ensure!(hash == COEVOLVE_GOLDEN_HASH, "golden hash mismatch: {hash}");
    Ok(())
}

// ---------------------------------------------------------------- 8

fn c8_retrieval() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..200 {
        let dim = rng.gen_range(2..=24);
        let size = rng.gen_range(1..=100);
        let mut entries: Vec<MemoryEntry> = Vec::with_capacity(size);
        for i in 0..size {
            let values: Vec<f32> = if i > 0 && rng.gen_bool(0.1) {
                entries[rng.gen_range(0..i)].vector.values.clone()
            } else {
                (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
            };
            entries.push(MemoryEntry {
                proof_ref: format!("p{i}"),
                statement_text: format!("s{i}"),
                proof_text: format!("proof {i}"),
                vector: EmbeddingVector::normalized(values),
                insert_seq: i as u64,
            });
        }
        let index = RetrievalIndex::from_entries(entries.clone(), dim, trial).map_err(|e| e.to_string())?;
        let query = EmbeddingVector::normalized((0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect());
        let k = rng.gen_range(1..=size + 3);
        let mut brute: Vec<(f64, u64)> = entries.iter().map(|e| (query.cosine(&e.vector), e.insert_seq)).collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        brute.truncate(k);
        let got: Vec<(f64, u64)> = index
            .topk_by_vector(&query, k)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|h| (h.similarity, h.entry.insert_seq))
            .collect();
        ensure!(got == brute, "trial {trial}: top-{k} differs from brute force");
        let self_hit = index.topk_by_vector(&entries[0].vector, 1).map_err(|e| e.to_string())?;
        ensure!((self_hit[0].similarity - 1.0).abs() <= 1e-6, "trial {trial}: self similarity {}", self_hit[0].similarity);
    }

    let e = HashingEmbedder::default();
    let w = world20();
    let mut corpus = Corpus::in_memory();
    corpus.add_statements(w.statements.clone()).unwrap();
    let first: Vec<VerifiedProof> = w.behaviors[..5]
        .iter()
        .map(|b| VerifiedProof::new(b.statement_id.clone(), b.solution.clone(), 0, "fixture"))
        .collect();
    corpus.ingest_verified(first).unwrap();
    let store = MemoryStore::new(rebuild_index(&corpus, &e, 0).unwrap());
    let snapshot = store.pin();
    for b in &w.behaviors[..5] {
        let hits = query_topk(&snapshot, &b.statement, 1, &e).map_err(|e| e.to_string())?;
        ensure!((hits[0].similarity - 1.0).abs() <= 1e-6, "self query of {}", b.statement_id);
    }
    let pinned = store.pin();
    let bytes = |idx: &RetrievalIndex| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        save_index(idx, dir.path()).unwrap();
        let mut b = std::fs::read(dir.path().join(prover_core::retrieval::INDEX_FILE)).unwrap();
        b.extend(std::fs::read(dir.path().join(prover_core::retrieval::INDEX_META_FILE)).unwrap());
        b
    };
    let before = bytes(&pinned);
    let more: Vec<VerifiedProof> = w.behaviors[5..12]
        .iter()
        .map(|b| VerifiedProof::new(b.statement_id.clone(), b.solution.clone(), 1, "fixture"))
        .collect();
    corpus.ingest_verified(more).unwrap();
    let rebuilt = store.rebuild(&corpus, &e).map_err(|e| e.to_string())?;
    ensure!(bytes(&pinned) == before, "pinned snapshot changed after rebuild");
    ensure!(rebuilt.len() == 12 && pinned.len() == 5, "sizes {} / {}", rebuilt.len(), pinned.len());
    ensure!(bytes(&store.pin()) != before, "rebuild did not publish");
    Ok(())
}

// ---------------------------------------------------------------- 9

fn synthetic(id: &str, sample: u32, success: Option<u32>, budget: u32) -> Trajectory {
    let len = success.unwrap_or(budget);
    Trajectory {
        statement_id: id.into(),
        sample_index: sample,
        rounds: (1..=len)
            .map(|t| RoundRecord {
                round_index: t,
                retrieved_ids: vec![],
                completion: String::new(),
                attempt: format!("p{t}"),
                verdict: Verdict::from_backend(Some(t) == success, if Some(t) == success { "" } else { "err" }, 0),
                reward: None,
            })
            .collect(),
        outcome: if success.is_some() { Outcome::Verified } else { Outcome::BudgetExhausted },
        round_budget: budget,
        snapshot_id: 0,
        seed: 0,
        abort_reason: None,
        extra: Map::new(),
    }
}

fn binom(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn check_monotone(ts: &[Trajectory], max_r: u32, max_k: usize, label: &str) -> Result<(), String> {
    for r in 1..=max_r {
        for k in 1..=max_k {
            let here = pass_rk(ts, r, k).map_err(|e| e.to_string())?;
            if r > 1 {
                ensure!(here + 1e-12 >= pass_rk(ts, r - 1, k).unwrap(), "{label}: not monotone in R at ({r},{k})");
            }
            if k > 1 {
                ensure!(here + 1e-12 >= pass_rk(ts, r, k - 1).unwrap(), "{label}: not monotone in k at ({r},{k})");
            }
        }
    }
    Ok(())
}

fn c9_budget() -> Result<(), String> {
    // world fixture at depth 16
    let w = world20();
    let e = HashingEmbedder::default();
    let index = RetrievalIndex::empty(e.dim(), 0);
    let svc = Services { policy: &w.policy, verifier: &w.verifier, embedder: &e };
    let cfg = BatchConfig { n_samples: 8, parallelism: 4, run_seed: 9, rollout: RolloutConfig::default() };
    let (world_ts, _) = run_batch(&w.statements, &index, svc, &cfg).map_err(|e| e.to_string())?;
    check_monotone(&world_ts, 16, 8, "world")?;

    // synthetic deep-success fixture: per chain, m_R successes out of 64 by depth R
    let n = 64u32;
    let profile = [(2u32, 2u32), (4, 8), (8, 10), (16, 11)];
    let mut deep = Vec::new();
    for s in 0..4 {
        let id = format!("d{s}");
        let mut sample = 0;
        let mut prev = 0;
        for (depth, total) in profile {
            for _ in prev..total {
                deep.push(synthetic(&id, sample, Some(depth), 16));
                sample += 1;
            }
            prev = total;
        }
        while sample < n {
            deep.push(synthetic(&id, sample, None, 16));
            sample += 1;
        }
    }
    check_monotone(&deep, 16, 16, "deep")?;
    let point = best_pass(&deep, 16).map_err(|e| e.to_string())?;
    let m_at = |r: u32| profile.iter().filter(|(d, _)| *d <= r).map(|(_, m)| *m).max().unwrap_or(0);
    for a in &point.allocations {
        let m = m_at(a.rounds) as u128;
        let exact = 1.0 - binom(64 - m, a.k as u128) as f64 / binom(64, a.k as u128) as f64;
        ensure!((a.pass - exact).abs() <= 1e-12, "({}, {}) = {} vs {exact}", a.rounds, a.k, a.pass);
    }
    ensure!(point.best.rounds == 4, "optimum at R = {}, expected interior R = 4", point.best.rounds);

    // doubling monotonicity on a Bernoulli sweep at depth 1..8
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut sweep_ts = Vec::new();
    for s in 0..30 {
        let p = rng.gen_range(0.02..0.3);
        for i in 0..64 {
            let success = (1..=8).find(|_| rng.gen_bool(p));
            sweep_ts.push(synthetic(&format!("b{s}"), i, success, 8));
        }
    }
    check_monotone(&sweep_ts, 8, 16, "sweep")?;
    let budgets = [1u32, 2, 4, 8, 16, 32, 64];
    let rows = budget_sweep(&sweep_ts, &budgets);
    for pair in rows.windows(2) {
        let (a, b) = (pair[0].point.as_ref().unwrap(), pair[1].point.as_ref().unwrap());
        let widenable = a.allocations.iter().all(|x| b.allocations.iter().any(|y| y.rounds == x.rounds && y.k == 2 * x.k));
        if widenable {
            ensure!(b.best.pass + 1e-12 >= a.best.pass, "BestPass({}) < BestPass({})", b.budget, a.budget);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- 10

fn c10_prompt_golden() -> Result<(), String> {
    let stmt = TheoremStatement::new("theorem w07 (x y : Real) (h : x ≤ y) (h1 : y ≤ 0) : x ≤ 0", Source::Public);
    let round1 = InteractionState::initial(stmt.clone(), Vec::new());
    let golden1 = include_str!("golden/prompt_round1.txt");
    ensure!(render_prompt(&round1, MAX_PROMPT_TOKENS).rendered_text == golden1, "round-1 prompt differs from golden");

    let entry = |i: u64, text: &str| MemoryEntry {
        proof_ref: format!("p{i}"),
        statement_text: String::new(),
        proof_text: text.to_string(),
        vector: EmbeddingVector::default(),
        insert_seq: i,
    };
    let round3 = InteractionState {
        statement: stmt.clone(),
        retrieved: vec![
            entry(0, "theorem w01 (a b : Nat) : a + b = b + a := by\n  simp"),
            entry(1, "theorem w04 (n : Nat) : n ≤ n + 1 := by\n  simp"),
        ],
        prev_attempt: Some(format!(
            "{} := by\n  have h0 : Real := Nat.succ BAD_TYPE\n  linarith\n  -- attempt 2",
            stmt.lean_statement
        )),
        prev_feedback: Some(SAMPLE_DIAGNOSTIC.to_string()),
        round_index: 3,
    };
    let golden3 = include_str!("golden/prompt_round3.txt");
    ensure!(render_prompt(&round3, MAX_PROMPT_TOKENS).rendered_text == golden3, "round-3 prompt differs from golden");

    let colored: String = SAMPLE_DIAGNOSTIC
        .lines()
        .enumerate()
        .map(|(i, l)| format!("\u{1b}[{}m{l}\u{1b}[0m\n", 31 + i % 6))
        .collect();
    let once = sanitize_feedback(&colored);
    ensure!(once.trim_end() == SAMPLE_DIAGNOSTIC, "stripping did not restore the sample");
    ensure!(sanitize_feedback(&once) == once, "stripping not idempotent");
    ensure!(sanitize_feedback(SAMPLE_DIAGNOSTIC) == SAMPLE_DIAGNOSTIC, "plain sample altered");
    Ok(())
}
