use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::Value;

use prover_core::coevolve::{run_coevolution, CoevolveConfig};
use prover_core::corpus::{
    classify_statement, read_jsonl, write_jsonl, ClassifyError, Corpus, Source, TheoremStatement,
};
use prover_core::engine::{partition_aborted, rollout_seed, run_batch, run_rollout, Services, Trajectory};
use prover_core::eval::{evaluate, sweep_csv};
use prover_core::repair::extract_and_dedup;
use prover_core::retrieval::{load_index, rebuild_index, save_index, EmbeddingProvider, MemoryStore, RetrievalIndex};
use prover_core::rl::{build_groups, format_check, group_advantages, select_hard_cases};

use crate::backends::{self, Backends};
use crate::config::{self, ConfigError, Partial, PolicyBackend, RunConfig};
use crate::{Cli, Command};

const INDEX_DIR: &str = "index";

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(cli)?;
    log::debug!("resolved config:\n{}", cfg.to_toml());
    match &cli.command {
        Command::Prove {
            statement,
            corpus_dir,
            sample,
            out,
        } => prove(&cfg, statement, corpus_dir.as_deref(), *sample, out.as_deref()),
        Command::Batch {
            input,
            out,
            corpus_dir,
        } => batch(&cfg, input, out, corpus_dir.as_deref()),
        Command::Evaluate {
            input,
            k,
            sweep,
            out,
            csv,
        } => evaluate_cmd(&cfg, input, *k, sweep, out, csv.as_deref()),
        Command::ExtractRepairs { input, out, report } => extract_repairs(&cfg, input, out, report.as_deref()),
        Command::RlSignals {
            input,
            out,
            hard_out,
            epsilon,
        } => rl_signals(&cfg, input, out, hard_out.as_deref(), *epsilon),
        Command::Coevolve {
            pool,
            corpus_dir,
            iterations,
            drop_solved,
        } => coevolve(&cfg, pool, corpus_dir, *iterations, *drop_solved),
        Command::Index { corpus_dir } => index(&cfg, corpus_dir),
        Command::Classify { input, out } => classify(&cfg, input, out),
        Command::Stats { corpus_dir, compact } => stats(corpus_dir, *compact),
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let file = cli.global.config.as_deref().map(Partial::from_file).transpose()?;
    let env = Partial::from_env(|k| std::env::var(k).ok());
    Ok(config::resolve(file, env, cli.global.as_partial())?)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Statement records: either full statement records (`lean_statement`) or
/// world-spec lines (`statement`).
fn read_statements(path: &Path) -> anyhow::Result<Vec<TheoremStatement>> {
    let raw: Vec<Value> = read_jsonl(path)?;
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| {
            if v.get("lean_statement").is_some() {
                let s: TheoremStatement = serde_json::from_value(v)
                    .with_context(|| format!("{} line {}", path.display(), i + 1))?;
                Ok(s.with_content_id())
            } else if let Some(text) = v.get("statement").and_then(Value::as_str) {
                Ok(TheoremStatement::new(text, Source::Public))
            } else {
                bail!("{} line {}: no statement text", path.display(), i + 1)
            }
        })
        .collect()
}

fn read_trajectories(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    Ok(read_jsonl(path)?)
}

/// The saved index of `corpus_dir` if it matches the corpus, else a fresh
/// build.
fn load_memory(corpus: &Corpus, dir: Option<&Path>, embedder: &dyn EmbeddingProvider) -> anyhow::Result<RetrievalIndex> {
    if let Some(dir) = dir {
        if let Ok(idx) = load_index(&dir.join(INDEX_DIR)) {
            if idx.len() == corpus.proofs().len() && idx.dim() == embedder.dim() {
                return Ok(idx);
            }
            log::info!("saved index is stale; rebuilding");
        }
    }
    Ok(rebuild_index(corpus, embedder, 0)?)
}

fn open_corpus(dir: Option<&Path>) -> anyhow::Result<Corpus> {
    Ok(match dir {
        Some(d) => Corpus::open(d)?,
        None => Corpus::in_memory(),
    })
}

fn services(b: &Backends) -> Services<'_> {
    Services {
        policy: b.policy(),
        verifier: b.verifier.as_ref(),
        embedder: b.embedder.as_ref(),
    }
}

fn prove(cfg: &RunConfig, statement: &str, corpus_dir: Option<&Path>, sample: u32, out: Option<&Path>) -> anyhow::Result<()> {
    if statement.trim().is_empty() {
        return Err(ConfigError("statement text is empty".into()).into());
    }
    let b = backends::build(cfg)?;
    let corpus = open_corpus(corpus_dir)?;
    let index = load_memory(&corpus, corpus_dir, b.embedder.as_ref())?;
    let stmt = TheoremStatement::new(statement, Source::Public);
    let seed = rollout_seed(&stmt.id, sample, cfg.seed);
    let t = run_rollout(&stmt, sample, seed, &index, services(&b), &backends::rollout_config(cfg));
    println!("{}", serde_json::to_string_pretty(&t)?);
    if let Some(out) = out {
        write_jsonl(out, [&t])?;
        cfg.write_resolved(&parent_dir(out))?;
    }
    if t.abort_reason.is_some() {
        bail!("rollout aborted: {}", t.abort_reason.unwrap_or_default());
    }
    Ok(())
}

fn quarantine_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectories");
    out.with_file_name(format!("{stem}.aborted.jsonl"))
}

fn batch(cfg: &RunConfig, input: &Path, out: &Path, corpus_dir: Option<&Path>) -> anyhow::Result<()> {
    let statements = read_statements(input)?;
    let b = backends::build(cfg)?;
    let corpus = open_corpus(corpus_dir)?;
    let index = load_memory(&corpus, corpus_dir, b.embedder.as_ref())?;
    let (all, report) = run_batch(&statements, &index, services(&b), &backends::batch_config(cfg))?;
    let (kept, aborted) = partition_aborted(all);
    write_jsonl(out, &kept)?;
    write_jsonl(&quarantine_path(out), &aborted)?;
    cfg.write_resolved(&parent_dir(out))?;
    println!("{}", serde_json::to_string(&report)?);
    if report.trajectories > 0 && report.aborted == report.trajectories {
        bail!("every rollout aborted: {}", aborted[0].abort_reason.clone().unwrap_or_default());
    }
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, input: &Path, k: usize, sweep: &[u32], out: &Path, csv: Option<&Path>) -> anyhow::Result<()> {
    let trajectories = read_trajectories(input)?;
    let report = evaluate(&trajectories, k, sweep)?;
    write_json(out, &report)?;
    if let Some(csv) = csv {
        fs::write(csv, sweep_csv(&report.sweep)).with_context(|| format!("writing {}", csv.display()))?;
    }
    cfg.write_resolved(&parent_dir(out))?;
    println!("pass@{k} = {:.6} over {} statements", report.pass_at_k, report.statements);
    Ok(())
}

fn extract_repairs(cfg: &RunConfig, input: &Path, out: &Path, report_path: Option<&Path>) -> anyhow::Result<()> {
    let trajectories = read_trajectories(input)?;
    let (examples, report) = extract_and_dedup(&trajectories);
    write_jsonl(out, &examples)?;
    match report_path {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string(&report)?),
    }
    cfg.write_resolved(&parent_dir(out))?;
    Ok(())
}

fn rl_signals(cfg: &RunConfig, input: &Path, out: &Path, hard_out: Option<&Path>, epsilon: f64) -> anyhow::Result<()> {
    let trajectories = read_trajectories(input)?;
    let groups = build_groups(&trajectories, &format_check);
    let advantages = groups
        .iter()
        .map(|g| group_advantages(g, epsilon))
        .collect::<Result<Vec<_>, _>>()?;
    write_jsonl(out, &advantages)?;
    let hard = select_hard_cases(&groups);
    if let Some(p) = hard_out {
        let text: String = hard.iter().map(|id| format!("{id}\n")).collect();
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    cfg.write_resolved(&parent_dir(out))?;
    println!("{} groups, {} hard cases", groups.len(), hard.len());
    Ok(())
}

fn coevolve(cfg: &RunConfig, pool_path: &Path, corpus_dir: &Path, iterations: u32, drop_solved: bool) -> anyhow::Result<()> {
    if iterations == 0 {
        return Err(ConfigError("--iterations must be at least 1".into()).into());
    }
    let pool = read_statements(pool_path)?;
    let b = backends::build(cfg)?;
    let mut corpus = Corpus::open(corpus_dir)?;
    let memory = MemoryStore::new(load_memory(&corpus, Some(corpus_dir), b.embedder.as_ref())?);
    cfg.write_resolved(corpus_dir)?;
    let config = CoevolveConfig {
        batch: backends::batch_config(cfg),
        drop_solved,
    };
    let run = run_coevolution(
        iterations,
        &pool,
        &mut corpus,
        &memory,
        &b.policy_refs(),
        b.verifier.as_ref(),
        b.embedder.as_ref(),
        &config,
    )?;
    save_index(&memory.pin(), &corpus_dir.join(INDEX_DIR))?;
    for r in &run.reports {
        println!("{}", serde_json::to_string(r)?);
    }
    if let Some((k, e)) = run.error {
        bail!("iteration {k} failed after {} completed: {e}", run.reports.len());
    }
    Ok(())
}

fn index(cfg: &RunConfig, corpus_dir: &Path) -> anyhow::Result<()> {
    let corpus = Corpus::open(corpus_dir)?;
    let b = backends::build(cfg)?;
    let dir = corpus_dir.join(INDEX_DIR);
    let next = load_index(&dir).map(|i| i.snapshot_id() + 1).unwrap_or(0);
    let idx = rebuild_index(&corpus, b.embedder.as_ref(), next)?;
    save_index(&idx, &dir)?;
    cfg.write_resolved(corpus_dir)?;
    println!("indexed {} proofs (snapshot {})", idx.len(), idx.snapshot_id());
    Ok(())
}

fn classify(cfg: &RunConfig, input: &Path, out: &Path) -> anyhow::Result<()> {
    if cfg.policy != PolicyBackend::Remote {
        return Err(ConfigError("classify needs a remote policy endpoint (--policy remote)".into()).into());
    }
    let mut statements = read_statements(input)?;
    let b = backends::build(cfg)?;
    let params = backends::rollout_config(cfg).params;
    let mut failed = 0usize;
    for s in &mut statements {
        match classify_statement(s, b.policy(), &params) {
            Ok(_) => {}
            Err(ClassifyError::LabelerUnavailable(e)) => return Err(e).context("labeler"),
            Err(e) => {
                failed += 1;
                log::warn!("{}: {e}", s.id);
            }
        }
    }
    write_jsonl(out, &statements)?;
    cfg.write_resolved(&parent_dir(out))?;
    println!("labeled {} of {} statements", statements.len() - failed, statements.len());
    Ok(())
}

fn stats(corpus_dir: &Path, compact: bool) -> anyhow::Result<()> {
    if !corpus_dir.is_dir() {
        bail!("no corpus at {}", corpus_dir.display());
    }
    let corpus = Corpus::open(corpus_dir)?;
    if compact {
        corpus.compact()?;
    }
    println!("{}", serde_json::to_string_pretty(&corpus.stats())?);
    Ok(())
}
