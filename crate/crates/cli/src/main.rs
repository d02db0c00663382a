mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, EmbedderBackend, Partial, PolicyBackend, Profile, VerifierBackend};

/// Retrieval-grounded multi-round proof refinement.
#[derive(Debug, Parser)]
#[command(name = "prover", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    #[arg(long, global = true, value_enum)]
    policy: Option<PolicyBackend>,
    #[arg(long, global = true, value_enum)]
    verifier: Option<VerifierBackend>,
    #[arg(long, global = true, value_enum)]
    embedder: Option<EmbedderBackend>,
    /// World spec for the scripted policy and simulated verifier.
    #[arg(long, global = true)]
    world: Option<PathBuf>,
    #[arg(long, global = true)]
    policy_url: Option<String>,
    #[arg(long, global = true)]
    verifier_url: Option<String>,
    #[arg(long, global = true)]
    embed_url: Option<String>,
    #[arg(long, global = true)]
    round_budget: Option<u32>,
    #[arg(long, global = true)]
    n_samples: Option<u32>,
    #[arg(long, global = true)]
    k_retrieval: Option<usize>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    timeout_ms: Option<u64>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    #[arg(long, global = true)]
    top_p: Option<f64>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl GlobalArgs {
    fn as_partial(&self) -> Partial {
        Partial {
            profile: self.profile,
            policy: self.policy,
            verifier: self.verifier,
            embedder: self.embedder,
            world: self.world.clone(),
            policy_url: self.policy_url.clone(),
            verifier_url: self.verifier_url.clone(),
            embed_url: self.embed_url.clone(),
            round_budget: self.round_budget,
            n_samples: self.n_samples,
            k_retrieval: self.k_retrieval,
            parallelism: self.parallelism,
            seed: self.seed,
            timeout_ms: self.timeout_ms,
            temperature: self.temperature,
            top_p: self.top_p,
            ..Partial::default()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one rollout on a single statement and print the trajectory.
    Prove {
        /// Lean statement text.
        statement: String,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        sample: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run n rollouts per statement of a JSONL file.
    Batch {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
    },
    /// Pass@k and fixed-budget sweeps over stored trajectories.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        /// Total budgets B to analyze, comma separated.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<u32>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Turn trajectories into filtered, deduplicated repair examples.
    ExtractRepairs {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Per-round rewards, pooled advantages and hard cases.
    RlSignals {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        hard_out: Option<PathBuf>,
        #[arg(long, default_value_t = prover_core::rl::DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Iterate rollouts, corpus growth and re-indexing.
    Coevolve {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        corpus_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        iterations: u32,
        /// Drop statements every rollout solved from later iterations.
        #[arg(long)]
        drop_solved: bool,
    },
    /// Rebuild the retrieval index of a corpus.
    Index {
        #[arg(long)]
        corpus_dir: PathBuf,
    },
    /// Label statements with domain and difficulty via the policy endpoint.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print corpus statistics.
    Stats {
        #[arg(long)]
        corpus_dir: PathBuf,
        /// Rewrite record files without superseded entries.
        #[arg(long)]
        compact: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
