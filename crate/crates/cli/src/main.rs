//! `sstx`: command-line driver for the extreme-prediction competition harness.
//!
//! Stages run one at a time against a work directory:
//! synth → climatology → mask → truth → benchmark → validate → score → rank,
//! plus `summary` for plot data. Each prints a one-line JSON run record on
//! stdout. Exit codes: 2 usage, 3 config, 4 data, 5 invalid submission.

mod config;
mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use config::RunConfig;
use stages::{Failure, StageOutput};

#[derive(Parser, Debug)]
#[command(name = "sstx", version, about = "Spatio-temporal extreme-prediction competition harness")]
struct Cli {
    /// Flat `key = value` configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one configuration key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for intra-stage parallelism
    #[arg(long, global = true, env = "HARNESS_THREADS")]
    threads: Option<usize>,

    /// Directory holding every stage's inputs and outputs
    #[arg(long, global = true, value_name = "DIR")]
    workdir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic basin: grid, raw field and its generating mean
    Synth,
    /// Estimate the seasonal mean, anomalies and trend diagnostics
    Climatology,
    /// Draw monthly masks, the training field and the validation index
    Mask,
    /// Compute the minimum process and its values at validation points
    Truth,
    /// Build the pooled-minima benchmark submission
    Benchmark,
    /// Check a submission file's structure
    Validate {
        submission: PathBuf,
        /// Expected number of rows; defaults to the work directory's validation index
        #[arg(long)]
        points: Option<usize>,
    },
    /// Score one submission against the truth
    Score {
        submission: PathBuf,
        /// Team name; defaults to the file stem
        #[arg(long)]
        team: Option<String>,
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
    },
    /// Score and rank submissions given as `team=path` or bare paths
    Rank {
        #[arg(required = true, value_name = "SUBMISSION")]
        entries: Vec<String>,
        #[arg(long, value_name = "FILE")]
        truth: Option<PathBuf>,
    },
    /// Histogram and boxplot data for plotting
    Summary,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Climatology => "climatology",
            Command::Mask => "mask",
            Command::Truth => "truth",
            Command::Benchmark => "benchmark",
            Command::Validate { .. } => "validate",
            Command::Score { .. } => "score",
            Command::Rank { .. } => "rank",
            Command::Summary => "summary",
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let cfg_err = |e: config::ConfigError| Failure::Config(e.to_string());
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(cfg_err)?,
        None => RunConfig::default(),
    };
    for s in &cli.set {
        cfg.apply_assignment(s).map_err(cfg_err)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(w) = &cli.workdir {
        cfg.workdir = w.clone();
    }
    cfg.validate().map_err(cfg_err)?;
    Ok(cfg)
}

fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn run_stage(cli: &Cli, cfg: &RunConfig) -> Result<StageOutput, Failure> {
    let root = cfg.workdir.as_path();
    match &cli.command {
        Command::Synth => stages::synth(cfg, root),
        Command::Climatology => stages::climatology(cfg, root),
        Command::Mask => stages::mask(cfg, root),
        Command::Truth => stages::truth(cfg, root),
        Command::Benchmark => stages::benchmark(cfg, root),
        Command::Validate { submission, points } => stages::validate(root, submission, *points),
        Command::Score { submission, team, truth } => {
            stages::score(cfg, root, submission, team.as_deref(), truth.as_deref())
        }
        Command::Rank { entries, truth } => stages::rank(cfg, root, entries, truth.as_deref()),
        Command::Summary => stages::summary(cfg, root),
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve_config(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(&cfg.workdir)
        .map_err(|e| Failure::Data(format!("{}: {e}", cfg.workdir.display())))?;

    let started = Instant::now();
    let out = run_stage(cli, &cfg)?;
    let wall = started.elapsed().as_secs_f64();

    let mut digests = Map::new();
    for p in &out.outputs {
        let name = p.strip_prefix(&cfg.workdir).unwrap_or(p).display().to_string();
        digests.insert(name, Value::String(sha256_file(p)?));
    }
    let record = json!({
        "stage": cli.command.name(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "outputs": digests,
        "metrics": out.metrics,
    });
    println!("{record}");
    match out.rejection {
        Some(reason) => Err(Failure::Validation(reason)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sstx {}: {f}", cli.command.name());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
