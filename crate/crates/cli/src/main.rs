//! `loadshed`: data generation, proxy training, verification, sampling
//! benchmark and report tables.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "loadshed", version, about = "Worst-case load-shed verification for switching proxies")]
struct Cli {
    /// TOML file with one table per command; flags win on conflict.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (1 = serial).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Record wall-clock times in outputs (otherwise written as 0).
    #[arg(long, global = true)]
    timings: bool,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Label uniformly drawn scenarios with globally optimal switchings.
    GenData(GenDataArgs),
    /// Train the switching proxy on a dataset.
    Train(TrainArgs),
    /// Search for the worst-case scenario and run the restoration models.
    Verify(VerifyArgs),
    /// Random-sampling baseline, optionally next to a verification run.
    Bench(BenchArgs),
    /// Merge benchmark runs into comparison tables.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenDataArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_lo: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_hi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_nodes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<PathBuf>,
    /// Dataset file, or a gen-data output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<PathBuf>,
    /// Model file, or a train output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nn: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    restarts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stage_tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    inner_tol: Option<f64>,
    /// Keep angle limits, gated thermal cones and McCormick shunts.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    full_soc: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    case: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nn: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Verification starts; 0 skips the optimized arm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    restarts: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    full_soc: Option<bool>,
    /// Exit 0 even if the rejection budget ran out.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    allow_partial: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// Bench output directories or run files.
    #[arg(long, num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    runs: Option<Vec<PathBuf>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

/// Exit code 1 for bad usage or inputs, 2 for failures while running.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

pub type CmdResult = std::result::Result<(), Failure>;

pub struct Globals {
    pub config: Option<toml::Table>,
    pub timings: bool,
    pub jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = run(cli);
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Config(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let config = match &cli.config {
        Some(p) => Some(config::read_table(p).map_err(Failure::Config)?),
        None => None,
    };
    let jobs = cli.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(Failure::Config(anyhow::anyhow!("--jobs must be at least 1")));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure::Runtime(e.into()))?;
    let g = Globals {
        config,
        timings: cli.timings,
        jobs,
    };
    match cli.cmd {
        Command::GenData(a) => commands::gen_data(&g, config::resolve(&g, "gen-data", &a)?),
        Command::Train(a) => commands::train(&g, config::resolve(&g, "train", &a)?),
        Command::Verify(a) => commands::verify(&g, config::resolve(&g, "verify", &a)?),
        Command::Bench(a) => commands::bench(&g, config::resolve(&g, "bench", &a)?),
        Command::Report(a) => commands::report(&g, config::resolve(&g, "report", &a)?),
    }
}
