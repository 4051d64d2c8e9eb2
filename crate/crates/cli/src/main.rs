//! `maria`: data generation, training, evaluation, ablation and gradient
//! checking for the multi-scenario ranker.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage or config error, 3 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum Failure {
    /// A check ran and did not pass.
    Check(String),
    Usage(String),
    Io(String),
}

impl Failure {
    pub fn message(&self) -> String {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) => m.clone(),
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl From<maria_core::Error> for Failure {
    fn from(e: maria_core::Error) -> Self {
        use maria_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Io { .. } | E::DataLine { .. } | E::Checkpoint(_) | E::Json(_) => Failure::Io(msg),
            E::Diverged { .. } => Failure::Check(msg),
            _ => Failure::Usage(msg),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "maria",
    version,
    about = "Multi-scenario ranking with adaptive feature learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic multi-scenario dataset and its manifest.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output `.jsonl` path; the manifest goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        /// Sampling seed (config key `data_seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Print the manifest as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Train MARIA or a baseline; writes a checkpoint and a metrics JSON.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Defaults to `<model-out>.metrics.json`.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        /// Data for the final report; defaults to the training data.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// hard_sharing, shared_bottom or mmoe.
        #[arg(long)]
        baseline: Option<String>,
        /// Modules to remove, e.g. `fs,gs`.
        #[arg(long)]
        disable: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        /// Print the metrics JSON instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a checkpoint; prints the report.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 512)]
        batch_size: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        json: bool,
    },
    /// Train and compare ablation variants.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Comma-separated subset of full,fs,fr,fcm,nl,st,gs.
        #[arg(long, default_value = "full,fs,fr,fcm,nl,st,gs")]
        variants: String,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Finite-difference check of every parameter group on a tiny model.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seed of the Gumbel noise and of the probed entries.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
        /// Plant a broken backward rule, `PRIMITIVE[:FACTOR]`.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn command() -> clap::Command {
    let full = config::key_table(&RunConfig::default(), "Config keys (default, meaning):");
    let tiny = config::key_table(&RunConfig::tiny(), "Config keys (gradcheck default, meaning):");
    let mut cmd = Cli::command().after_help(full.clone());
    for name in ["gen-data", "train", "ablate"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_help(full.clone()));
    }
    cmd.mut_subcommand("gradcheck", |s| s.after_help(tiny))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData {
            cfg,
            out,
            count,
            seed,
            json,
        } => commands::gen_data(&cfg, &out, count, seed, json),
        Command::Train {
            cfg,
            data,
            model_out,
            metrics_out,
            eval_data,
            baseline,
            disable,
            workers,
            json,
        } => commands::train(&commands::TrainArgs {
            cfg,
            data,
            model_out,
            metrics_out,
            eval_data,
            baseline,
            disable,
            workers,
            json,
        }),
        Command::Eval {
            model,
            data,
            batch_size,
            workers,
            json,
        } => commands::eval(&model, &data, batch_size, workers, json),
        Command::Ablate {
            cfg,
            data,
            test,
            variants,
            workers,
            json,
        } => commands::ablate(&cfg, &data, &test, &variants, workers, json),
        Command::Gradcheck {
            cfg,
            seed,
            json,
            inject_fault,
        } => commands::gradcheck(&cfg, seed, json, inject_fault.as_deref()),
    }
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
