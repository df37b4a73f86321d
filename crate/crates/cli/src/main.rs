//! `sede`: runs the explanation pipeline, or one step of it, on a scenario
//! and writes the artifacts under one output directory.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sede", version, about = "Explain and repair DNN failures with a simulator in the loop")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Master seed, overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory every artifact is written under.
    #[arg(short, long, global = true, env = "SEDE_OUTPUT", default_value = "sede-out")]
    output: PathBuf,

    /// Worker threads, 0 for all cores; overrides `workers` in the config.
    #[arg(short, long, global = true, env = "SEDE_WORKERS")]
    workers: Option<usize>,

    /// Model file to analyse instead of training one; overrides `model.path`.
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the model under analysis and save it as model/model.txt.
    Train,
    /// Cluster the failing test inputs by heatmap.
    Cluster,
    /// Search, learn rules and compile an unsafe expression per cluster.
    Explain,
    /// Measure model accuracy inside previously written expressions.
    Evaluate {
        /// Directory of `cluster_<id>.txt` expressions; defaults to <output>/expressions.
        #[arg(long)]
        expressions: Option<PathBuf>,
    },
    /// Retrain on samples from previously written expressions and compare
    /// with random samples.
    Retrain {
        #[arg(long)]
        expressions: Option<PathBuf>,
        /// Independent retraining runs.
        #[arg(long, default_value_t = 1)]
        runs: u64,
    },
    /// Compare PaiR with the NSGA-II baselines at equal evaluation budgets.
    Compare,
    /// Every step end to end.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { CliError::USAGE.into() } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.code())
        }
    }
}
