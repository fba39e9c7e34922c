//! `iisopt` command line: run and resume campaigns, analyze parameter
//! importance, and compare standard against increasing-input-size logs.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "iisopt", version, about = "Multi-fidelity hyperparameter optimization campaigns")]
struct Cli {
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a campaign from a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configuration's worker count.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "trials.jsonl")]
        log: PathBuf,
        /// Defaults to the log path with a `.checkpoint.json` suffix.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Continue an interrupted campaign from its checkpoint and log.
    Resume {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "trials.jsonl")]
        log: PathBuf,
    },
    /// Rank parameter subsets by explained variance.
    Analyze {
        /// Configuration that produced the log; supplies the search space.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Forest seed; defaults to the configuration's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Only trials at this fidelity; defaults to the highest in the log.
        #[arg(long)]
        fidelity: Option<u32>,
        /// Output prefix; defaults to the log path without its extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare standard and increasing-input-size campaign logs.
    Report {
        /// Single-fidelity campaign log; repeat for repetitions.
        #[arg(long = "standard", required = true)]
        standard: Vec<PathBuf>,
        /// Increasing-input-size campaign log; repeat for repetitions.
        #[arg(long = "iis", required = true)]
        iis: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbose = cli.verbose > 0;
    let outcome = match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            log,
            checkpoint,
        } => commands::run(&config, seed, workers, &log, checkpoint, verbose),
        Command::Resume { checkpoint, log } => commands::resume(&checkpoint, &log, verbose),
        Command::Analyze {
            config,
            log,
            top_n,
            seed,
            fidelity,
            out,
        } => commands::analyze(&config, &log, top_n, seed, fidelity, out),
        Command::Report { standard, iis, out_dir } => commands::report(&standard, &iis, &out_dir),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
