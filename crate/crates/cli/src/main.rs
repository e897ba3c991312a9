use std::path::PathBuf;
use std::process::ExitCode;

use chl_cli::error::{EXIT_DIVERGED, EXIT_OK};
use chl_cli::runner::{summary_table, Status};
use chl_cli::spec::DataSpec;
use chl_cli::{eval_checkpoint, pseudospectra, run, sweep, Checkpoint, CliResult, ExperimentSpec, RunOptions};
use clap::{Args, Parser, Subcommand};

/// Contrastive Hebbian learning experiments.
///
/// Datasets are read from the directory named by CHL_DATA_DIR (default ./data).
/// Exit codes: 0 success, 1 other failure, 2 invalid input, 3 divergence.
#[derive(Parser)]
#[command(name = "chl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output root; overrides the spec's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress per-evaluation progress on stderr.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment spec.
    Run {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every point of a spec's sweep axes.
    Sweep {
        spec: PathBuf,
        /// Worker threads (default: available cores).
        #[arg(long, short)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Compute feedback-matrix pseudospectra described by a spec.
    Pseudospectra {
        spec: PathBuf,
        #[arg(long, short)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test split of a dataset
    /// (xor, bars_stripes, mnist, emnist, autoencoder).
    Eval {
        checkpoint: PathBuf,
        dataset: String,
        /// Use only the first N test samples.
        #[arg(long)]
        test_limit: Option<usize>,
    },
}

fn options(common: &Common, jobs: Option<usize>) -> RunOptions {
    let default_jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    RunOptions {
        output_dir: common.out.clone(),
        jobs: jobs.unwrap_or(default_jobs),
        progress: !common.quiet,
        ..RunOptions::from_env()
    }
}

fn execute(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Run { spec, common } => {
            let spec = ExperimentSpec::load(&spec)?;
            let record = run(&spec, &options(&common, None))?;
            println!("{}", serde_json::to_string_pretty(&record).expect("record serializes"));
            if let Some(e) = &record.error {
                eprintln!("chl: {e}");
            }
            Ok(if record.diverged { EXIT_DIVERGED } else { EXIT_OK })
        }
        Command::Sweep { spec, jobs, common } => {
            let spec = ExperimentSpec::load(&spec)?;
            let record = sweep(&spec, &options(&common, jobs))?;
            print!("{}", summary_table(&record));
            println!("outputs: {}", record.sweep_dir.display());
            for r in record.runs.iter().filter(|r| r.status == Status::Error) {
                eprintln!("chl: run {} failed: {}", r.run_dir.display(), r.error.as_deref().unwrap_or(""));
            }
            Ok(EXIT_OK)
        }
        Command::Pseudospectra { spec, jobs, common } => {
            let spec = ExperimentSpec::load(&spec)?;
            let records = pseudospectra(&spec, &options(&common, jobs))?;
            for r in &records {
                let failed = r.error.as_deref().map(|e| format!(" FAILED: {e}")).unwrap_or_default();
                println!("{}{failed}", r.run_dir.display());
            }
            Ok(if records.iter().any(|r| r.status != Status::Ok) { 1 } else { EXIT_OK })
        }
        Command::Eval {
            checkpoint,
            dataset,
            test_limit,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let data = DataSpec {
                test_limit,
                ..DataSpec::default()
            };
            let report = eval_checkpoint(&ckpt, &dataset, &data, RunOptions::from_env().data_root.as_deref())?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let code = execute(cli).unwrap_or_else(|e| {
        eprintln!("chl: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
