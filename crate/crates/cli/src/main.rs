use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use albench::error::exit;
use albench::experiment::load_config;
use albench::report::{collect_runs, summarize_runs};
use albench::{emit_report, replay_transfer, resume, run_al_experiment, run_suite};
use albench::{ReportFormat, RunError, RunOptions, TransferPlan};
use albench_core::dataset::{data_root, DATA_ROOT_ENV};

#[derive(Parser)]
#[command(name = "al", version, about = "Reproducible pool-based active learning experiments")]
struct Cli {
    /// Directory holding run outputs.
    #[arg(long, global = true, default_value = "runs")]
    runs_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one (seed, fold) cell of a configuration.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        fold: usize,
    },
    /// Run every seed x fold cell of a configuration, skipping finished ones.
    Suite {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a target configuration on the selections of a finished source.
    Transfer {
        /// Config hash (or unique prefix) of the source runs.
        #[arg(long)]
        source: String,
        #[arg(long)]
        target_config: PathBuf,
    },
    /// Continue an interrupted run.
    Resume { run_dir: PathBuf },
    /// Aggregate runs into tables, significance tests and plots.
    Analyze {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "report")]
        out: PathBuf,
        /// Comma-separated list of csv, text, svg.
        #[arg(long, value_delimiter = ',', default_value = "csv,text,svg")]
        format: Vec<String>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32, RunError> {
    let opts = RunOptions {
        runs_root: cli.runs_dir,
        data_root: data_root(),
    };
    log::debug!("data root {} (from {DATA_ROOT_ENV})", opts.data_root.display());
    match cli.command {
        Command::Run { config, seed, fold } => {
            let outcome = run_al_experiment(load_config(&config)?, seed, fold, &opts)?;
            println!("{}: {:?}", outcome.run_dir.root.display(), outcome.status);
            Ok(exit::SUCCESS)
        }
        Command::Suite { config } => {
            let outcome = run_suite(load_config(&config)?, &opts)?;
            println!(
                "{} rows written to {} ({} cells run, {} skipped, {} failed)",
                outcome.rows.len(),
                outcome.results_path.display(),
                outcome.executed.len(),
                outcome.skipped.len(),
                outcome.failures.len()
            );
            match outcome.failures.iter().map(|f| f.exit_code).max() {
                None => Ok(exit::SUCCESS),
                Some(code) => Ok(code),
            }
        }
        Command::Transfer {
            source,
            target_config,
        } => {
            let plan = TransferPlan {
                source_hash: source,
                target: load_config(&target_config)?,
            };
            for outcome in replay_transfer(&plan, &opts)? {
                println!("{}: {:?}", outcome.run_dir.root.display(), outcome.status);
            }
            Ok(exit::SUCCESS)
        }
        Command::Resume { run_dir } => {
            let outcome = resume(&run_dir, &opts.data_root)?;
            println!("{}: {:?}", outcome.run_dir.root.display(), outcome.status);
            Ok(exit::SUCCESS)
        }
        Command::Analyze {
            run_dirs,
            alpha,
            out,
            format,
        } => {
            let formats = format
                .iter()
                .map(|f| f.parse::<ReportFormat>())
                .collect::<Result<Vec<_>, _>>()?;
            let runs = collect_runs(&run_dirs)?;
            let summary = summarize_runs(&runs, alpha)?;
            for f in formats {
                for path in emit_report(&summary, f, &out)? {
                    println!("{}", path.display());
                }
            }
            Ok(exit::SUCCESS)
        }
    }
}
