//! The seeds x folds cross product of one configuration.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use albench_core::config::{snapshot_config, ExperimentConfig};
use albench_core::records::{write_results_table, ResultRow};

use crate::error::Result;
use crate::experiment::Experiment;
use crate::layout::{write_json, RunDir};
use crate::orchestrator::{execute, Acquire, RunOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    pub fold: usize,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub config_hash: String,
    /// Rows of every cell, in seed then fold then iteration order.
    pub rows: Vec<ResultRow>,
    /// Cells trained (fully or partly) by this call.
    pub executed: Vec<(u64, usize)>,
    /// Cells that had already finished and were left untouched.
    pub skipped: Vec<(u64, usize)>,
    pub failures: Vec<CellFailure>,
    pub results_path: PathBuf,
}

/// Runs every `(seed, fold)` cell of `config`. Finished cells are skipped,
/// so an interrupted suite resumes where it stopped; a failing cell is
/// recorded and the suite moves on.
pub fn run_suite(config: ExperimentConfig, opts: &RunOptions) -> Result<SuiteOutcome> {
    let exp = Experiment::prepare(config, &opts.data_root)?;
    let config_dir = opts.runs_root.join(&exp.hash.0);
    snapshot_config(&exp.config, &config_dir.join("config.json"))?;
    let mut out = SuiteOutcome {
        config_hash: exp.hash.0.clone(),
        rows: Vec::new(),
        executed: Vec::new(),
        skipped: Vec::new(),
        failures: Vec::new(),
        results_path: config_dir.join("results.csv"),
    };
    for &seed in &exp.config.seeds {
        for &fold in &exp.config.initial_fold_ids {
            let run = RunDir::for_run(&opts.runs_root, &exp.hash.0, seed, fold);
            if run.read_status()?.is_some_and(|s| s.is_finished()) {
                out.skipped.push((seed, fold));
            } else {
                out.executed.push((seed, fold));
                if let Err(e) = execute(&exp, seed, fold, &run, &Acquire::Strategy) {
                    log::error!("seed {seed} fold {fold} failed: {e}");
                    out.failures.push(CellFailure {
                        seed,
                        fold,
                        message: e.to_string(),
                        exit_code: e.exit_code(),
                    });
                }
            }
            out.rows.extend(run.read_records()?.iter().map(|r| r.to_row()));
        }
    }
    write_results_table(&out.results_path, &out.rows)?;
    let failures_path = config_dir.join("failures.json");
    if out.failures.is_empty() {
        let _ = std::fs::remove_file(&failures_path);
    } else {
        write_json(&failures_path, &out.failures)?;
    }
    Ok(out)
}
