//! Transferability replays: train a target configuration on the exact
//! selections (and annotations) persisted by a source run, without calling
//! any sampling function.

use std::fs;
use std::path::{Path, PathBuf};

use albench_core::config::ExperimentConfig;

use crate::error::{Result, RunError};
use crate::experiment::{load_config, Experiment};
use crate::layout::RunDir;
use crate::orchestrator::{execute, read_source_selection, use_source_split, Acquire, RunOptions, RunOutcome};

/// Which source runs to replay and what to train on them.
#[derive(Debug, Clone)]
pub struct TransferPlan {
    /// Full config hash of the source, or a unique prefix of it.
    pub source_hash: String,
    pub target: ExperimentConfig,
}

/// Resolves a config hash prefix to its directory under `runs_root`.
pub fn find_config_dir(runs_root: &Path, prefix: &str) -> Result<(String, PathBuf)> {
    if prefix.is_empty() {
        return Err(RunError::Config("empty source hash".into()));
    }
    let entries = fs::read_dir(runs_root)
        .map_err(|e| RunError::io(format!("listing {}", runs_root.display()), e))?;
    let mut matches: Vec<(String, PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            name.starts_with(prefix).then(|| (name, e.path()))
        })
        .collect();
    matches.sort();
    match matches.len() {
        1 => Ok(matches.remove(0)),
        0 => Err(RunError::Config(format!(
            "no runs for config hash {prefix} under {}",
            runs_root.display()
        ))),
        n => Err(RunError::Config(format!("config hash prefix {prefix} is ambiguous ({n} matches)"))),
    }
}

/// `<seed>/<fold>` run directories directly under a config directory,
/// sorted by seed then fold.
pub fn source_runs(config_dir: &Path) -> Result<Vec<RunDir>> {
    let mut runs = Vec::new();
    let list = |p: &Path| -> Result<Vec<(u64, PathBuf)>> {
        let mut out: Vec<(u64, PathBuf)> = fs::read_dir(p)
            .map_err(|e| RunError::io(format!("listing {}", p.display()), e))?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let n: u64 = e.file_name().to_str()?.parse().ok()?;
                e.path().is_dir().then(|| (n, e.path()))
            })
            .collect();
        out.sort();
        Ok(out)
    };
    for (_, seed_dir) in list(config_dir)? {
        for (_, fold_dir) in list(&seed_dir)? {
            if fold_dir.join("run.json").is_file() {
                runs.push(RunDir::new(fold_dir));
            }
        }
    }
    Ok(runs)
}

/// Replays every run of the source configuration onto the target.
pub fn replay_transfer(plan: &TransferPlan, opts: &RunOptions) -> Result<Vec<RunOutcome>> {
    let (source_hash, dir) = find_config_dir(&opts.runs_root, &plan.source_hash)?;
    let runs = source_runs(&dir)?;
    if runs.is_empty() {
        return Err(RunError::Replay {
            source_dir: dir,
            reason: "no completed source runs".into(),
        });
    }
    let base = Experiment::prepare(plan.target.clone(), &opts.data_root)?;
    runs.iter()
        .map(|src| replay_run(&base, &source_hash, src, &opts.runs_root))
        .collect()
}

/// Replays one source run with a prepared target experiment.
pub fn replay_run(
    target: &Experiment,
    source_hash: &str,
    source: &RunDir,
    runs_root: &Path,
) -> Result<RunOutcome> {
    let manifest = source.read_manifest()?;
    let source_config = load_config(&source.config())?;
    if source_config.dataset_id != target.config.dataset_id
        || source_config.dataset != target.config.dataset
    {
        return Err(RunError::Replay {
            source_dir: source.root.clone(),
            reason: "source and target configs use different datasets".into(),
        });
    }
    // Fail before any training when an iteration is missing.
    for i in 0..=target.config.num_al_iterations {
        read_source_selection(source, i)?;
        if !source.annotations(i).is_file() {
            return Err(RunError::Replay {
                source_dir: source.root.clone(),
                reason: format!("iteration {i} has no annotations file ({})", source.annotations(i).display()),
            });
        }
    }
    let mut exp = target.clone();
    use_source_split(&mut exp, source)?;
    let short = &source_hash[..16.min(source_hash.len())];
    let run = RunDir::for_replay(runs_root, &exp.hash.0, short, manifest.seed, manifest.fold);
    execute(
        &exp,
        manifest.seed,
        manifest.fold,
        &run,
        &Acquire::Replay {
            source: source.clone(),
            source_hash: source_hash.to_string(),
        },
    )
}
