//! Per-iteration ledger entries and the comma-separated results table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// State recorded after training at one AL iteration. Iteration 0 is the
/// base classifier trained on the initial fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub config_hash: String,
    pub seed: u64,
    pub fold: usize,
    pub iteration: usize,
    pub labeled_count: usize,
    pub labeled_fraction: f64,
    /// Path of the index-set file holding the samples added at this
    /// iteration (the initial fold at iteration 0), relative to the run dir.
    pub selected_indices: String,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub wall_time_s: f64,
    #[serde(default)]
    pub checkpoint_ref: Option<String>,
    /// Set on records produced by a transfer replay.
    #[serde(default)]
    pub source_config_hash: Option<String>,
    /// Number of labels the oracle corrupted at this iteration.
    #[serde(default)]
    pub corrupted_labels: usize,
}

impl IterationRecord {
    pub fn to_row(&self) -> ResultRow {
        ResultRow {
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            fold: self.fold,
            iteration: self.iteration,
            labeled_fraction: self.labeled_fraction,
            val_acc: self.val_accuracy,
            test_acc: self.test_accuracy,
            wall_time_s: self.wall_time_s,
        }
    }
}

/// Checks `labeled_count(i) = labeled_count(0) + i * budget` and
/// accuracies in [0, 1] over a run's records.
pub fn check_ledger(records: &[IterationRecord], budget: usize) -> Result<()> {
    let Some(first) = records.first() else {
        return Ok(());
    };
    for (pos, r) in records.iter().enumerate() {
        if r.iteration != pos {
            return Err(Error::InvalidArgument(format!(
                "record {pos} has iteration {}",
                r.iteration
            )));
        }
        let expected = first.labeled_count + pos * budget;
        if r.labeled_count != expected {
            return Err(Error::InvalidArgument(format!(
                "iteration {pos}: labeled_count {} != {expected}",
                r.labeled_count
            )));
        }
        if !(0.0..=1.0).contains(&r.test_accuracy) || !(0.0..=1.0).contains(&r.val_accuracy) {
            return Err(Error::InvalidArgument(format!(
                "iteration {pos}: accuracy outside [0,1]"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub config_hash: String,
    pub seed: u64,
    pub fold: usize,
    pub iteration: usize,
    pub labeled_fraction: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub wall_time_s: f64,
}

pub const RESULTS_HEADER: [&str; 8] = [
    "config_hash",
    "seed",
    "fold",
    "iteration",
    "labeled_fraction",
    "val_acc",
    "test_acc",
    "wall_time_s",
];

pub fn write_results_table(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    // Header is written explicitly so an empty table still has one.
    w.write_record(RESULTS_HEADER)?;
    for row in rows {
        w.write_record(&[
            row.config_hash.clone(),
            row.seed.to_string(),
            row.fold.to_string(),
            row.iteration.to_string(),
            row.labeled_fraction.to_string(),
            row.val_acc.to_string(),
            row.test_acc.to_string(),
            row.wall_time_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn read_results_table(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RESULTS_HEADER {
        return Err(Error::InvalidArgument(format!(
            "{}: unexpected results header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for row in r.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
