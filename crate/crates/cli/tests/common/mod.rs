//! Shared fixtures: a small synthetic experiment that trains in well under
//! a second per iteration.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use albench::layout::RunDir;
use albench::RunOptions;
use albench_core::config::{
    ArchitectureId, DatasetId, ExperimentConfig, LrSchedule, StrategyId, SyntheticSpec,
};
use albench_core::index_set::read_index_set;
use albench_core::oracle::Annotation;
use albench_core::records::IterationRecord;

pub fn config(strategy: StrategyId) -> ExperimentConfig {
    let mut c = ExperimentConfig::cifar10(strategy);
    c.name = format!("{strategy}");
    c.dataset_id = DatasetId::Synthetic;
    c.dataset.synthetic = Some(SyntheticSpec {
        num_samples: 500,
        num_classes: 4,
        side: 8,
        channels: 3,
        noise: 0.3,
        seed: 7,
    });
    c.dataset.test_fraction = Some(0.2);
    c.architecture_id = ArchitectureId::SmallCnn;
    c.num_al_iterations = 3;
    c.seeds = vec![0, 1];
    c.initial_fold_ids = vec![0, 1];
    c.fold_count = 2;
    c.optimizer.epochs = 3;
    c.optimizer.batch_size = 32;
    c.optimizer.lr = 1e-3;
    c.optimizer.lr_schedule = LrSchedule::Constant;
    c.mc_passes = 5;
    c.committee_size = 2;
    c.dropout_rate = 0.3;
    c.vaal.steps = 20;
    c
}

pub fn options(root: &Path) -> RunOptions {
    RunOptions {
        runs_root: root.join("runs"),
        data_root: root.join("data"),
    }
}

pub fn selected(run: &RunDir, i: usize) -> Vec<usize> {
    read_index_set(&run.selected(i)).unwrap().set.indices
}

pub fn annotations(run: &RunDir, i: usize) -> Vec<Annotation> {
    serde_json::from_str(&std::fs::read_to_string(run.annotations(i)).unwrap()).unwrap()
}

/// Records with wall-clock time removed, for equality checks.
pub fn timeless(records: &[IterationRecord]) -> Vec<IterationRecord> {
    records
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_time_s = 0.0;
            r
        })
        .collect()
}

pub fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}
