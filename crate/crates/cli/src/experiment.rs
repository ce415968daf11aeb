//! Everything a run needs before the first model is trained: validated
//! config, dataset, split, initial folds and the per-iteration budget.

use std::path::Path;

use albench_core::config::{ContentHash, DatasetId, ExperimentConfig, ImbalanceScope};
use albench_core::dataset::{load_dataset, Dataset};
use albench_core::partition::{
    draw_initial_folds, imbalance_profile, sample_imbalanced, split_dataset, DataSplit,
    ImbalanceProfile, TestSpec,
};
use albench_core::rng::partition_streams;
use albench_model::NetworkSpec;

use crate::error::{Result, RunError};

/// Reads a config file; any failure is a configuration error.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Config checks done before any data is touched.
pub fn check_startup(config: &ExperimentConfig) -> Result<()> {
    config.validate()?;
    if config.strategy_id.uses_mc_dropout() && config.dropout_rate <= 0.0 {
        return Err(RunError::Config(format!(
            "strategy {} needs MC dropout but dropout_rate is 0, so the network has no active dropout site",
            config.strategy_id
        )));
    }
    Ok(())
}

pub fn network_spec(config: &ExperimentConfig, dataset: &Dataset) -> NetworkSpec {
    NetworkSpec {
        architecture: config.architecture_id,
        num_classes: dataset.num_classes,
        input_shape: dataset.shape(),
        dropout_rate: config.dropout_rate,
        mc_dropout_site: config.strategy_id.uses_mc_dropout(),
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: ContentHash,
    pub dataset: Dataset,
    pub split: DataSplit,
    /// Initial labeled folds L0..L{n-1}.
    pub folds: Vec<Vec<usize>>,
    /// Samples added per AL iteration.
    pub budget: usize,
    /// Train plus validation samples; labeled fractions refer to it.
    pub dev_size: usize,
    /// Class-exhaustion fallbacks of the long-tailed sampler.
    pub notes: Vec<String>,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig, data_root: &Path) -> Result<Self> {
        check_startup(&config)?;
        let dataset = load_dataset(&config, data_root)?;
        let test = match (config.dataset.test_fraction, dataset.provided_test()) {
            (Some(f), _) => TestSpec::Fraction(f),
            (None, Some(range)) => TestSpec::Provided(range.collect()),
            (None, None) => {
                return Err(RunError::Config(format!(
                    "dataset `{}` has no test split; set dataset.test_fraction",
                    dataset.name
                )))
            }
        };
        let mut split = split_dataset(
            dataset.len(),
            config.val_fraction,
            &test,
            &mut partition_streams::split(config.partition_seed),
        )?;
        let mut notes = Vec::new();
        let profile = if config.imbalance_enabled {
            let im = &config.imbalance;
            Some(imbalance_profile(dataset.num_classes, im.a, im.b, im.alpha)?)
        } else {
            None
        };
        let mut imbalance_rng = partition_streams::imbalance(config.partition_seed);
        if let (Some(p), ImbalanceScope::WholePool) = (&profile, config.imbalance.scope) {
            let pairs = labeled_pairs(&dataset, &split.train);
            let size = match config.imbalance.pool_size {
                Some(s) => s,
                None => fillable_size(&pairs, p, dataset.num_classes),
            };
            let sample = sample_imbalanced(&pairs, p, size, &mut imbalance_rng)?;
            notes.extend(sample.fallbacks);
            split.train = sample.indices;
        }
        let dev_size = split.train.len() + split.val.len();
        let fold_size = fraction_count(config.initial_label_fraction, dev_size);
        let budget = fraction_count(config.budget_fraction, dev_size);
        if fold_size == 0 || budget == 0 {
            return Err(RunError::Config(format!(
                "a pool of {dev_size} samples gives an initial fold of {fold_size} and a budget of {budget}; both must be >= 1"
            )));
        }
        let folds = match (&profile, config.imbalance.scope) {
            (Some(p), ImbalanceScope::InitialOnly) => {
                let pairs = labeled_pairs(&dataset, &split.train);
                let mut out = Vec::with_capacity(config.fold_count);
                for _ in 0..config.fold_count {
                    let s = sample_imbalanced(&pairs, p, fold_size, &mut imbalance_rng)?;
                    notes.extend(s.fallbacks);
                    out.push(s.indices);
                }
                out
            }
            _ => draw_initial_folds(
                &split.train,
                config.fold_count,
                fold_size,
                &mut partition_streams::folds(config.partition_seed),
            )?,
        };
        for n in &notes {
            log::warn!("{n}");
        }
        let hash = config.content_hash()?;
        Ok(Experiment {
            config,
            hash,
            dataset,
            split,
            folds,
            budget,
            dev_size,
            notes,
        })
    }

    pub fn fold(&self, fold: usize) -> Result<&[usize]> {
        self.folds.get(fold).map(Vec::as_slice).ok_or_else(|| {
            RunError::Config(format!(
                "fold {fold} requested but only {} folds are drawn",
                self.folds.len()
            ))
        })
    }

    pub fn labeled_fraction(&self, labeled_count: usize) -> f64 {
        labeled_count as f64 / self.dev_size as f64
    }

    pub fn network_spec(&self) -> NetworkSpec {
        network_spec(&self.config, &self.dataset)
    }

    pub fn dataset_id(&self) -> String {
        match self.config.dataset_id {
            DatasetId::Synthetic => "synthetic".into(),
            DatasetId::Cifar10 => "cifar10".into(),
            DatasetId::Cifar100 => "cifar100".into(),
        }
    }
}

fn fraction_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

fn labeled_pairs(dataset: &Dataset, indices: &[usize]) -> Vec<(usize, usize)> {
    indices.iter().map(|&i| (i, dataset.label(i))).collect()
}

/// Largest pool the profile can fill in expectation without exhausting a
/// class: `min_c count_c / p_c`.
fn fillable_size(pairs: &[(usize, usize)], profile: &ImbalanceProfile, classes: usize) -> usize {
    let mut counts = vec![0usize; classes];
    for &(_, y) in pairs {
        counts[y] += 1;
    }
    let limit = counts
        .iter()
        .zip(&profile.class_probabilities)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&c, &p)| c as f64 / p)
        .fold(f64::INFINITY, f64::min);
    (limit.floor() as usize).min(pairs.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use albench_core::config::{StrategyId, SyntheticSpec};

    pub(crate) fn synthetic_config(n: usize) -> ExperimentConfig {
        let mut c = ExperimentConfig::cifar10(StrategyId::Random);
        c.dataset_id = DatasetId::Synthetic;
        c.dataset.synthetic = Some(SyntheticSpec {
            num_samples: n,
            num_classes: 4,
            side: 8,
            channels: 3,
            noise: 0.1,
            seed: 1,
        });
        c.dataset.test_fraction = Some(0.2);
        c
    }

    #[test]
    fn budget_and_fold_follow_dev_pool() {
        let exp = Experiment::prepare(synthetic_config(1000), Path::new("unused")).unwrap();
        assert_eq!(exp.split.test.len(), 200);
        assert_eq!(exp.split.val.len(), 100);
        assert_eq!(exp.dev_size, 800);
        assert_eq!(exp.budget, 80);
        assert_eq!(exp.folds.len(), 5);
        assert!(exp.folds.iter().all(|f| f.len() == 80));
    }

    #[test]
    fn mc_strategy_without_dropout_fails_fast() {
        let mut c = synthetic_config(100);
        c.strategy_id = StrategyId::Bald;
        c.dropout_rate = 0.0;
        let err = Experiment::prepare(c, Path::new("unused")).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
    }

    #[test]
    fn whole_pool_imbalance_shrinks_train() {
        let mut c = synthetic_config(2000);
        c.imbalance_enabled = true;
        c.imbalance.a = 10.0;
        c.imbalance.b = 400.0;
        c.imbalance.alpha = -1.0;
        let exp = Experiment::prepare(c, Path::new("unused")).unwrap();
        let mut counts = [0usize; 4];
        for &i in &exp.split.train {
            counts[exp.dataset.label(i)] += 1;
        }
        assert!(counts[0] > counts[3], "{counts:?}");
    }
}
