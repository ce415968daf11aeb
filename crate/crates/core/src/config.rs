//! Experiment configuration schema.
//!
//! A configuration is a complete description of one active-learning
//! experiment. Its canonical form is JSON with lexicographically sorted keys;
//! the SHA-256 digest of those bytes identifies the experiment on disk.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Slack allowed when comparing fraction sums, so that e.g. `0.1 + 8 * 0.1`
/// is not rejected against `0.9` because of binary rounding.
const FRACTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    Cifar10,
    Cifar100,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureId {
    #[serde(rename = "vgg16bn")]
    Vgg16Bn,
    #[serde(rename = "resnet18")]
    ResNet18,
    #[serde(rename = "wrn28_2")]
    Wrn28_2,
    #[serde(rename = "smallcnn")]
    SmallCnn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyId {
    Random,
    /// Least confidence: lowest maximum softmax probability first.
    Uc,
    /// Highest maximum softmax probability first. Ablation/debug only.
    UcMostConfident,
    Maxent,
    Bald,
    Cog,
    Coreset,
    Vaal,
    Qbc,
}

impl StrategyId {
    pub const ALL: [StrategyId; 9] = [
        StrategyId::Random,
        StrategyId::Uc,
        StrategyId::UcMostConfident,
        StrategyId::Maxent,
        StrategyId::Bald,
        StrategyId::Cog,
        StrategyId::Coreset,
        StrategyId::Vaal,
        StrategyId::Qbc,
    ];

    /// Strategies that score the pool with MC-dropout passes.
    pub fn uses_mc_dropout(self) -> bool {
        matches!(self, StrategyId::Maxent | StrategyId::Bald)
    }

    pub fn token(self) -> &'static str {
        match self {
            StrategyId::Random => "random",
            StrategyId::Uc => "uc",
            StrategyId::UcMostConfident => "uc_most_confident",
            StrategyId::Maxent => "maxent",
            StrategyId::Bald => "bald",
            StrategyId::Cog => "cog",
            StrategyId::Coreset => "coreset",
            StrategyId::Vaal => "vaal",
            StrategyId::Qbc => "qbc",
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|id| id.token() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

impl ArchitectureId {
    pub fn token(self) -> &'static str {
        match self {
            ArchitectureId::Vgg16Bn => "vgg16bn",
            ArchitectureId::ResNet18 => "resnet18",
            ArchitectureId::Wrn28_2 => "wrn28_2",
            ArchitectureId::SmallCnn => "smallcnn",
        }
    }
}

impl fmt::Display for ArchitectureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

/// Learning-rate schedule, evaluated per epoch (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Multiply by `gamma` at each milestone epoch.
    Step { milestones: Vec<usize>, gamma: f64 },
    /// Linear warm-up over `warmup_epochs`, then step decay.
    WarmupStep {
        warmup_epochs: usize,
        milestones: Vec<usize>,
        gamma: f64,
    },
}

impl LrSchedule {
    /// ImageNet base-classifier preset: 5 warm-up epochs, decay by 10 at
    /// epochs 140, 160 and 180 (200 epochs total).
    pub fn imagenet_base() -> Self {
        LrSchedule::WarmupStep {
            warmup_epochs: 5,
            milestones: vec![140, 160, 180],
            gamma: 0.1,
        }
    }

    /// ImageNet fine-tune preset for AL iterations: decay by 10 at epochs
    /// 35, 55 and 80 (100 epochs total).
    pub fn imagenet_finetune() -> Self {
        LrSchedule::Step {
            milestones: vec![35, 55, 80],
            gamma: 0.1,
        }
    }

    pub fn lr_at(&self, base_lr: f64, epoch: usize) -> f64 {
        match self {
            LrSchedule::Constant => base_lr,
            LrSchedule::Step { milestones, gamma } => {
                let passed = milestones.iter().filter(|&&m| epoch >= m).count();
                base_lr * gamma.powi(passed as i32)
            }
            LrSchedule::WarmupStep {
                warmup_epochs,
                milestones,
                gamma,
            } => {
                if epoch < *warmup_epochs {
                    base_lr * (epoch + 1) as f64 / *warmup_epochs as f64
                } else {
                    let passed = milestones.iter().filter(|&&m| epoch >= m).count();
                    base_lr * gamma.powi(passed as i32)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub name: OptimizerName,
    pub lr: f64,
    pub weight_decay: f64,
    /// SGD momentum; ignored by Adam.
    #[serde(default)]
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_schedule: LrSchedule,
    /// Overrides used when training the base classifier on L0 only.
    #[serde(default)]
    pub base_lr: Option<f64>,
    #[serde(default)]
    pub base_weight_decay: Option<f64>,
}

impl OptimizerConfig {
    pub fn cifar10() -> Self {
        OptimizerConfig {
            name: OptimizerName::Adam,
            lr: 5e-4,
            weight_decay: 5e-4,
            momentum: 0.0,
            epochs: 100,
            batch_size: 64,
            lr_schedule: LrSchedule::Constant,
            base_lr: None,
            base_weight_decay: None,
        }
    }

    pub fn cifar100() -> Self {
        OptimizerConfig {
            name: OptimizerName::Adam,
            lr: 5e-4,
            weight_decay: 0.0,
            momentum: 0.0,
            epochs: 100,
            batch_size: 64,
            lr_schedule: LrSchedule::Constant,
            base_lr: Some(5e-5),
            base_weight_decay: Some(0.0),
        }
    }

    /// (lr, weight_decay) for a given AL iteration; iteration 0 is the base
    /// classifier.
    pub fn lr_wd_for_iteration(&self, iteration: usize) -> (f64, f64) {
        if iteration == 0 {
            (
                self.base_lr.unwrap_or(self.lr),
                self.base_weight_decay.unwrap_or(self.weight_decay),
            )
        } else {
            (self.lr, self.weight_decay)
        }
    }
}

/// Input pre-processing applied to every training batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Random horizontal flip with p = 0.5.
    pub hflip: bool,
    /// Zero-padding for random crops; 0 disables cropping.
    pub crop_pad: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            hflip: true,
            crop_pad: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationConfig {
    pub ra_enabled: bool,
    pub ra_n: usize,
    pub ra_m: usize,
    pub swa_enabled: bool,
    pub swa_lr: f64,
    /// Epochs between weight snapshots.
    pub swa_frequency: usize,
    /// 1-based epoch of the first snapshot.
    pub swa_start_epoch: usize,
    /// Upper bound on the number of snapshots.
    pub swa_max_snapshots: usize,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            ra_enabled: false,
            ra_n: 1,
            ra_m: 5,
            swa_enabled: false,
            swa_lr: 5e-4,
            swa_frequency: 50,
            swa_start_epoch: 100,
            swa_max_snapshots: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Exactly round(p*k) labels reassigned to a uniformly drawn wrong class.
    Reassign,
    /// round(p*k) labels permuted among themselves; fixed points may remain.
    Shuffle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImbalanceScope {
    /// The whole train pool (L0 and U) is drawn from the long-tailed profile.
    WholePool,
    /// Only the initial labeled folds follow the profile.
    InitialOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceConfig {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub scope: ImbalanceScope,
    /// Size of the long-tailed pool in `whole_pool` mode; defaults to the
    /// largest size the profile can fill without exhausting a class.
    #[serde(default)]
    pub pool_size: Option<usize>,
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        ImbalanceConfig {
            a: 100.0,
            b: 400.0,
            alpha: -0.046,
            scope: ImbalanceScope::WholePool,
            pool_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaalConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub vae_lr: f64,
    pub disc_lr: f64,
    pub adversary_weight: f64,
    /// KL weight of the beta-VAE objective.
    pub beta: f64,
    /// Number of adversarial training steps.
    pub steps: usize,
    pub labeled_batch: usize,
    pub unlabeled_batch: usize,
}

impl Default for VaalConfig {
    fn default() -> Self {
        VaalConfig {
            latent_dim: 32,
            hidden_dim: 256,
            vae_lr: 5e-4,
            disc_lr: 5e-4,
            adversary_weight: 1.0,
            beta: 1.0,
            steps: 400,
            labeled_batch: 64,
            unlabeled_batch: 64,
        }
    }
}

/// Parameters of the generated image datasets used for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_samples: usize,
    pub num_classes: usize,
    pub side: usize,
    pub channels: usize,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOptions {
    /// Random subset of the provided training data to use as the pool.
    #[serde(default)]
    pub subset_size: Option<usize>,
    /// Random subset of the provided test data.
    #[serde(default)]
    pub test_subset_size: Option<usize>,
    /// Carve the test split from the pool instead of using a provided one.
    #[serde(default)]
    pub test_fraction: Option<f64>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form label used as the method name in reports; falls back to
    /// the strategy token when empty.
    #[serde(default)]
    pub name: String,
    pub dataset_id: DatasetId,
    #[serde(default)]
    pub dataset: DatasetOptions,
    pub architecture_id: ArchitectureId,
    pub strategy_id: StrategyId,
    pub initial_label_fraction: f64,
    pub budget_fraction: f64,
    pub num_al_iterations: usize,
    pub val_fraction: f64,
    pub seeds: Vec<u64>,
    pub initial_fold_ids: Vec<usize>,
    /// Number of initial folds drawn (L0..L{n-1}); fold ids index into them.
    pub fold_count: usize,
    /// Seed for the dataset split and the initial folds, shared by all
    /// training seeds so that folds are comparable across seeds.
    pub partition_seed: u64,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub regularization: RegularizationConfig,
    pub oracle_noise_fraction: f64,
    pub noise_mode: NoiseMode,
    pub imbalance_enabled: bool,
    #[serde(default)]
    pub imbalance: ImbalanceConfig,
    pub mc_passes: usize,
    pub committee_size: usize,
    /// Drop probability of the dropout sites in the classifier head.
    pub dropout_rate: f64,
    pub retrain_from_scratch: bool,
    #[serde(default)]
    pub vaal: VaalConfig,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
    /// Write per-iteration acquisition scores next to the selected set.
    #[serde(default)]
    pub dump_scores: bool,
}

fn default_true() -> bool {
    true
}

/// SHA-256 of the canonical configuration bytes, hex encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContentHash(pub String);

impl ContentHash {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        ContentHash(hex::encode(Sha256::digest(bytes)))
    }

    /// 16-hex-digit prefix used for run directory names.
    pub fn short(&self) -> &str {
        &self.0[..16.min(self.0.len())]
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl ExperimentConfig {
    /// CIFAR10 settings: Adam, lr 5e-4, wd 5e-4, horizontal flips, VGG16-bn.
    pub fn cifar10(strategy: StrategyId) -> Self {
        ExperimentConfig {
            name: String::new(),
            dataset_id: DatasetId::Cifar10,
            dataset: DatasetOptions::default(),
            architecture_id: ArchitectureId::Vgg16Bn,
            strategy_id: strategy,
            initial_label_fraction: 0.1,
            budget_fraction: 0.1,
            num_al_iterations: 3,
            val_fraction: 0.1,
            seeds: vec![0, 1, 2, 3, 4],
            initial_fold_ids: vec![0, 1, 2, 3, 4],
            fold_count: 5,
            partition_seed: 0,
            optimizer: OptimizerConfig::cifar10(),
            preprocess: PreprocessConfig::default(),
            regularization: RegularizationConfig::default(),
            oracle_noise_fraction: 0.0,
            noise_mode: NoiseMode::Reassign,
            imbalance_enabled: false,
            imbalance: ImbalanceConfig::default(),
            mc_passes: 25,
            committee_size: 5,
            dropout_rate: 0.5,
            retrain_from_scratch: true,
            vaal: VaalConfig::default(),
            save_checkpoints: true,
            dump_scores: false,
        }
    }

    /// CIFAR100 settings: Adam, lr 5e-4 / wd 0 for AL iterations, lr 5e-5
    /// for the base classifier, random crops with pad 4 plus flips.
    pub fn cifar100(strategy: StrategyId) -> Self {
        ExperimentConfig {
            dataset_id: DatasetId::Cifar100,
            optimizer: OptimizerConfig::cifar100(),
            preprocess: PreprocessConfig {
                hflip: true,
                crop_pad: 4,
            },
            ..ExperimentConfig::cifar10(strategy)
        }
    }

    /// Switch on RA + SWA with the CIFAR settings: 150 epochs, no weight
    /// decay, SWA lr 5e-4 every 50 epochs from epoch 100.
    pub fn with_regularization(mut self) -> Self {
        let ra_m = if self.dataset_id == DatasetId::Cifar100 { 2 } else { 5 };
        self.regularization = RegularizationConfig {
            ra_enabled: true,
            ra_n: 1,
            ra_m,
            swa_enabled: true,
            swa_lr: 5e-4,
            swa_frequency: 50,
            swa_start_epoch: 100,
            swa_max_snapshots: 1000,
        };
        self.optimizer.epochs = 150;
        self.optimizer.weight_decay = 0.0;
        self.optimizer.base_weight_decay = self.optimizer.base_weight_decay.map(|_| 0.0);
        self
    }

    /// Method name used in reports.
    pub fn method_name(&self) -> String {
        if self.name.is_empty() {
            self.strategy_id.token().to_string()
        } else {
            self.name.clone()
        }
    }

    /// Returns every violated invariant; empty when the config is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let open_unit = |name: &str, x: f64, v: &mut Vec<String>| {
            if !(x > 0.0 && x < 1.0) {
                v.push(format!("{name} must lie in (0,1), got {x}"));
            }
        };
        open_unit("initial_label_fraction", self.initial_label_fraction, &mut v);
        open_unit("budget_fraction", self.budget_fraction, &mut v);
        open_unit("val_fraction", self.val_fraction, &mut v);
        if let Some(t) = self.dataset.test_fraction {
            open_unit("dataset.test_fraction", t, &mut v);
            if t + self.val_fraction >= 1.0 {
                v.push(format!(
                    "val_fraction + test_fraction = {} must be < 1",
                    t + self.val_fraction
                ));
            }
        }
        let used = self.initial_label_fraction
            + self.num_al_iterations as f64 * self.budget_fraction;
        if used > 1.0 - self.val_fraction + FRACTION_SLACK {
            v.push(format!(
                "initial_label_fraction + num_al_iterations * budget_fraction = {used} exceeds 1 - val_fraction = {}",
                1.0 - self.val_fraction
            ));
        }
        if self.seeds.is_empty() {
            v.push("seeds must be non-empty".into());
        }
        if self.initial_fold_ids.is_empty() {
            v.push("initial_fold_ids must be non-empty".into());
        }
        if self.fold_count == 0 {
            v.push("fold_count must be >= 1".into());
        }
        for &f in &self.initial_fold_ids {
            if f >= self.fold_count {
                v.push(format!("fold id {f} >= fold_count {}", self.fold_count));
            }
        }
        if self.mc_passes < 1 {
            v.push("mc_passes (T) must be >= 1".into());
        }
        if self.strategy_id == StrategyId::Bald && self.mc_passes < 2 {
            v.push("bald requires mc_passes (T) >= 2".into());
        }
        if self.strategy_id == StrategyId::Qbc && self.committee_size < 2 {
            v.push("qbc requires committee_size (N) >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.oracle_noise_fraction) {
            v.push(format!(
                "oracle_noise_fraction must lie in [0,1], got {}",
                self.oracle_noise_fraction
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            v.push(format!("dropout_rate must lie in [0,1), got {}", self.dropout_rate));
        }

        let opt = &self.optimizer;
        if !(opt.lr > 0.0 && opt.lr.is_finite()) {
            v.push(format!("optimizer.lr must be > 0, got {}", opt.lr));
        }
        if let Some(lr) = opt.base_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                v.push(format!("optimizer.base_lr must be > 0, got {lr}"));
            }
        }
        if opt.weight_decay < 0.0 || opt.base_weight_decay.is_some_and(|w| w < 0.0) {
            v.push("weight decay must be >= 0".into());
        }
        if opt.epochs == 0 {
            v.push("optimizer.epochs must be >= 1".into());
        }
        if opt.batch_size == 0 {
            v.push("optimizer.batch_size must be >= 1".into());
        }

        let reg = &self.regularization;
        if reg.ra_n < 1 {
            v.push("regularization.ra_n must be >= 1".into());
        }
        if reg.ra_m > crate::RA_MAX_MAGNITUDE {
            v.push(format!(
                "regularization.ra_m must lie in 0..={}, got {}",
                crate::RA_MAX_MAGNITUDE,
                reg.ra_m
            ));
        }
        if reg.swa_frequency < 1 {
            v.push("regularization.swa_frequency must be >= 1".into());
        }
        if reg.swa_max_snapshots < 1 {
            v.push("regularization.swa_max_snapshots must be >= 1".into());
        }
        if reg.swa_enabled && !(reg.swa_lr > 0.0) {
            v.push("regularization.swa_lr must be > 0".into());
        }

        match (self.dataset_id, &self.dataset.synthetic) {
            (DatasetId::Synthetic, None) => {
                v.push("dataset_id synthetic requires dataset.synthetic".into())
            }
            (DatasetId::Synthetic, Some(s)) => {
                if s.num_classes < 2 || s.num_samples == 0 || s.side < 4 || s.channels == 0 {
                    v.push("dataset.synthetic needs >= 2 classes, >= 1 sample, side >= 4 and >= 1 channel".into());
                }
                if self.dataset.test_fraction.is_none() {
                    v.push("synthetic datasets need dataset.test_fraction".into());
                }
            }
            _ => {}
        }

        if self.imbalance_enabled {
            let im = &self.imbalance;
            if !(im.a.is_finite() && im.b.is_finite() && im.alpha.is_finite()) {
                v.push("imbalance parameters must be finite".into());
            }
        }

        if self.strategy_id == StrategyId::Vaal {
            let c = &self.vaal;
            if c.latent_dim < 1 {
                v.push("vaal.latent_dim must be >= 1".into());
            }
            if !(c.vae_lr > 0.0 && c.disc_lr > 0.0) {
                v.push("vaal learning rates must be > 0".into());
            }
            if c.labeled_batch == 0 || c.unlabeled_batch == 0 || c.hidden_dim == 0 {
                v.push("vaal batch sizes and hidden_dim must be >= 1".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Pretty JSON with sorted keys and a trailing newline.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        // serde_json::Value maps are BTreeMaps, so keys come out sorted.
        let value = serde_json::to_value(self)?;
        let mut out = serde_json::to_vec_pretty(&value)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn content_hash(&self) -> Result<ContentHash> {
        Ok(ContentHash::of_bytes(&self.canonical_bytes()?))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_json(&text)
    }
}

/// Validates `config`, writes its canonical form to `out_path` and returns
/// the content hash.
pub fn snapshot_config(config: &ExperimentConfig, out_path: &Path) -> Result<ContentHash> {
    config.validate()?;
    let bytes = config.canonical_bytes()?;
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(out_path, &bytes)
        .map_err(|e| Error::io(format!("writing {}", out_path.display()), e))?;
    Ok(ContentHash::of_bytes(&bytes))
}
