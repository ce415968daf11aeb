//! Training loop, optimizers and the inference views consumed by samplers.

use ndarray::{Array2, Array4};
use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use albench_core::config::{
    ExperimentConfig, LrSchedule, OptimizerName, PreprocessConfig, RegularizationConfig,
};
use albench_core::dataset::Dataset;
use albench_core::tensor::{EmbeddingMatrix, PredictionTensor};

use crate::augment::{hflip, random_crop, Image, RandAugment};
use crate::error::{ModelError, Result};
use crate::layers::Mode;
use crate::network::{Network, NetworkSpec};
use crate::swa::{swa_average, swa_snapshot_epochs};

/// Pixel standardization applied to every network input.
const INPUT_MEAN: f32 = 0.5;
const INPUT_STD: f32 = 0.25;
/// Batch size for inference passes.
const EVAL_BATCH: usize = 256;

/// Adam with coupled L2 weight decay, or SGD with momentum.
#[derive(Debug, Clone)]
pub struct Optimizer {
    name: OptimizerName,
    momentum: f32,
    t: i32,
    m: Vec<f32>,
    v: Vec<f32>,
}

impl Optimizer {
    pub fn new(name: OptimizerName, momentum: f64) -> Self {
        Optimizer {
            name,
            momentum: momentum as f32,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. `visit` must present the same parameters in the same
    /// order on every call.
    pub fn step<V>(&mut self, visit: V, lr: f64, weight_decay: f64)
    where
        V: FnOnce(&mut dyn FnMut(&mut [f32], &mut [f32])),
    {
        const B1: f32 = 0.9;
        const B2: f32 = 0.999;
        const EPS: f32 = 1e-8;
        self.t += 1;
        let (lr, wd) = (lr as f32, weight_decay as f32);
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        let name = self.name;
        let momentum = self.momentum;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut offset = 0;
        visit(&mut |p, g| {
            let end = offset + p.len();
            if m.len() < end {
                m.resize(end, 0.0);
                v.resize(end, 0.0);
            }
            let (ms, vs) = (&mut m[offset..end], &mut v[offset..end]);
            match name {
                OptimizerName::Adam => {
                    for i in 0..p.len() {
                        let gi = g[i] + wd * p[i];
                        ms[i] = B1 * ms[i] + (1.0 - B1) * gi;
                        vs[i] = B2 * vs[i] + (1.0 - B2) * gi * gi;
                        let mhat = ms[i] / bc1;
                        let vhat = vs[i] / bc2;
                        p[i] -= lr * mhat / (vhat.sqrt() + EPS);
                    }
                }
                OptimizerName::Sgd => {
                    for i in 0..p.len() {
                        let gi = g[i] + wd * p[i];
                        ms[i] = momentum * ms[i] + gi;
                        p[i] -= lr * ms[i];
                    }
                }
            }
            offset = end;
        });
    }
}

/// Mean (optionally class-weighted) softmax cross-entropy and its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(
    logits: &Array2<f32>,
    labels: &[usize],
    weights: Option<&[f32]>,
) -> (f64, Array2<f32>) {
    let mut grad = Array2::<f32>::zeros(logits.dim());
    let mut loss = 0.0f64;
    let mut total_w = 0.0f64;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let w = weights.map_or(1.0, |ws| ws[y]) as f64;
        let p = softmax_row(row.as_slice().expect("standard layout"));
        loss -= w * p[y].max(f64::MIN_POSITIVE).ln();
        total_w += w;
        for (j, gj) in g.iter_mut().enumerate() {
            let target = if j == y { 1.0 } else { 0.0 };
            *gj = (w * (p[j] - target)) as f32;
        }
    }
    let inv = 1.0 / total_w;
    grad.mapv_inplace(|v| (v as f64 * inv) as f32);
    (loss * inv, grad)
}

fn softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let e: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn logits_2d(x: Array4<f32>) -> Array2<f32> {
    let (n, _, _, c) = x.dim();
    x.into_shape_with_order((n, c)).expect("logits are (n, 1, 1, c)")
}

/// Per-batch augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct Augmentation {
    pub hflip: bool,
    pub crop_pad: usize,
    pub rand_augment: Option<RandAugment>,
}

impl Augmentation {
    pub fn from_config(pre: &PreprocessConfig, reg: &RegularizationConfig) -> Result<Self> {
        Ok(Augmentation {
            hflip: pre.hflip,
            crop_pad: pre.crop_pad,
            rand_augment: if reg.ra_enabled {
                Some(RandAugment::new(reg.ra_n, reg.ra_m)?)
            } else {
                None
            },
        })
    }

    pub fn none() -> Self {
        Augmentation {
            hflip: false,
            crop_pad: 0,
            rand_augment: None,
        }
    }

    fn apply(&self, img: &mut Image, rng: &mut dyn RngCore) {
        if let Some(ra) = &self.rand_augment {
            ra.apply(img, rng);
        }
        random_crop(img, self.crop_pad, rng);
        if self.hflip && rand::Rng::gen::<bool>(rng) {
            hflip(img);
        }
    }
}

/// Standardized input tensor for `indices`, augmented when `aug` is given.
pub fn build_batch(
    data: &Dataset,
    indices: &[usize],
    aug: Option<(&Augmentation, &mut dyn RngCore)>,
) -> Array4<f32> {
    let (h, w, c) = data.shape();
    let mut buf = Vec::with_capacity(indices.len() * h * w * c);
    match aug {
        Some((a, rng)) => {
            for &i in indices {
                let mut img = Image {
                    height: h,
                    width: w,
                    channels: c,
                    pixels: data.image(i).to_vec(),
                };
                a.apply(&mut img, rng);
                buf.extend(img.pixels.iter().map(|p| (p - INPUT_MEAN) / INPUT_STD));
            }
        }
        None => {
            for &i in indices {
                buf.extend(data.image(i).iter().map(|p| (p - INPUT_MEAN) / INPUT_STD));
            }
        }
    }
    Array4::from_shape_vec((indices.len(), h, w, c), buf).expect("image sizes match")
}

/// Contiguous batch ranges; a trailing batch of one sample is merged into
/// the previous batch so batch statistics stay defined.
fn batch_ranges(n: usize, batch: usize) -> Vec<std::ops::Range<usize>> {
    let batch = batch.max(1);
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(batch)
        .map(|s| s..(s + batch).min(n))
        .collect();
    if out.len() > 1 && out.last().map_or(false, |r| r.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").end = last.end;
    }
    out
}

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerName,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub schedule: LrSchedule,
    pub augmentation: Augmentation,
    pub regularization: RegularizationConfig,
    pub class_weights: Option<Vec<f32>>,
}

impl TrainSettings {
    /// Settings for AL iteration `iteration` (0 is the base classifier).
    pub fn from_config(cfg: &ExperimentConfig, iteration: usize) -> Result<Self> {
        let (lr, weight_decay) = cfg.optimizer.lr_wd_for_iteration(iteration);
        Ok(TrainSettings {
            epochs: cfg.optimizer.epochs,
            batch_size: cfg.optimizer.batch_size,
            optimizer: cfg.optimizer.name,
            lr,
            weight_decay,
            momentum: cfg.optimizer.momentum,
            schedule: cfg.optimizer.lr_schedule.clone(),
            augmentation: Augmentation::from_config(&cfg.preprocess, &cfg.regularization)?,
            regularization: cfg.regularization.clone(),
            class_weights: None,
        })
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_for_epoch(&self, epoch: usize) -> f64 {
        let reg = &self.regularization;
        if reg.swa_enabled && epoch >= reg.swa_start_epoch {
            reg.swa_lr
        } else {
            self.schedule.lr_at(self.lr, epoch - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub best_val_accuracy: f64,
    /// 1-based epoch of the returned model; `epochs + 1` denotes the
    /// weight-averaged model.
    pub best_epoch: usize,
    /// Validation accuracy after every epoch, followed by the averaged
    /// model's accuracy when SWA ran.
    pub val_curve: Vec<f64>,
    pub train_loss_curve: Vec<f64>,
    pub swa_applied: bool,
    pub swa_snapshot_epochs: Vec<usize>,
    /// Filled in by the caller after evaluation on the test split.
    pub test_accuracy: Option<f64>,
    /// True when training started from a previous model instead of a
    /// fresh initialization.
    pub warm_start: bool,
    pub warnings: Vec<String>,
}

/// Trains a classifier on `labeled` (dataset index, annotated label) pairs
/// and returns the checkpoint with the best validation accuracy.
///
/// `model_rng` drives initialization and dropout masks; `augment_rng`
/// drives shuffling and augmentation.
pub fn train_task_model(
    data: &Dataset,
    spec: NetworkSpec,
    settings: &TrainSettings,
    labeled: &[(usize, usize)],
    val: &[usize],
    warm_start: Option<&Network>,
    model_rng: &mut dyn RngCore,
    augment_rng: &mut dyn RngCore,
) -> Result<(Network, TrainReport)> {
    if labeled.is_empty() {
        return Err(ModelError::InvalidInput("labeled set is empty".into()));
    }
    if val.is_empty() {
        return Err(ModelError::InvalidInput("validation set is empty".into()));
    }
    if settings.epochs == 0 {
        return Err(ModelError::InvalidInput("training needs at least one epoch".into()));
    }
    let idx: Vec<usize> = labeled.iter().map(|&(i, _)| i).collect();
    data.check_indices(&idx)?;
    data.check_indices(val)?;
    if let Some(&(i, y)) = labeled.iter().find(|&&(_, y)| y >= spec.num_classes) {
        return Err(ModelError::InvalidInput(format!(
            "label {y} of index {i} outside {} classes",
            spec.num_classes
        )));
    }
    let mut net = match warm_start {
        Some(prev) => {
            if prev.spec() != &spec {
                return Err(ModelError::InvalidInput(
                    "warm-start model has a different architecture".into(),
                ));
            }
            prev.clone()
        }
        None => Network::new(spec, model_rng)?,
    };

    let reg = &settings.regularization;
    let mut warnings = Vec::new();
    let snapshot_epochs = if reg.swa_enabled {
        let plan = swa_snapshot_epochs(
            settings.epochs,
            reg.swa_start_epoch,
            reg.swa_frequency,
            reg.swa_max_snapshots,
        )?;
        if let Some(w) = plan.warning {
            log::warn!("{w}");
            warnings.push(w);
        }
        plan.epochs
    } else {
        Vec::new()
    };

    let weights = settings.class_weights.as_deref();
    let mut opt = Optimizer::new(settings.optimizer, settings.momentum);
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut val_curve = Vec::with_capacity(settings.epochs + 1);
    let mut loss_curve = Vec::with_capacity(settings.epochs);
    let mut snapshots = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=settings.epochs {
        let lr = settings.lr_for_epoch(epoch);
        order.shuffle(augment_rng);
        let mut epoch_loss = 0.0;
        let ranges = batch_ranges(order.len(), settings.batch_size);
        for (b, range) in ranges.iter().enumerate() {
            let batch: Vec<(usize, usize)> = order[range.clone()].iter().map(|&o| labeled[o]).collect();
            let indices: Vec<usize> = batch.iter().map(|&(i, _)| i).collect();
            let labels: Vec<usize> = batch.iter().map(|&(_, y)| y).collect();
            let x = build_batch(data, &indices, Some((&settings.augmentation, &mut *augment_rng)));
            net.zero_grad();
            let logits = logits_2d(net.forward(x, Mode::Train, model_rng));
            let (loss, grad) = softmax_cross_entropy(&logits, &labels, weights);
            if !loss.is_finite() {
                return Err(ModelError::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            epoch_loss += loss * batch.len() as f64;
            let n = grad.nrows();
            let c = grad.ncols();
            net.backward(grad.into_shape_with_order((n, 1, 1, c)).expect("same size"));
            opt.step(|f| net.visit_params(f), lr, settings.weight_decay);
        }
        net.clear_cache();
        loss_curve.push(epoch_loss / labeled.len() as f64);
        let acc = evaluate(&mut net, data, val)?;
        log::debug!("epoch {epoch}: loss {:.4}, val {acc:.4}", epoch_loss / labeled.len() as f64);
        val_curve.push(acc);
        if snapshot_epochs.contains(&epoch) {
            snapshots.push(net.flat_params());
        }
        if best.as_ref().map_or(true, |(b, _, _)| acc > *b) {
            best = Some((acc, epoch, net.clone()));
        }
    }

    let swa_applied = !snapshots.is_empty();
    if swa_applied {
        let mut swa_net = net;
        swa_net.set_flat_params(&swa_average(&snapshots)?)?;
        recalibrate_batch_norm(&mut swa_net, data, &idx, settings.batch_size);
        let acc = evaluate(&mut swa_net, data, val)?;
        val_curve.push(acc);
        // The averaged model wins ties: it is the intended final model.
        if best.as_ref().map_or(true, |(b, _, _)| acc >= *b) {
            best = Some((acc, settings.epochs + 1, swa_net));
        }
    }
    let (best_val_accuracy, best_epoch, model) = best.expect("at least one epoch ran");
    Ok((
        model,
        TrainReport {
            best_val_accuracy,
            best_epoch,
            val_curve,
            train_loss_curve: loss_curve,
            swa_applied,
            swa_snapshot_epochs: snapshot_epochs,
            test_accuracy: None,
            warm_start: warm_start.is_some(),
            warnings,
        },
    ))
}

/// Recomputes batch-norm running statistics with one pass over `indices`
/// (no augmentation), as a cumulative average over batches.
pub fn recalibrate_batch_norm(net: &mut Network, data: &Dataset, indices: &[usize], batch: usize) {
    net.reset_running_stats();
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    for r in batch_ranges(indices.len(), batch) {
        let x = build_batch(data, &indices[r], None);
        net.forward(x, Mode::Recalibrate, &mut no_rng);
    }
    net.clear_cache();
}

fn check_query(data: &Dataset, indices: &[usize]) -> Result<()> {
    data.check_indices(indices)?;
    Ok(())
}

/// Deterministic class probabilities, one row per query index.
pub fn predict_proba(net: &mut Network, data: &Dataset, indices: &[usize]) -> Result<PredictionTensor> {
    check_query(data, indices)?;
    let c = net.num_classes();
    let mut values = Vec::with_capacity(indices.len() * c);
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    for chunk in indices.chunks(EVAL_BATCH) {
        let logits = logits_2d(net.forward(build_batch(data, chunk, None), Mode::Eval, &mut no_rng));
        for row in logits.rows() {
            values.extend(softmax_row(row.as_slice().expect("standard layout")));
        }
    }
    Ok(PredictionTensor::new(1, indices.len(), c, values)?)
}

/// `passes` stochastic forward passes with dropout active, shaped
/// `[passes, samples, classes]`.
pub fn mc_dropout_predict(
    net: &mut Network,
    data: &Dataset,
    indices: &[usize],
    passes: usize,
    rng: &mut dyn RngCore,
) -> Result<PredictionTensor> {
    if passes == 0 {
        return Err(ModelError::InvalidInput("MC dropout needs at least one pass".into()));
    }
    if !net.has_dropout() {
        return Err(ModelError::InvalidInput(
            "MC dropout needs a network with a dropout site".into(),
        ));
    }
    check_query(data, indices)?;
    let c = net.num_classes();
    let n = indices.len();
    let mut values = vec![0.0f64; passes * n * c];
    let mut offset = 0;
    for chunk in indices.chunks(EVAL_BATCH) {
        let (prefix, start) = net.deterministic_prefix(build_batch(data, chunk, None));
        for t in 0..passes {
            let logits = logits_2d(net.stochastic_suffix(prefix.clone(), start, rng));
            for (r, row) in logits.rows().into_iter().enumerate() {
                let at = (t * n + offset + r) * c;
                values[at..at + c]
                    .copy_from_slice(&softmax_row(row.as_slice().expect("standard layout")));
            }
        }
        offset += chunk.len();
    }
    Ok(PredictionTensor::new(passes, n, c, values)?)
}

/// Penultimate-layer activations with dropout off.
pub fn penultimate_embeddings(
    net: &mut Network,
    data: &Dataset,
    indices: &[usize],
) -> Result<EmbeddingMatrix> {
    check_query(data, indices)?;
    let d = net.embedding_dim();
    let mut values = Vec::with_capacity(indices.len() * d);
    for chunk in indices.chunks(EVAL_BATCH) {
        let e = net.embed(build_batch(data, chunk, None));
        values.extend(e.iter());
    }
    Ok(EmbeddingMatrix::new(indices.to_vec(), d, values)?)
}

/// Arg-max predictions; ties go to the lower class.
pub fn predict_classes(net: &mut Network, data: &Dataset, indices: &[usize]) -> Result<Vec<usize>> {
    let probs = predict_proba(net, data, indices)?;
    Ok(probs.argmax_votes().into_iter().map(|v| v[0]).collect())
}

/// Fraction of `indices` whose ground-truth label is predicted.
pub fn evaluate(net: &mut Network, data: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(ModelError::InvalidInput("cannot evaluate on an empty set".into()));
    }
    let predicted = predict_classes(net, data, indices)?;
    let correct = predicted
        .iter()
        .zip(indices)
        .filter(|(p, &i)| **p == data.label(i))
        .count();
    Ok(correct as f64 / indices.len() as f64)
}
