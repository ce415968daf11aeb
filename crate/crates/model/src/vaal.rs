//! Variational adversarial sampler: a beta-VAE and a latent-space
//! discriminator trained against each other on labeled and unlabeled
//! images. Unlabeled samples the discriminator is least sure it has seen
//! are selected.
//!
//! The VAE and discriminator are multilayer perceptrons over flattened
//! pixels. The discriminator has a two-way softmax output whose first
//! component is the probability of "seen" (labeled).

use std::path::Path;

use ndarray::{Array2, Array4};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use albench_core::acquisition::{select_top_k, Direction, ScoredPool};
use albench_core::config::{OptimizerName, VaalConfig};

use crate::error::{ModelError, Result};
use crate::layers::{backward_seq, forward_seq, Layer, Linear, Mode};
use crate::training::{softmax_cross_entropy, Optimizer};

const SEEN: usize = 0;
const UNSEEN: usize = 1;
const LOGVAR_CLAMP: f32 = 10.0;

/// Flattened images, one row per sample, pixels in [0, 1]. Carries no
/// labels by construction.
pub type ImageRows = Array2<f32>;

fn mlp<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Vec<Layer> {
    let mut layers = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        layers.push(Layer::Linear(Linear::new(pair[0], pair[1], rng)));
        if i + 2 < widths.len() {
            layers.push(Layer::relu());
        }
    }
    layers
}

fn as4(x: Array2<f32>) -> Array4<f32> {
    let (n, d) = x.dim();
    x.into_shape_with_order((n, 1, 1, d)).expect("standard layout")
}

fn as2(x: Array4<f32>) -> Array2<f32> {
    let (n, h, w, c) = x.dim();
    x.into_shape_with_order((n, h * w * c)).expect("standard layout")
}

fn visit(layers: &mut [Layer], f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
    for l in layers {
        l.visit_params(f);
    }
}

/// Losses recorded at one training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaalStepLosses {
    pub reconstruction: f64,
    pub kl: f64,
    pub adversarial: f64,
    pub discriminator: f64,
}

/// A fitted VAE encoder plus discriminator.
#[derive(Debug, Clone)]
pub struct VaalScorer {
    input_dim: usize,
    config: VaalConfig,
    encoder: Vec<Layer>,
    mu_head: Vec<Layer>,
    logvar_head: Vec<Layer>,
    decoder: Vec<Layer>,
    discriminator: Vec<Layer>,
    pub losses: Vec<VaalStepLosses>,
}

/// Probability that each queried sample is "seen", aligned with
/// `pool_indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeenScores {
    pub pool_indices: Vec<usize>,
    pub probabilities: Vec<f64>,
}

fn sample_rows<R: Rng + ?Sized>(x: &ImageRows, n: usize, rng: &mut R) -> Array2<f32> {
    let d = x.ncols();
    let mut out = Array2::zeros((n, d));
    for mut row in out.rows_mut() {
        row.assign(&x.row(rng.gen_range(0..x.nrows())));
    }
    out
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

impl VaalScorer {
    fn new<R: Rng + ?Sized>(input_dim: usize, cfg: &VaalConfig, rng: &mut R) -> Self {
        let (h, z) = (cfg.hidden_dim, cfg.latent_dim);
        VaalScorer {
            input_dim,
            config: cfg.clone(),
            encoder: {
                let mut e = mlp(&[input_dim, h, h], rng);
                e.push(Layer::relu());
                e
            },
            mu_head: mlp(&[h, z], rng),
            logvar_head: mlp(&[h, z], rng),
            decoder: mlp(&[z, h, h, input_dim], rng),
            discriminator: mlp(&[z, h, h, 2], rng),
            losses: Vec::new(),
        }
    }

    fn zero_grad(&mut self) {
        for part in [
            &mut self.encoder,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.decoder,
            &mut self.discriminator,
        ] {
            visit(part, &mut |_, g| g.fill(0.0));
        }
    }

    fn encode(&mut self, x: Array2<f32>, mode: Mode, rng: &mut dyn RngCore) -> (Array2<f32>, Array2<f32>) {
        let h = forward_seq(&mut self.encoder, as4(x), mode, rng);
        let mu = as2(forward_seq(&mut self.mu_head, h.clone(), mode, rng));
        let lv = as2(forward_seq(&mut self.logvar_head, h, mode, rng));
        (mu, lv.mapv(|v| v.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP)))
    }

    /// One VAE update: ELBO on both pools plus the adversarial term that
    /// pushes every latent toward the "seen" decision.
    fn vae_step(&mut self, x: Array2<f32>, opt: &mut Optimizer, rng: &mut dyn RngCore) -> Result<(f64, f64, f64)> {
        let cfg = self.config.clone();
        let n = x.nrows();
        self.zero_grad();
        let (mu, lv) = self.encode(x.clone(), Mode::Train, rng);
        let eps = Array2::from_shape_simple_fn(mu.dim(), || rng.sample::<f32, _>(StandardNormal));
        let std = lv.mapv(|v| (0.5 * v).exp());
        let z = &mu + &(&eps * &std);
        let logits = as2(forward_seq(&mut self.decoder, as4(z), Mode::Train, rng));
        let recon = logits.mapv(sigmoid);

        let inv_n = 1.0 / n as f32;
        let diff = &recon - &x;
        let rec_loss = diff.iter().map(|d| (d * d) as f64).sum::<f64>() / n as f64;
        let d_logits = Array2::from_shape_fn(diff.dim(), |(i, j)| {
            2.0 * diff[[i, j]] * recon[[i, j]] * (1.0 - recon[[i, j]]) * inv_n
        });
        let kl = mu
            .iter()
            .zip(lv.iter())
            .map(|(&m, &l)| -0.5 * (1.0 + l - m * m - l.exp()) as f64)
            .sum::<f64>()
            / n as f64;

        let d_z = as2(backward_seq(&mut self.decoder, as4(d_logits), true).expect("requested"));
        let beta = cfg.beta as f32;
        let mut d_mu = &d_z + &(&mu * (beta * inv_n));
        let mut d_lv = Array2::from_shape_fn(lv.dim(), |(i, j)| {
            d_z[[i, j]] * eps[[i, j]] * 0.5 * std[[i, j]] + beta * 0.5 * (lv[[i, j]].exp() - 1.0) * inv_n
        });
        // Zero the gradient where the clamp was active.
        d_lv.zip_mut_with(&lv, |g, &l| {
            if l.abs() >= LOGVAR_CLAMP {
                *g = 0.0;
            }
        });

        let disc_logits = as2(forward_seq(&mut self.discriminator, as4(mu.clone()), Mode::Train, rng));
        let target = vec![SEEN; n];
        let (adv_loss, d_disc) = softmax_cross_entropy(&disc_logits, &target, None);
        let w = cfg.adversary_weight as f32;
        let d_mu_adv = as2(
            backward_seq(&mut self.discriminator, as4(d_disc.mapv(|v| v * w)), true).expect("requested"),
        );
        d_mu += &d_mu_adv;

        let total = rec_loss + cfg.beta * kl + cfg.adversary_weight * adv_loss;
        if !total.is_finite() {
            return Err(ModelError::Divergence {
                epoch: 0,
                batch: self.losses.len(),
                loss: total,
            });
        }
        let d_h_mu = backward_seq(&mut self.mu_head, as4(d_mu), true).expect("requested");
        let d_h_lv = backward_seq(&mut self.logvar_head, as4(d_lv), true).expect("requested");
        backward_seq(&mut self.encoder, d_h_mu + d_h_lv, false);

        let (enc, mu_h, lv_h, dec) = (
            &mut self.encoder,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.decoder,
        );
        opt.step(
            |f| {
                visit(enc, f);
                visit(mu_h, f);
                visit(lv_h, f);
                visit(dec, f);
            },
            cfg.vae_lr,
            0.0,
        );
        Ok((rec_loss, kl, adv_loss))
    }

    /// One discriminator update on detached latent means.
    fn disc_step(&mut self, xl: Array2<f32>, xu: Array2<f32>, opt: &mut Optimizer, rng: &mut dyn RngCore) -> Result<f64> {
        let (nl, nu) = (xl.nrows(), xu.nrows());
        let mut x = Array2::zeros((nl + nu, self.input_dim));
        x.slice_mut(ndarray::s![..nl, ..]).assign(&xl);
        x.slice_mut(ndarray::s![nl.., ..]).assign(&xu);
        let (mu, _) = self.encode(x, Mode::Eval, rng);
        self.zero_grad();
        let logits = as2(forward_seq(&mut self.discriminator, as4(mu), Mode::Train, rng));
        let target: Vec<usize> = (0..nl + nu).map(|i| if i < nl { SEEN } else { UNSEEN }).collect();
        let (loss, grad) = softmax_cross_entropy(&logits, &target, None);
        if !loss.is_finite() {
            return Err(ModelError::Divergence {
                epoch: 0,
                batch: self.losses.len(),
                loss,
            });
        }
        backward_seq(&mut self.discriminator, as4(grad), false);
        let disc = &mut self.discriminator;
        opt.step(|f| visit(disc, f), self.config.disc_lr, 0.0);
        Ok(loss)
    }

    /// Probability of "seen" for each row of `images`.
    pub fn score_seen(&mut self, pool_indices: &[usize], images: &ImageRows) -> Result<SeenScores> {
        if images.nrows() != pool_indices.len() {
            return Err(ModelError::Shape(format!(
                "{} images for {} pool indices",
                images.nrows(),
                pool_indices.len()
            )));
        }
        if images.ncols() != self.input_dim {
            return Err(ModelError::Shape(format!(
                "images have {} pixels, scorer expects {}",
                images.ncols(),
                self.input_dim
            )));
        }
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut probabilities = Vec::with_capacity(images.nrows());
        for start in (0..images.nrows()).step_by(512) {
            let end = (start + 512).min(images.nrows());
            let chunk = images.slice(ndarray::s![start..end, ..]).to_owned();
            let (mu, _) = self.encode(chunk, Mode::Eval, &mut no_rng);
            let logits = as2(forward_seq(&mut self.discriminator, as4(mu), Mode::Eval, &mut no_rng));
            for row in logits.rows() {
                let m = row[0].max(row[1]) as f64;
                let a = (row[0] as f64 - m).exp();
                let b = (row[1] as f64 - m).exp();
                probabilities.push(a / (a + b));
            }
        }
        Ok(SeenScores {
            pool_indices: pool_indices.to_vec(),
            probabilities,
        })
    }

    /// Writes all weights as a JSON header plus little-endian `f32`s.
    pub fn save(&mut self, path: &Path) -> Result<()> {
        let mut params = Vec::new();
        for part in [
            &mut self.encoder,
            &mut self.mu_head,
            &mut self.logvar_head,
            &mut self.decoder,
            &mut self.discriminator,
        ] {
            visit(part, &mut |p, _| params.extend_from_slice(p));
        }
        let header = serde_json::json!({
            "input_dim": self.input_dim,
            "config": self.config,
            "num_params": params.len(),
            "losses": self.losses,
        })
        .to_string();
        let mut out = Vec::new();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, out).map_err(|e| ModelError::io(format!("writing {}", path.display()), e))
    }
}

/// Trains a fresh VAE and discriminator on labeled and unlabeled images.
pub fn fit_vaal(
    labeled: &ImageRows,
    unlabeled: &ImageRows,
    cfg: &VaalConfig,
    rng: &mut dyn RngCore,
) -> Result<VaalScorer> {
    if labeled.nrows() == 0 || unlabeled.nrows() == 0 {
        return Err(ModelError::InvalidInput(
            "VAAL needs non-empty labeled and unlabeled pools".into(),
        ));
    }
    if labeled.ncols() != unlabeled.ncols() {
        return Err(ModelError::Shape("labeled and unlabeled image sizes differ".into()));
    }
    if cfg.latent_dim == 0 || cfg.hidden_dim == 0 || cfg.vae_lr <= 0.0 || cfg.disc_lr <= 0.0 {
        return Err(ModelError::InvalidInput(
            "VAAL needs positive latent/hidden sizes and learning rates".into(),
        ));
    }
    let mut scorer = VaalScorer::new(labeled.ncols(), cfg, rng);
    let mut vae_opt = Optimizer::new(OptimizerName::Adam, 0.0);
    let mut disc_opt = Optimizer::new(OptimizerName::Adam, 0.0);
    for _ in 0..cfg.steps {
        let xl = sample_rows(labeled, cfg.labeled_batch.max(1), rng);
        let xu = sample_rows(unlabeled, cfg.unlabeled_batch.max(1), rng);
        let mut both = Array2::zeros((xl.nrows() + xu.nrows(), xl.ncols()));
        both.slice_mut(ndarray::s![..xl.nrows(), ..]).assign(&xl);
        both.slice_mut(ndarray::s![xl.nrows().., ..]).assign(&xu);
        let (reconstruction, kl, adversarial) = scorer.vae_step(both, &mut vae_opt, rng)?;
        let discriminator = scorer.disc_step(xl, xu, &mut disc_opt, rng)?;
        scorer.losses.push(VaalStepLosses {
            reconstruction,
            kl,
            adversarial,
            discriminator,
        });
    }
    Ok(scorer)
}

/// The `k` pool samples with the lowest probability of being seen.
pub fn vaal_select(scores: &SeenScores, k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(
        scores.pool_indices.clone(),
        scores.probabilities.clone(),
        Direction::LowerIsSelected,
    )?;
    Ok(select_top_k(&scored, k)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(steps: usize) -> VaalConfig {
        VaalConfig {
            latent_dim: 4,
            hidden_dim: 16,
            steps,
            labeled_batch: 8,
            unlabeled_batch: 8,
            ..VaalConfig::default()
        }
    }

    fn images(n: usize, seed: u64) -> ImageRows {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, 12), || rng.gen::<f32>())
    }

    #[test]
    fn selection_examples() {
        let s = SeenScores {
            pool_indices: vec![4, 7, 9],
            probabilities: vec![0.9, 0.1, 0.5],
        };
        assert_eq!(vaal_select(&s, 1).unwrap(), vec![7]);
        assert_eq!(vaal_select(&s, 3).unwrap(), vec![4, 7, 9]);
        assert!(vaal_select(&s, 4).is_err());
        let flat = SeenScores {
            pool_indices: vec![5, 2, 8],
            probabilities: vec![0.3; 3],
        };
        assert_eq!(vaal_select(&flat, 2).unwrap(), vec![2, 5]);
    }

    #[test]
    fn empty_pool_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let empty = Array2::zeros((0, 12));
        assert!(fit_vaal(&images(4, 1), &empty, &small_cfg(1), &mut rng).is_err());
    }

    #[test]
    fn scores_are_probabilities_and_deterministic() {
        let (l, u) = (images(20, 1), images(30, 2));
        let fit = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            fit_vaal(&l, &u, &small_cfg(20), &mut rng).unwrap()
        };
        let idx: Vec<usize> = (100..130).collect();
        let mut a = fit(3);
        let mut b = fit(3);
        let sa = a.score_seen(&idx, &u).unwrap();
        assert_eq!(sa, b.score_seen(&idx, &u).unwrap());
        assert_eq!(sa, a.score_seen(&idx, &u).unwrap());
        assert!(sa.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
        assert_eq!(a.losses.len(), 20);
    }

    #[test]
    fn scores_follow_query_order() {
        let (l, u) = (images(10, 1), images(10, 2));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = fit_vaal(&l, &u, &small_cfg(5), &mut rng).unwrap();
        let idx: Vec<usize> = (0..10).collect();
        let fwd = s.score_seen(&idx, &u).unwrap();
        let rev_rows: Vec<usize> = (0..10).rev().collect();
        let rev = u.select(ndarray::Axis(0), &rev_rows);
        let back = s.score_seen(&rev_rows, &rev).unwrap();
        for (i, p) in fwd.probabilities.iter().enumerate() {
            assert_eq!(*p, back.probabilities[9 - i]);
        }
    }
}
