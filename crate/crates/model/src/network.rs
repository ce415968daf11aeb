//! Architectures and the network container.

use ndarray::Array4;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use albench_core::config::ArchitectureId;

use crate::error::{ModelError, Result};
use crate::layers::{backward_seq, forward_seq, BatchNorm, Conv2d, Layer, Linear, Mode, Residual};

/// Everything needed to rebuild a network's structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub architecture: ArchitectureId,
    pub num_classes: usize,
    /// (height, width, channels) of one input image.
    pub input_shape: (usize, usize, usize),
    pub dropout_rate: f64,
    /// Adds a dropout site before the final linear layer of architectures
    /// that have none (resnet18, wrn28_2).
    pub mc_dropout_site: bool,
}

/// A classifier split into three parts:
///
/// * the trunk, which never contains dropout,
/// * the neck, whose output is the penultimate embedding,
/// * the head, ending in class logits.
///
/// MC-dropout inference runs the trunk once and the stochastic remainder
/// once per pass.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    trunk: Vec<Layer>,
    /// Neck followed by head.
    tail: Vec<Layer>,
    neck_len: usize,
    embedding_dim: usize,
}

fn conv_bn_relu<R: Rng + ?Sized>(cin: usize, cout: usize, rng: &mut R) -> [Layer; 3] {
    [
        Layer::Conv(Conv2d::new(cin, cout, 3, 1, 1, false, rng)),
        Layer::BatchNorm(BatchNorm::new(cout)),
        Layer::relu(),
    ]
}

fn basic_block<R: Rng + ?Sized>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Layer {
    let body = vec![
        Layer::Conv(Conv2d::new(cin, cout, 3, stride, 1, false, rng)),
        Layer::BatchNorm(BatchNorm::new(cout)),
        Layer::relu(),
        Layer::Conv(Conv2d::new(cout, cout, 3, 1, 1, false, rng)),
        Layer::BatchNorm(BatchNorm::new(cout)),
    ];
    let shortcut = if stride != 1 || cin != cout {
        vec![
            Layer::Conv(Conv2d::new(cin, cout, 1, stride, 0, false, rng)),
            Layer::BatchNorm(BatchNorm::new(cout)),
        ]
    } else {
        Vec::new()
    };
    Layer::Residual(Box::new(Residual::new(body, shortcut, true)))
}

/// Pre-activation wide block. The shortcut projection, when present, reads
/// the raw block input.
fn wide_block<R: Rng + ?Sized>(cin: usize, cout: usize, stride: usize, rng: &mut R) -> Layer {
    let body = vec![
        Layer::BatchNorm(BatchNorm::new(cin)),
        Layer::relu(),
        Layer::Conv(Conv2d::new(cin, cout, 3, stride, 1, false, rng)),
        Layer::BatchNorm(BatchNorm::new(cout)),
        Layer::relu(),
        Layer::Conv(Conv2d::new(cout, cout, 3, 1, 1, false, rng)),
    ];
    let shortcut = if stride != 1 || cin != cout {
        vec![Layer::Conv(Conv2d::new(cin, cout, 1, stride, 0, false, rng))]
    } else {
        Vec::new()
    };
    Layer::Residual(Box::new(Residual::new(body, shortcut, false)))
}

impl Network {
    /// Builds a freshly initialized network.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, rng: &mut R) -> Result<Self> {
        let (h, w, c) = spec.input_shape;
        if spec.num_classes < 2 {
            return Err(ModelError::Shape(format!(
                "a classifier needs at least 2 classes, got {}",
                spec.num_classes
            )));
        }
        if !(0.0..1.0).contains(&spec.dropout_rate) {
            return Err(ModelError::Shape(format!(
                "dropout rate must lie in [0,1), got {}",
                spec.dropout_rate
            )));
        }
        let p = spec.dropout_rate as f32;
        let classes = spec.num_classes;
        let (trunk, neck, head, dim) = match spec.architecture {
            ArchitectureId::SmallCnn => {
                if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
                    return Err(ModelError::Shape(format!(
                        "smallcnn needs sides divisible by 4, got {h}x{w}"
                    )));
                }
                let mut trunk = Vec::new();
                trunk.extend(conv_bn_relu(c, 32, rng));
                trunk.push(Layer::max_pool());
                trunk.extend(conv_bn_relu(32, 64, rng));
                trunk.push(Layer::max_pool());
                let flat = (h / 4) * (w / 4) * 64;
                let neck = vec![Layer::Linear(Linear::new(flat, 128, rng)), Layer::relu()];
                let head = vec![Layer::dropout(p), Layer::Linear(Linear::new(128, classes, rng))];
                (trunk, neck, head, 128)
            }
            ArchitectureId::Vgg16Bn => {
                if h != 32 || w != 32 {
                    return Err(ModelError::Shape(format!(
                        "vgg16bn expects 32x32 inputs, got {h}x{w}"
                    )));
                }
                let cfg: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
                let mut trunk = Vec::new();
                let mut cin = c;
                for stage in cfg {
                    for &cout in stage {
                        trunk.extend(conv_bn_relu(cin, cout, rng));
                        cin = cout;
                    }
                    trunk.push(Layer::max_pool());
                }
                let neck = vec![
                    Layer::dropout(p),
                    Layer::Linear(Linear::new(512, 512, rng)),
                    Layer::relu(),
                ];
                let head = vec![Layer::dropout(p), Layer::Linear(Linear::new(512, classes, rng))];
                (trunk, neck, head, 512)
            }
            ArchitectureId::ResNet18 => {
                let mut trunk: Vec<Layer> = conv_bn_relu(c, 64, rng).into();
                let mut cin = 64;
                for (cout, stride) in [(64, 1), (128, 2), (256, 2), (512, 2)] {
                    trunk.push(basic_block(cin, cout, stride, rng));
                    trunk.push(basic_block(cout, cout, 1, rng));
                    cin = cout;
                }
                trunk.push(Layer::global_avg_pool());
                let mut head = Vec::new();
                if spec.mc_dropout_site {
                    head.push(Layer::dropout(p));
                }
                head.push(Layer::Linear(Linear::new(512, classes, rng)));
                (trunk, Vec::new(), head, 512)
            }
            ArchitectureId::Wrn28_2 => {
                let mut trunk = vec![Layer::Conv(Conv2d::new(c, 16, 3, 1, 1, false, rng))];
                let mut cin = 16;
                for (cout, stride) in [(32, 1), (64, 2), (128, 2)] {
                    trunk.push(wide_block(cin, cout, stride, rng));
                    for _ in 1..4 {
                        trunk.push(wide_block(cout, cout, 1, rng));
                    }
                    cin = cout;
                }
                trunk.push(Layer::BatchNorm(BatchNorm::new(128)));
                trunk.push(Layer::relu());
                trunk.push(Layer::global_avg_pool());
                let mut head = Vec::new();
                if spec.mc_dropout_site {
                    head.push(Layer::dropout(p));
                }
                head.push(Layer::Linear(Linear::new(128, classes, rng)));
                (trunk, Vec::new(), head, 128)
            }
        };
        let neck_len = neck.len();
        let mut tail = neck;
        tail.extend(head);
        Ok(Network {
            spec,
            trunk,
            tail,
            neck_len,
            embedding_dim: dim,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Width of the penultimate layer.
    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn has_dropout(&self) -> bool {
        self.tail.iter().any(Layer::has_dropout)
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Layer> {
        self.trunk.iter_mut().chain(self.tail.iter_mut())
    }

    /// Full forward pass to logits `(n, 1, 1, classes)`.
    pub fn forward(&mut self, x: Array4<f32>, mode: Mode, rng: &mut dyn RngCore) -> Array4<f32> {
        let x = forward_seq(&mut self.trunk, x, mode, rng);
        forward_seq(&mut self.tail, x, mode, rng)
    }

    /// Backward from logit gradients; parameter gradients accumulate.
    pub fn backward(&mut self, dlogits: Array4<f32>) {
        let d = backward_seq(&mut self.tail, dlogits, true).expect("requested");
        backward_seq(&mut self.trunk, d, false);
    }

    /// Penultimate activations with dropout off.
    pub fn embed(&mut self, x: Array4<f32>) -> Array4<f32> {
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        let x = forward_seq(&mut self.trunk, x, Mode::Eval, &mut no_rng);
        forward_seq(&mut self.tail[..self.neck_len], x, Mode::Eval, &mut no_rng)
    }

    /// Splits the forward pass at the first dropout site: returns the
    /// deterministic prefix output and the number of tail layers consumed.
    pub(crate) fn deterministic_prefix(&mut self, x: Array4<f32>) -> (Array4<f32>, usize) {
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        let split = self
            .tail
            .iter()
            .position(Layer::has_dropout)
            .unwrap_or(self.tail.len());
        let x = forward_seq(&mut self.trunk, x, Mode::Eval, &mut no_rng);
        (forward_seq(&mut self.tail[..split], x, Mode::Eval, &mut no_rng), split)
    }

    /// Runs the tail from `start` with dropout active.
    pub(crate) fn stochastic_suffix(
        &mut self,
        x: Array4<f32>,
        start: usize,
        rng: &mut dyn RngCore,
    ) -> Array4<f32> {
        forward_seq(&mut self.tail[start..], x, Mode::McDropout, rng)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        for l in self.layers_mut() {
            l.visit_params(f);
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, g| g.fill(0.0));
    }

    pub fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p, _| n += p.len());
        n
    }

    /// All trainable parameters, concatenated in visiting order.
    pub fn flat_params(&mut self) -> Vec<f32> {
        let mut out = Vec::new();
        self.visit_params(&mut |p, _| out.extend_from_slice(p));
        out
    }

    pub fn set_flat_params(&mut self, values: &[f32]) -> Result<()> {
        let n = self.num_params();
        if values.len() != n {
            return Err(ModelError::Shape(format!(
                "expected {n} parameters, got {}",
                values.len()
            )));
        }
        let mut offset = 0;
        self.visit_params(&mut |p, _| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }

    /// Batch-norm running statistics, concatenated.
    pub fn flat_buffers(&mut self) -> Vec<f32> {
        let mut out = Vec::new();
        for l in self.layers_mut() {
            l.visit_buffers(&mut |b| out.extend_from_slice(b));
        }
        out
    }

    pub fn set_flat_buffers(&mut self, values: &[f32]) -> Result<()> {
        let n = self.flat_buffers().len();
        if values.len() != n {
            return Err(ModelError::Shape(format!(
                "expected {n} buffer values, got {}",
                values.len()
            )));
        }
        let mut offset = 0;
        for l in self.layers_mut() {
            l.visit_buffers(&mut |b| {
                b.copy_from_slice(&values[offset..offset + b.len()]);
                offset += b.len();
            });
        }
        Ok(())
    }

    pub fn reset_running_stats(&mut self) {
        for l in self.layers_mut() {
            l.reset_running_stats();
        }
    }

    pub fn clear_cache(&mut self) {
        for l in self.layers_mut() {
            l.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(arch: ArchitectureId, side: usize) -> NetworkSpec {
        NetworkSpec {
            architecture: arch,
            num_classes: 10,
            input_shape: (side, side, 3),
            dropout_rate: 0.5,
            mc_dropout_site: true,
        }
    }

    fn run(arch: ArchitectureId, side: usize) -> (usize, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Network::new(spec(arch, side), &mut rng).unwrap();
        let x = Array4::from_shape_fn((2, side, side, 3), |(b, y, x, c)| {
            ((b + y * 3 + x * 7 + c) % 11) as f32 / 11.0
        });
        let logits = net.forward(x.clone(), Mode::Eval, &mut rng);
        let emb = net.embed(x);
        (logits.dim().3, emb.len() / 2)
    }

    #[test]
    fn vgg16bn_penultimate_width_is_512() {
        assert_eq!(run(ArchitectureId::Vgg16Bn, 32), (10, 512));
    }

    #[test]
    fn resnet_and_wide_resnet_shapes() {
        assert_eq!(run(ArchitectureId::ResNet18, 32), (10, 512));
        assert_eq!(run(ArchitectureId::Wrn28_2, 32), (10, 128));
    }

    #[test]
    fn smallcnn_shape() {
        assert_eq!(run(ArchitectureId::SmallCnn, 16), (10, 128));
    }

    #[test]
    fn dropout_sites() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = spec(ArchitectureId::ResNet18, 32);
        s.mc_dropout_site = false;
        assert!(!Network::new(s.clone(), &mut rng).unwrap().has_dropout());
        s.architecture = ArchitectureId::SmallCnn;
        assert!(Network::new(s, &mut rng).unwrap().has_dropout());
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut a = Network::new(spec(ArchitectureId::SmallCnn, 8), &mut rng).unwrap();
        let mut b = Network::new(spec(ArchitectureId::SmallCnn, 8), &mut rng).unwrap();
        assert_ne!(a.flat_params(), b.flat_params());
        b.set_flat_params(&a.flat_params()).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        assert!(b.set_flat_params(&[0.0]).is_err());
    }
}
