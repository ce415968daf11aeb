//! Finite-difference checks of the hand-written backward passes.
//!
//! The loss is `sum(y * r)` for a fixed random `r`, so `dL/dy = r`. Central
//! differences are taken in f32, which bounds the attainable agreement.

use albench_core::config::ArchitectureId;
use albench_model::layers::{BatchNorm, Conv2d, Layer, Linear, Mode, Residual};
use albench_model::{Network, NetworkSpec};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f32 = 1e-2;

fn random4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f32> {
    Array4::from_shape_simple_fn(shape, || rng.gen_range(-1.0f32..1.0))
}

fn loss(y: &Array4<f32>, r: &Array4<f32>) -> f64 {
    y.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum()
}

fn close(numeric: f64, analytic: f64, what: &str) {
    let tol = 1e-2 * analytic.abs() + 1e-3;
    assert!(
        (numeric - analytic).abs() <= tol,
        "{what}: numeric {numeric:.5} vs analytic {analytic:.5}"
    );
}

fn forward(layer: &mut Layer, x: &Array4<f32>) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = layer.forward(x.clone(), Mode::Train, &mut rng);
    layer.clear_cache();
    y
}

/// Checks the input gradient and every parameter gradient of `layer`.
fn check_layer(layer: Layer, shape: (usize, usize, usize, usize), name: &str) {
    check_layer_eps(layer, shape, name, EPS);
}

/// Piecewise-linear layers use a step small enough not to cross a kink.
fn check_layer_eps(mut layer: Layer, shape: (usize, usize, usize, usize), name: &str, eps: f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random4(shape, &mut rng);
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(0);
    let y = layer.forward(x.clone(), Mode::Train, &mut fwd_rng);
    let r = random4(y.dim(), &mut rng);
    let dx = layer.backward(r.clone(), true).expect("input gradient");

    // Input gradient on a spread of coordinates.
    let n = x.len();
    for j in (0..n).step_by((n / 12).max(1)) {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp.as_slice_mut().unwrap()[j] += eps;
        xm.as_slice_mut().unwrap()[j] -= eps;
        let num = (loss(&forward(&mut layer, &xp), &r) - loss(&forward(&mut layer, &xm), &r))
            / (2.0 * eps as f64);
        close(num, dx.as_slice().unwrap()[j] as f64, &format!("{name} dx[{j}]"));
    }

    // Parameter gradients, tensor by tensor.
    let mut grads: Vec<Vec<f32>> = Vec::new();
    layer.visit_params(&mut |_, g| grads.push(g.to_vec()));
    for (t, g) in grads.iter().enumerate() {
        for j in (0..g.len()).step_by((g.len() / 6).max(1)) {
            let eval = |layer: &mut Layer, delta: f32| {
                let mut k = 0;
                layer.visit_params(&mut |p, _| {
                    if k == t {
                        p[j] += delta;
                    }
                    k += 1;
                });
                let l = loss(&forward(layer, &x), &r);
                let mut k = 0;
                layer.visit_params(&mut |p, _| {
                    if k == t {
                        p[j] -= delta;
                    }
                    k += 1;
                });
                l
            };
            let num = (eval(&mut layer, eps) - eval(&mut layer, -eps)) / (2.0 * eps as f64);
            close(num, g[j] as f64, &format!("{name} param {t}[{j}]"));
        }
    }
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    check_layer(Layer::Conv(Conv2d::new(3, 4, 3, 1, 1, true, &mut rng)), (2, 5, 5, 3), "conv3x3");
    check_layer(Layer::Conv(Conv2d::new(3, 2, 3, 2, 1, false, &mut rng)), (2, 6, 6, 3), "conv stride 2");
    check_layer(Layer::Conv(Conv2d::new(4, 3, 1, 2, 0, false, &mut rng)), (1, 4, 4, 4), "conv1x1");
}

#[test]
fn batch_norm_gradients() {
    check_layer(Layer::BatchNorm(BatchNorm::new(3)), (4, 3, 3, 3), "batchnorm");
}

#[test]
fn pooling_and_relu_gradients() {
    check_layer_eps(Layer::max_pool(), (2, 4, 4, 3), "maxpool", 1e-3);
    check_layer(Layer::global_avg_pool(), (2, 3, 3, 4), "gap");
    check_layer_eps(Layer::relu(), (2, 3, 3, 2), "relu", 1e-3);
}

#[test]
fn linear_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    check_layer(Layer::Linear(Linear::new(12, 5, &mut rng)), (3, 2, 2, 3), "linear");
}

#[test]
fn residual_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let identity = Residual::new(
        vec![
            Layer::Conv(Conv2d::new(3, 3, 3, 1, 1, false, &mut rng)),
            Layer::BatchNorm(BatchNorm::new(3)),
        ],
        Vec::new(),
        true,
    );
    check_layer(Layer::Residual(Box::new(identity)), (2, 4, 4, 3), "residual identity");
    let projected = Residual::new(
        vec![
            Layer::BatchNorm(BatchNorm::new(3)),
            Layer::relu(),
            Layer::Conv(Conv2d::new(3, 4, 3, 2, 1, false, &mut rng)),
        ],
        vec![Layer::Conv(Conv2d::new(3, 4, 1, 2, 0, false, &mut rng))],
        false,
    );
    check_layer(Layer::Residual(Box::new(projected)), (2, 4, 4, 3), "residual projection");
}

#[test]
fn whole_network_parameter_gradients() {
    let spec = NetworkSpec {
        architecture: ArchitectureId::SmallCnn,
        num_classes: 3,
        input_shape: (8, 8, 3),
        dropout_rate: 0.0,
        mc_dropout_site: false,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = Network::new(spec, &mut rng).unwrap();
    let x = random4((4, 8, 8, 3), &mut rng);
    let fwd = |net: &mut Network| {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let y = net.forward(x.clone(), Mode::Train, &mut r);
        net.clear_cache();
        y
    };
    let y = fwd(&mut net);
    let r = random4(y.dim(), &mut rng);
    net.zero_grad();
    let mut r0 = ChaCha8Rng::seed_from_u64(0);
    net.forward(x.clone(), Mode::Train, &mut r0);
    net.backward(r.clone());
    let mut grads = Vec::new();
    net.visit_params(&mut |_, g| grads.extend_from_slice(g));
    assert!(grads.iter().filter(|g| g.abs() > 1e-3).count() > grads.len() / 4);
    let base = net.flat_params();
    for j in (0..base.len()).step_by(base.len() / 25) {
        let mut p = base.clone();
        p[j] += EPS;
        net.set_flat_params(&p).unwrap();
        let lp = loss(&fwd(&mut net), &r);
        p[j] -= 2.0 * EPS;
        net.set_flat_params(&p).unwrap();
        let lm = loss(&fwd(&mut net), &r);
        close((lp - lm) / (2.0 * EPS as f64), grads[j] as f64, &format!("smallcnn param {j}"));
    }
}
