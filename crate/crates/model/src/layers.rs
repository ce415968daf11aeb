//! Network layers with hand-written backward passes.
//!
//! Activations are NHWC `Array4<f32>` in standard layout. A layer caches
//! whatever its backward pass needs during a training-mode forward and
//! accumulates parameter gradients into its own buffers on backward.

use ndarray::{Array1, Array2, Array4, Axis, Zip};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};

/// How a forward pass treats dropout and batch normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, running-stat updates, dropout active, caches kept.
    Train,
    /// Running statistics, dropout off.
    Eval,
    /// Running statistics, dropout active. Used for MC-dropout inference.
    McDropout,
    /// Batch statistics accumulated into a cumulative running average,
    /// dropout off. Used to recalibrate after weight averaging.
    Recalibrate,
}

impl Mode {
    fn dropout_active(self) -> bool {
        matches!(self, Mode::Train | Mode::McDropout)
    }
}

fn standard(x: Array4<f32>) -> Array4<f32> {
    if x.is_standard_layout() {
        x
    } else {
        x.as_standard_layout().into_owned()
    }
}

fn he_normal<R: Rng + ?Sized>(fan_in: usize, len: usize, rng: &mut R) -> Vec<f32> {
    let d = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("valid std");
    (0..len).map(|_| d.sample(rng)).collect()
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `(k*k*cin, cout)`, rows ordered (ky, kx, ci).
    pub w: Array2<f32>,
    pub b: Option<Array1<f32>>,
    gw: Array2<f32>,
    gb: Option<Array1<f32>>,
    cache: Option<(Array2<f32>, [usize; 4])>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let rows = k * k * cin;
        let w = Array2::from_shape_vec((rows, cout), he_normal(rows, rows * cout, rng))
            .expect("shape matches");
        Conv2d {
            cin,
            cout,
            k,
            stride,
            pad,
            gw: Array2::zeros(w.dim()),
            w,
            b: bias.then(|| Array1::zeros(cout)),
            gb: bias.then(|| Array1::zeros(cout)),
            cache: None,
        }
    }

    fn out_dim(&self, d: usize) -> usize {
        (d + 2 * self.pad - self.k) / self.stride + 1
    }

    fn im2col(&self, x: &Array4<f32>) -> Array2<f32> {
        let (n, h, w, c) = x.dim();
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let k = self.k;
        let row_len = k * k * c;
        let mut cols = Array2::<f32>::zeros((n * ho * wo, row_len));
        let xs = x.as_slice().expect("standard layout");
        let cs = cols.as_slice_mut().expect("fresh array");
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = ((b * ho + oy) * wo + ox) * row_len;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let src = ((b * h + iy as usize) * w + ix as usize) * c;
                            let dst = base + (ky * k + kx) * c;
                            cs[dst..dst + c].copy_from_slice(&xs[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &Array2<f32>, dims: [usize; 4]) -> Array4<f32> {
        let [n, h, w, c] = dims;
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let k = self.k;
        let row_len = k * k * c;
        let mut x = Array4::<f32>::zeros((n, h, w, c));
        let xs = x.as_slice_mut().expect("fresh array");
        let cs = cols.as_slice().expect("standard layout");
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let base = ((b * ho + oy) * wo + ox) * row_len;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let dst = ((b * h + iy as usize) * w + ix as usize) * c;
                            let src = base + (ky * k + kx) * c;
                            for (d, s) in xs[dst..dst + c].iter_mut().zip(&cs[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
        x
    }

    fn forward(&mut self, x: Array4<f32>, mode: Mode) -> Array4<f32> {
        let (n, h, w, _) = x.dim();
        let (ho, wo) = (self.out_dim(h), self.out_dim(w));
        let cols = self.im2col(&x);
        let mut y = cols.dot(&self.w);
        if let Some(b) = &self.b {
            y += b;
        }
        if mode == Mode::Train {
            self.cache = Some((cols, [n, h, w, self.cin]));
        }
        y.into_shape_with_order((n, ho, wo, self.cout))
            .expect("row-major product")
    }

    fn backward(&mut self, dy: Array4<f32>, need_dx: bool) -> Option<Array4<f32>> {
        let (cols, dims) = self.cache.take().expect("backward without a training forward");
        let (n, ho, wo, co) = dy.dim();
        let dy2 = standard(dy)
            .into_shape_with_order((n * ho * wo, co))
            .expect("standard layout");
        self.gw += &cols.t().dot(&dy2);
        if let Some(gb) = &mut self.gb {
            *gb += &dy2.sum_axis(Axis(0));
        }
        need_dx.then(|| self.col2im(&dy2.dot(&self.w.t()), dims))
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Array1<f32>,
    pub beta: Array1<f32>,
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    pub momentum: f32,
    pub eps: f32,
    g_gamma: Array1<f32>,
    g_beta: Array1<f32>,
    recalibration_batches: usize,
    cache: Option<(Array2<f32>, Array1<f32>)>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            recalibration_batches: 0,
            cache: None,
        }
    }

    fn reset_running_stats(&mut self) {
        self.running_mean.fill(0.0);
        self.running_var.fill(1.0);
        self.recalibration_batches = 0;
    }

    fn forward(&mut self, x: Array4<f32>, mode: Mode) -> Array4<f32> {
        let dims = x.dim();
        let c = self.channels;
        let rows = dims.0 * dims.1 * dims.2;
        let mut x2 = standard(x)
            .into_shape_with_order((rows, c))
            .expect("standard layout");
        let (mean, var) = match mode {
            Mode::Eval | Mode::McDropout => (self.running_mean.clone(), self.running_var.clone()),
            Mode::Train | Mode::Recalibrate => {
                let mut sum = vec![0.0f64; c];
                let mut sq = vec![0.0f64; c];
                for row in x2.rows() {
                    for ((s, q), &v) in sum.iter_mut().zip(&mut sq).zip(row) {
                        *s += v as f64;
                        *q += (v as f64) * (v as f64);
                    }
                }
                let m = rows as f64;
                let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
                let var: Vec<f64> = sq
                    .iter()
                    .zip(&mean)
                    .map(|(q, mu)| (q / m - mu * mu).max(0.0))
                    .collect();
                let unbiased = if rows > 1 { m / (m - 1.0) } else { 1.0 };
                if mode == Mode::Train {
                    let mo = self.momentum;
                    for ch in 0..c {
                        self.running_mean[ch] =
                            (1.0 - mo) * self.running_mean[ch] + mo * mean[ch] as f32;
                        self.running_var[ch] =
                            (1.0 - mo) * self.running_var[ch] + mo * (var[ch] * unbiased) as f32;
                    }
                } else {
                    self.recalibration_batches += 1;
                    let t = self.recalibration_batches as f32;
                    for ch in 0..c {
                        self.running_mean[ch] += (mean[ch] as f32 - self.running_mean[ch]) / t;
                        self.running_var[ch] +=
                            ((var[ch] * unbiased) as f32 - self.running_var[ch]) / t;
                    }
                }
                (
                    mean.iter().map(|&v| v as f32).collect(),
                    var.iter().map(|&v| v as f32).collect(),
                )
            }
        };
        let inv_std: Array1<f32> = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        for mut row in x2.rows_mut() {
            for ch in 0..c {
                row[ch] = (row[ch] - mean[ch]) * inv_std[ch];
            }
        }
        let xhat = if mode == Mode::Train {
            Some(x2.clone())
        } else {
            None
        };
        for mut row in x2.rows_mut() {
            for ch in 0..c {
                row[ch] = row[ch] * self.gamma[ch] + self.beta[ch];
            }
        }
        if let Some(xhat) = xhat {
            self.cache = Some((xhat, inv_std));
        }
        x2.into_shape_with_order(dims).expect("same size")
    }

    fn backward(&mut self, dy: Array4<f32>) -> Array4<f32> {
        let (xhat, inv_std) = self.cache.take().expect("backward without a training forward");
        let dims = dy.dim();
        let c = self.channels;
        let rows = dims.0 * dims.1 * dims.2;
        let mut dy2 = standard(dy)
            .into_shape_with_order((rows, c))
            .expect("standard layout");
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (d, xh) in dy2.rows().into_iter().zip(xhat.rows()) {
            for ch in 0..c {
                sum_dy[ch] += d[ch] as f64;
                sum_dy_xhat[ch] += (d[ch] * xh[ch]) as f64;
            }
        }
        for ch in 0..c {
            self.g_beta[ch] += sum_dy[ch] as f32;
            self.g_gamma[ch] += sum_dy_xhat[ch] as f32;
        }
        let m = rows as f32;
        let mean_dy: Vec<f32> = sum_dy.iter().map(|s| *s as f32 / m).collect();
        let mean_dy_xhat: Vec<f32> = sum_dy_xhat.iter().map(|s| *s as f32 / m).collect();
        for (mut d, xh) in dy2.rows_mut().into_iter().zip(xhat.rows()) {
            for ch in 0..c {
                d[ch] = self.gamma[ch]
                    * inv_std[ch]
                    * (d[ch] - mean_dy[ch] - xh[ch] * mean_dy_xhat[ch]);
            }
        }
        dy2.into_shape_with_order(dims).expect("same size")
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool2 {
    cache: Option<(Vec<u32>, [usize; 4])>,
}

impl MaxPool2 {
    fn forward(&mut self, x: Array4<f32>, mode: Mode) -> Array4<f32> {
        let (n, h, w, c) = x.dim();
        let (ho, wo) = (h / 2, w / 2);
        let xs = x.as_slice().expect("standard layout");
        let mut y = Array4::<f32>::zeros((n, ho, wo, c));
        let keep = mode == Mode::Train;
        let mut arg = if keep { vec![0u32; n * ho * wo * c] } else { Vec::new() };
        let ys = y.as_slice_mut().expect("fresh array");
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let out = ((b * ho + oy) * wo + ox) * c;
                    for ch in 0..c {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_i = 0usize;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let i = ((b * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                                if xs[i] > best {
                                    best = xs[i];
                                    best_i = i;
                                }
                            }
                        }
                        ys[out + ch] = best;
                        if keep {
                            arg[out + ch] = best_i as u32;
                        }
                    }
                }
            }
        }
        if keep {
            self.cache = Some((arg, [n, h, w, c]));
        }
        y
    }

    fn backward(&mut self, dy: Array4<f32>) -> Array4<f32> {
        let (arg, [n, h, w, c]) = self.cache.take().expect("backward without a training forward");
        let dy = standard(dy);
        let mut dx = Array4::<f32>::zeros((n, h, w, c));
        let dxs = dx.as_slice_mut().expect("fresh array");
        for (&i, &g) in arg.iter().zip(dy.as_slice().expect("standard layout")) {
            dxs[i as usize] += g;
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f32,
    cache: Option<Array4<f32>>,
}

impl Dropout {
    fn forward(&mut self, mut x: Array4<f32>, mode: Mode, rng: &mut dyn RngCore) -> Array4<f32> {
        if !mode.dropout_active() || self.p <= 0.0 {
            if mode == Mode::Train {
                self.cache = None;
            }
            return x;
        }
        let scale = 1.0 / (1.0 - self.p);
        let mask = Array4::from_shape_simple_fn(x.dim(), || {
            if rng.gen::<f32>() >= self.p {
                scale
            } else {
                0.0
            }
        });
        x *= &mask;
        if mode == Mode::Train {
            self.cache = Some(mask);
        }
        x
    }

    fn backward(&mut self, dy: Array4<f32>) -> Array4<f32> {
        match self.cache.take() {
            Some(mask) => dy * &mask,
            None => dy,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    /// `(inputs, outputs)`.
    pub w: Array2<f32>,
    pub b: Array1<f32>,
    gw: Array2<f32>,
    gb: Array1<f32>,
    cache: Option<(Array2<f32>, [usize; 4])>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f32).sqrt();
        let w = Array2::from_shape_simple_fn((inputs, outputs), || rng.gen_range(-bound..bound));
        let b = Array1::from_shape_simple_fn(outputs, || rng.gen_range(-bound..bound));
        Linear {
            inputs,
            outputs,
            gw: Array2::zeros(w.dim()),
            gb: Array1::zeros(outputs),
            w,
            b,
            cache: None,
        }
    }

    fn forward(&mut self, x: Array4<f32>, mode: Mode) -> Array4<f32> {
        let (n, h, w, c) = x.dim();
        assert_eq!(h * w * c, self.inputs, "linear layer input width");
        let x2 = standard(x)
            .into_shape_with_order((n, self.inputs))
            .expect("standard layout");
        let mut y = x2.dot(&self.w);
        y += &self.b;
        if mode == Mode::Train {
            self.cache = Some((x2, [n, h, w, c]));
        }
        y.into_shape_with_order((n, 1, 1, self.outputs))
            .expect("row-major product")
    }

    fn backward(&mut self, dy: Array4<f32>, need_dx: bool) -> Option<Array4<f32>> {
        let (x2, dims) = self.cache.take().expect("backward without a training forward");
        let n = dy.dim().0;
        let dy2 = standard(dy)
            .into_shape_with_order((n, self.outputs))
            .expect("standard layout");
        self.gw += &x2.t().dot(&dy2);
        self.gb += &dy2.sum_axis(Axis(0));
        need_dx.then(|| {
            dy2.dot(&self.w.t())
                .into_shape_with_order((dims[0], dims[1], dims[2], dims[3]))
                .expect("row-major product")
        })
    }
}

/// `relu(body(x) + shortcut(x))`, or without the final ReLU for
/// pre-activation blocks. An empty shortcut is the identity.
#[derive(Debug, Clone)]
pub struct Residual {
    pub body: Vec<Layer>,
    pub shortcut: Vec<Layer>,
    pub relu_after: bool,
    cache: Option<Array4<f32>>,
}

impl Residual {
    pub fn new(body: Vec<Layer>, shortcut: Vec<Layer>, relu_after: bool) -> Self {
        Residual {
            body,
            shortcut,
            relu_after,
            cache: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv(Conv2d),
    BatchNorm(BatchNorm),
    Relu { cache: Option<Array4<f32>> },
    MaxPool(MaxPool2),
    GlobalAvgPool { cache: Option<[usize; 4]> },
    Dropout(Dropout),
    Linear(Linear),
    Residual(Box<Residual>),
}

fn relu_mask(y: &Array4<f32>) -> Array4<f32> {
    y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

pub(crate) fn forward_seq(
    layers: &mut [Layer],
    mut x: Array4<f32>,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Array4<f32> {
    for l in layers {
        x = l.forward(x, mode, rng);
    }
    x
}

/// Backward through `layers`; returns the input gradient when asked.
pub(crate) fn backward_seq(
    layers: &mut [Layer],
    mut dy: Array4<f32>,
    need_dx: bool,
) -> Option<Array4<f32>> {
    for (i, l) in layers.iter_mut().enumerate().rev() {
        dy = l.backward(dy, need_dx || i > 0)?;
    }
    Some(dy)
}

impl Layer {
    pub fn relu() -> Self {
        Layer::Relu { cache: None }
    }

    pub fn max_pool() -> Self {
        Layer::MaxPool(MaxPool2 { cache: None })
    }

    pub fn global_avg_pool() -> Self {
        Layer::GlobalAvgPool { cache: None }
    }

    pub fn dropout(p: f32) -> Self {
        Layer::Dropout(Dropout { p, cache: None })
    }

    pub fn forward(&mut self, x: Array4<f32>, mode: Mode, rng: &mut dyn RngCore) -> Array4<f32> {
        match self {
            Layer::Conv(c) => c.forward(standard(x), mode),
            Layer::BatchNorm(b) => b.forward(x, mode),
            Layer::Relu { cache } => {
                let y = x.mapv_into(|v| v.max(0.0));
                if mode == Mode::Train {
                    *cache = Some(relu_mask(&y));
                }
                y
            }
            Layer::MaxPool(p) => p.forward(standard(x), mode),
            Layer::GlobalAvgPool { cache } => {
                let (n, h, w, c) = x.dim();
                if mode == Mode::Train {
                    *cache = Some([n, h, w, c]);
                }
                let inv = 1.0 / (h * w) as f32;
                let mut y = Array4::<f32>::zeros((n, 1, 1, c));
                Zip::from(y.outer_iter_mut())
                    .and(x.outer_iter())
                    .for_each(|mut yo, xi| {
                        for row in xi.outer_iter() {
                            for px in row.outer_iter() {
                                for (o, v) in yo.iter_mut().zip(px) {
                                    *o += v * inv;
                                }
                            }
                        }
                    });
                y
            }
            Layer::Dropout(d) => d.forward(x, mode, rng),
            Layer::Linear(l) => l.forward(x, mode),
            Layer::Residual(r) => {
                let skip = if r.shortcut.is_empty() {
                    x.clone()
                } else {
                    forward_seq(&mut r.shortcut, x.clone(), mode, rng)
                };
                let mut y = forward_seq(&mut r.body, x, mode, rng);
                y += &skip;
                if r.relu_after {
                    y.mapv_inplace(|v| v.max(0.0));
                    if mode == Mode::Train {
                        r.cache = Some(relu_mask(&y));
                    }
                }
                y
            }
        }
    }

    /// Backward pass. Returns `None` only when `need_dx` is false and the
    /// layer could skip computing its input gradient.
    pub fn backward(&mut self, dy: Array4<f32>, need_dx: bool) -> Option<Array4<f32>> {
        match self {
            Layer::Conv(c) => c.backward(dy, need_dx),
            Layer::BatchNorm(b) => Some(b.backward(dy)),
            Layer::Relu { cache } => {
                let mask = cache.take().expect("backward without a training forward");
                Some(dy * &mask)
            }
            Layer::MaxPool(p) => Some(p.backward(dy)),
            Layer::GlobalAvgPool { cache } => {
                let [n, h, w, c] = cache.take().expect("backward without a training forward");
                let inv = 1.0 / (h * w) as f32;
                let dy = standard(dy);
                let mut dx = Array4::<f32>::zeros((n, h, w, c));
                for (mut xi, g) in dx.outer_iter_mut().zip(dy.outer_iter()) {
                    let g = g.into_shape_with_order(c).expect("1x1 spatial");
                    for mut row in xi.outer_iter_mut() {
                        for mut px in row.outer_iter_mut() {
                            px.zip_mut_with(&g, |d, &v| *d = v * inv);
                        }
                    }
                }
                Some(dx)
            }
            Layer::Dropout(d) => Some(d.backward(dy)),
            Layer::Linear(l) => l.backward(dy, need_dx),
            Layer::Residual(r) => {
                let dy = match r.cache.take() {
                    Some(mask) => dy * &mask,
                    None => dy,
                };
                let d_skip = if r.shortcut.is_empty() {
                    dy.clone()
                } else {
                    backward_seq(&mut r.shortcut, dy.clone(), true).expect("requested")
                };
                let mut dx = backward_seq(&mut r.body, dy, true).expect("requested");
                dx += &d_skip;
                Some(dx)
            }
        }
    }

    /// Visits (parameter, gradient) pairs in a fixed order.
    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut [f32], &mut [f32])) {
        match self {
            Layer::Conv(c) => {
                f(
                    c.w.as_slice_mut().expect("owned"),
                    c.gw.as_slice_mut().expect("owned"),
                );
                if let (Some(b), Some(gb)) = (&mut c.b, &mut c.gb) {
                    f(b.as_slice_mut().expect("owned"), gb.as_slice_mut().expect("owned"));
                }
            }
            Layer::BatchNorm(b) => {
                f(
                    b.gamma.as_slice_mut().expect("owned"),
                    b.g_gamma.as_slice_mut().expect("owned"),
                );
                f(
                    b.beta.as_slice_mut().expect("owned"),
                    b.g_beta.as_slice_mut().expect("owned"),
                );
            }
            Layer::Linear(l) => {
                f(
                    l.w.as_slice_mut().expect("owned"),
                    l.gw.as_slice_mut().expect("owned"),
                );
                f(
                    l.b.as_slice_mut().expect("owned"),
                    l.gb.as_slice_mut().expect("owned"),
                );
            }
            Layer::Residual(r) => {
                for l in r.body.iter_mut().chain(r.shortcut.iter_mut()) {
                    l.visit_params(f);
                }
            }
            Layer::Relu { .. }
            | Layer::MaxPool(_)
            | Layer::GlobalAvgPool { .. }
            | Layer::Dropout(_) => {}
        }
    }

    /// Visits non-trainable state (batch-norm running statistics).
    pub fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut [f32])) {
        match self {
            Layer::BatchNorm(b) => {
                f(b.running_mean.as_slice_mut().expect("owned"));
                f(b.running_var.as_slice_mut().expect("owned"));
            }
            Layer::Residual(r) => {
                for l in r.body.iter_mut().chain(r.shortcut.iter_mut()) {
                    l.visit_buffers(f);
                }
            }
            _ => {}
        }
    }

    pub fn reset_running_stats(&mut self) {
        match self {
            Layer::BatchNorm(b) => b.reset_running_stats(),
            Layer::Residual(r) => {
                for l in r.body.iter_mut().chain(r.shortcut.iter_mut()) {
                    l.reset_running_stats();
                }
            }
            _ => {}
        }
    }

    pub fn has_dropout(&self) -> bool {
        match self {
            Layer::Dropout(_) => true,
            Layer::Residual(r) => r.body.iter().chain(&r.shortcut).any(Layer::has_dropout),
            _ => false,
        }
    }

    /// Drops every cached activation.
    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv(c) => c.cache = None,
            Layer::BatchNorm(b) => b.cache = None,
            Layer::Relu { cache } => *cache = None,
            Layer::MaxPool(p) => p.cache = None,
            Layer::GlobalAvgPool { cache } => *cache = None,
            Layer::Dropout(d) => d.cache = None,
            Layer::Linear(l) => l.cache = None,
            Layer::Residual(r) => {
                r.cache = None;
                for l in r.body.iter_mut().chain(r.shortcut.iter_mut()) {
                    l.clear_cache();
                }
            }
        }
    }
}
