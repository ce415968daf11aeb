//! Training-time image augmentation: RandAugment plus flips and crops.
//!
//! Images are HWC `f32` in [0, 1]. Magnitude index `m` in `0..=10` maps
//! linearly from an op's identity point (m = 0) to its extreme value
//! (m = 10). Ops with a symmetric range draw a random sign per application.

use rand::Rng;

use albench_core::RA_MAX_MAGNITUDE;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width * channels {
            return Err(ModelError::Shape(format!(
                "{} pixels for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            pixels,
        })
    }

    fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Resamples with nearest-neighbour lookups; `src(y, x)` gives the
    /// source coordinate for an output pixel. Out-of-range sources read 0.
    fn remap<F: Fn(f32, f32) -> (f32, f32)>(&mut self, src: F) {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![0.0f32; self.pixels.len()];
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = src(y as f32, x as f32);
                let (sy, sx) = (sy.round(), sx.round());
                if sy < 0.0 || sx < 0.0 || sy >= h as f32 || sx >= w as f32 {
                    continue;
                }
                let (sy, sx) = (sy as usize, sx as usize);
                for ch in 0..c {
                    out[(y * w + x) * c + ch] = self.at(sy, sx, ch);
                }
            }
        }
        self.pixels = out;
    }

    fn clamp(&mut self) {
        self.pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
    }

    fn grayscale(&self) -> Vec<f32> {
        if self.channels == 3 {
            self.pixels
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect()
        } else {
            self.pixels.chunks_exact(self.channels).map(|p| p[0]).collect()
        }
    }

    /// `out = base + factor * (self - base)`, clamped.
    fn blend(&mut self, base: &[f32], factor: f32) {
        for (p, b) in self.pixels.iter_mut().zip(base) {
            *p = b + factor * (*p - b);
        }
        self.clamp();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RaOp {
    Identity,
    AutoContrast,
    Equalize,
    Rotate,
    Solarize,
    Color,
    Posterize,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
}

pub const RA_OPS: [RaOp; 14] = [
    RaOp::Identity,
    RaOp::AutoContrast,
    RaOp::Equalize,
    RaOp::Rotate,
    RaOp::Solarize,
    RaOp::Color,
    RaOp::Posterize,
    RaOp::Contrast,
    RaOp::Brightness,
    RaOp::Sharpness,
    RaOp::ShearX,
    RaOp::ShearY,
    RaOp::TranslateX,
    RaOp::TranslateY,
];

const MAX_ROTATE_DEG: f32 = 30.0;
const MAX_SHEAR: f32 = 0.3;
/// Translation extreme as a fraction of the image side (150 px of 331).
const MAX_TRANSLATE: f32 = 150.0 / 331.0;
const MAX_ENHANCE: f32 = 0.9;
const MAX_POSTERIZE_DROP: f32 = 4.0;

impl RaOp {
    fn signed(self) -> bool {
        matches!(
            self,
            RaOp::Rotate
                | RaOp::Color
                | RaOp::Contrast
                | RaOp::Brightness
                | RaOp::Sharpness
                | RaOp::ShearX
                | RaOp::ShearY
                | RaOp::TranslateX
                | RaOp::TranslateY
        )
    }

    /// Applies the op at `level` in [0, 1] (already signed for symmetric ops).
    pub fn apply(self, img: &mut Image, level: f32) {
        let (h, w) = (img.height as f32, img.width as f32);
        let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
        match self {
            RaOp::Identity => {}
            RaOp::AutoContrast => auto_contrast(img),
            RaOp::Equalize => equalize(img),
            RaOp::Rotate => {
                let theta = (level * MAX_ROTATE_DEG).to_radians();
                let (s, c) = theta.sin_cos();
                img.remap(|y, x| {
                    let (dy, dx) = (y - cy, x - cx);
                    (cy - s * dx + c * dy, cx + c * dx + s * dy)
                });
            }
            RaOp::Solarize => {
                let threshold = 1.0 - level;
                img.pixels
                    .iter_mut()
                    .filter(|p| **p >= threshold)
                    .for_each(|p| *p = 1.0 - *p);
            }
            RaOp::Color => {
                if img.channels == 3 {
                    let gray: Vec<f32> = img.grayscale().iter().flat_map(|&g| [g, g, g]).collect();
                    img.blend(&gray, 1.0 + level * MAX_ENHANCE);
                }
            }
            RaOp::Posterize => {
                let bits = 8 - (level * MAX_POSTERIZE_DROP).round() as u32;
                let mask = !((1u32 << (8 - bits)) - 1) & 0xff;
                img.pixels.iter_mut().for_each(|p| {
                    let v = (*p * 255.0).round().clamp(0.0, 255.0) as u32;
                    *p = (v & mask) as f32 / 255.0;
                });
            }
            RaOp::Contrast => {
                let gray = img.grayscale();
                let mean = gray.iter().sum::<f32>() / gray.len() as f32;
                let base = vec![mean; img.pixels.len()];
                img.blend(&base, 1.0 + level * MAX_ENHANCE);
            }
            RaOp::Brightness => {
                let base = vec![0.0; img.pixels.len()];
                img.blend(&base, 1.0 + level * MAX_ENHANCE);
            }
            RaOp::Sharpness => {
                let base = smoothed(img);
                img.blend(&base, 1.0 + level * MAX_ENHANCE);
            }
            RaOp::ShearX => {
                let s = level * MAX_SHEAR;
                img.remap(|y, x| (y, x + s * (y - cy)));
            }
            RaOp::ShearY => {
                let s = level * MAX_SHEAR;
                img.remap(|y, x| (y + s * (x - cx), x));
            }
            RaOp::TranslateX => {
                let t = level * MAX_TRANSLATE * w;
                img.remap(|y, x| (y, x - t));
            }
            RaOp::TranslateY => {
                let t = level * MAX_TRANSLATE * h;
                img.remap(|y, x| (y - t, x));
            }
        }
    }
}

fn auto_contrast(img: &mut Image) {
    let c = img.channels;
    for ch in 0..c {
        let values = img.pixels.iter().skip(ch).step_by(c);
        let (lo, hi) = values.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if hi > lo {
            let scale = 1.0 / (hi - lo);
            img.pixels
                .iter_mut()
                .skip(ch)
                .step_by(c)
                .for_each(|p| *p = (*p - lo) * scale);
        }
    }
}

/// Per-channel histogram equalization on 256 levels, following the usual
/// image-library lookup-table construction.
fn equalize(img: &mut Image) {
    let c = img.channels;
    for ch in 0..c {
        let mut hist = [0usize; 256];
        let level = |p: f32| (p * 255.0).round().clamp(0.0, 255.0) as usize;
        for &p in img.pixels.iter().skip(ch).step_by(c) {
            hist[level(p)] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&h| h > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let total: usize = hist.iter().sum();
        let step = (total - nonzero[nonzero.len() - 1]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0f32; 256];
        let mut n = step / 2;
        for (i, h) in hist.iter().enumerate() {
            lut[i] = ((n / step).min(255)) as f32 / 255.0;
            n += h;
        }
        img.pixels
            .iter_mut()
            .skip(ch)
            .step_by(c)
            .for_each(|p| *p = lut[level(*p)]);
    }
}

/// 3x3 smoothing with weights 1 around a centre weight of 5; the border is
/// left unchanged.
fn smoothed(img: &Image) -> Vec<f32> {
    let (h, w, c) = (img.height, img.width, img.channels);
    let mut out = img.pixels.clone();
    if h < 3 || w < 3 {
        return out;
    }
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            for ch in 0..c {
                let mut s = 4.0 * img.at(y, x, ch);
                for dy in 0..3 {
                    for dx in 0..3 {
                        s += img.at(y + dy - 1, x + dx - 1, ch);
                    }
                }
                out[(y * w + x) * c + ch] = s / 13.0;
            }
        }
    }
    out
}

/// RandAugment policy: `n` ops drawn uniformly with replacement, each at
/// shared magnitude `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandAugment {
    pub n: usize,
    pub m: usize,
}

impl RandAugment {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 {
            return Err(ModelError::InvalidInput("RandAugment needs n >= 1".into()));
        }
        if m > RA_MAX_MAGNITUDE {
            return Err(ModelError::InvalidInput(format!(
                "RandAugment magnitude {m} outside 0..={RA_MAX_MAGNITUDE}"
            )));
        }
        Ok(RandAugment { n, m })
    }

    pub fn draw_ops<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<RaOp> {
        (0..self.n)
            .map(|_| RA_OPS[rng.gen_range(0..RA_OPS.len())])
            .collect()
    }

    /// Applies `ops` in order; symmetric ops draw their sign from `rng`.
    pub fn apply_ops<R: Rng + ?Sized>(&self, img: &mut Image, ops: &[RaOp], rng: &mut R) {
        let level = self.m as f32 / RA_MAX_MAGNITUDE as f32;
        for &op in ops {
            let signed = if op.signed() && rng.gen::<bool>() {
                -level
            } else {
                level
            };
            op.apply(img, signed);
        }
    }

    pub fn apply<R: Rng + ?Sized>(&self, img: &mut Image, rng: &mut R) {
        let ops = self.draw_ops(rng);
        self.apply_ops(img, &ops, rng);
    }
}

pub fn hflip(img: &mut Image) {
    let (w, c) = (img.width, img.channels);
    for row in img.pixels.chunks_exact_mut(w * c) {
        for x in 0..w / 2 {
            for ch in 0..c {
                row.swap(x * c + ch, (w - 1 - x) * c + ch);
            }
        }
    }
}

/// Random crop of the original size from the image zero-padded by `pad`.
pub fn random_crop<R: Rng + ?Sized>(img: &mut Image, pad: usize, rng: &mut R) {
    if pad == 0 {
        return;
    }
    let oy = rng.gen_range(0..=2 * pad) as f32 - pad as f32;
    let ox = rng.gen_range(0..=2 * pad) as f32 - pad as f32;
    img.remap(|y, x| (y + oy, x + ox));
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn textured(side: usize) -> Image {
        let pixels = (0..side * side * 3)
            .map(|i| ((i * 37 + i / 3 * 11) % 97) as f32 / 96.0)
            .collect();
        Image::new(side, side, 3, pixels).unwrap()
    }

    fn low_contrast(side: usize) -> Image {
        let mut img = textured(side);
        for p in &mut img.pixels {
            *p = 0.3 + 0.4 * *p;
        }
        img
    }

    #[test]
    fn forced_identity_is_pixel_exact() {
        let ra = RandAugment::new(1, 9).unwrap();
        let mut img = textured(8);
        let before = img.clone();
        ra.apply_ops(&mut img, &[RaOp::Identity], &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(img, before);
    }

    #[test]
    fn zero_magnitude_geometric_ops_are_identity() {
        let ra = RandAugment::new(1, 0).unwrap();
        for op in [
            RaOp::Rotate,
            RaOp::ShearX,
            RaOp::ShearY,
            RaOp::TranslateX,
            RaOp::TranslateY,
            RaOp::Brightness,
            RaOp::Color,
            RaOp::Contrast,
            RaOp::Posterize,
        ] {
            let mut img = textured(8);
            let before = img.clone();
            ra.apply_ops(&mut img, &[op], &mut ChaCha8Rng::seed_from_u64(1));
            for (a, b) in img.pixels.iter().zip(&before.pixels) {
                assert!((a - b).abs() < 2.0 / 255.0, "{op:?}");
            }
        }
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let ra = RandAugment::new(2, 5).unwrap();
        let mut a = textured(8);
        let mut b = textured(8);
        ra.apply(&mut a, &mut ChaCha8Rng::seed_from_u64(4));
        ra.apply(&mut b, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn second_op_changes_the_result() {
        let ra = RandAugment::new(2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..200 {
            let ops = ra.draw_ops(&mut rng);
            // Idempotent repeats, and auto-contrast after equalization (which
            // already spans the full range), legitimately change nothing.
            let no_op = ops[1] == RaOp::Identity
                || (ops[0] == ops[1] && matches!(ops[1], RaOp::Equalize | RaOp::Posterize | RaOp::AutoContrast))
                || (ops[0] == RaOp::Equalize && ops[1] == RaOp::AutoContrast);
            if no_op {
                continue;
            }
            // Large enough for a non-trivial equalization table, and low
            // contrast so auto-contrast has work to do.
            let mut one = low_contrast(32);
            let mut two = low_contrast(32);
            ra.apply_ops(&mut one, &ops[..1], &mut ChaCha8Rng::seed_from_u64(9));
            ra.apply_ops(&mut two, &ops, &mut ChaCha8Rng::seed_from_u64(9));
            assert_ne!(one, two, "{ops:?}");
            checked += 1;
        }
        assert!(checked > 30);
    }

    #[test]
    fn output_shape_and_range_preserved() {
        let ra = RandAugment::new(3, 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let mut img = textured(8);
            ra.apply(&mut img, &mut rng);
            assert_eq!(img.pixels.len(), 8 * 8 * 3);
            assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn magnitude_out_of_range_rejected() {
        assert!(RandAugment::new(1, RA_MAX_MAGNITUDE + 1).is_err());
        assert!(RandAugment::new(0, 5).is_err());
    }

    #[test]
    fn op_draws_are_uniform() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let ra = RandAugment::new(1, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 14];
        let draws = 10_000;
        for _ in 0..draws {
            let op = ra.draw_ops(&mut rng)[0];
            counts[RA_OPS.iter().position(|&o| o == op).unwrap()] += 1;
        }
        let expected = draws as f64 / 14.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = ChiSquared::new(13.0).unwrap().sf(stat);
        assert!(p > 0.01, "chi-square {stat}, p {p}");
    }

    #[test]
    fn flip_twice_is_identity() {
        let mut img = textured(5);
        let before = img.clone();
        hflip(&mut img);
        assert_ne!(img, before);
        hflip(&mut img);
        assert_eq!(img, before);
    }

    #[test]
    fn solarize_inverts_bright_pixels() {
        let mut img = Image::new(1, 2, 1, vec![0.2, 0.9]).unwrap();
        RaOp::Solarize.apply(&mut img, 0.5);
        assert_eq!(img.pixels[0], 0.2);
        assert!((img.pixels[1] - 0.1).abs() < 1e-6);
    }
}
