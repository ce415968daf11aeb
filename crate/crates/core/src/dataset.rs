//! In-memory image datasets and their loaders.
//!
//! Images are stored row-major as height x width x channels `f32` values in
//! `[0, 1]` (raw bytes divided by 255). A dataset may carry a provided test
//! split, which always occupies the tail of the index space.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{DatasetId, ExperimentConfig, SyntheticSpec};
use crate::error::{Error, Result};
use crate::rng::{partition_streams, substream, StreamLabel};

/// Environment variable naming the directory that holds dataset files.
pub const DATA_ROOT_ENV: &str = "AL_DATA_ROOT";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub num_classes: usize,
    pixels: Vec<f32>,
    labels: Vec<usize>,
    provided_test: Option<Range<usize>>,
    /// Index of each sample in the source dataset before any subsetting.
    origin: Vec<usize>,
}

impl Dataset {
    pub fn from_parts(
        name: impl Into<String>,
        (height, width, channels): (usize, usize, usize),
        num_classes: usize,
        pixels: Vec<f32>,
        labels: Vec<usize>,
        provided_test: Option<Range<usize>>,
    ) -> Result<Self> {
        let n = labels.len();
        if pixels.len() != n * height * width * channels {
            return Err(Error::Dataset(format!(
                "pixel buffer has {} values, expected {n} x {height} x {width} x {channels}",
                pixels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if let Some(r) = &provided_test {
            if r.end != n || r.start > r.end {
                return Err(Error::Dataset(format!(
                    "provided test range {r:?} must end at the dataset size {n}"
                )));
            }
        }
        Ok(Dataset {
            name: name.into(),
            height,
            width,
            channels,
            num_classes,
            pixels,
            labels,
            provided_test,
            origin: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let d = self.image_len();
        &self.pixels[index * d..(index + 1) * d]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provided_test(&self) -> Option<Range<usize>> {
        self.provided_test.clone()
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// Errors on the first index outside the dataset.
    pub fn check_indices(&self, indices: &[usize]) -> Result<()> {
        match indices.iter().find(|&&i| i >= self.len()) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "index {i} out of range for dataset `{}` of size {}",
                self.name,
                self.len()
            ))),
            None => Ok(()),
        }
    }

    /// A new dataset made of `pool` followed by `test` (as provided test
    /// split), preserving origin indices.
    pub fn select(&self, pool: &[usize], test: Option<&[usize]>) -> Result<Dataset> {
        self.check_indices(pool)?;
        let provided_test = test.map(|t| pool.len()..pool.len() + t.len());
        let test = test.unwrap_or(&[]);
        self.check_indices(test)?;
        let d = self.image_len();
        let total = pool.len() + test.len();
        let mut pixels = Vec::with_capacity(total * d);
        let mut labels = Vec::with_capacity(total);
        let mut origin = Vec::with_capacity(total);
        for &i in pool.iter().chain(test) {
            pixels.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
            origin.push(self.origin[i]);
        }
        Ok(Dataset {
            name: self.name.clone(),
            height: self.height,
            width: self.width,
            channels: self.channels,
            num_classes: self.num_classes,
            pixels,
            labels,
            provided_test,
            origin,
        })
    }
}

/// Directory holding dataset files: `$AL_DATA_ROOT`, else `./data`.
pub fn data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Builds the dataset described by `config`, applying subsetting.
pub fn load_dataset(config: &ExperimentConfig, root: &Path) -> Result<Dataset> {
    let full = match config.dataset_id {
        DatasetId::Synthetic => {
            let spec = config.dataset.synthetic.as_ref().ok_or_else(|| {
                Error::Dataset("synthetic dataset requires dataset.synthetic".into())
            })?;
            synthetic_blobs(spec)?
        }
        DatasetId::Cifar10 => load_cifar10(root)?,
        DatasetId::Cifar100 => load_cifar100(root)?,
    };
    let opts = &config.dataset;
    if opts.subset_size.is_none() && opts.test_subset_size.is_none() {
        return Ok(full);
    }
    let mut rng = partition_streams::subset(config.partition_seed);
    let (pool_range, test_range) = match full.provided_test() {
        Some(t) => (0..t.start, Some(t)),
        None => (0..full.len(), None),
    };
    let pick = |range: Range<usize>, size: Option<usize>, rng: &mut crate::rng::StreamRng| {
        let n = range.len();
        match size {
            Some(s) if s > n => Err(Error::Dataset(format!(
                "subset of {s} requested from {n} samples"
            ))),
            Some(s) => {
                let mut v: Vec<usize> = sample_indices(rng, n, s)
                    .into_iter()
                    .map(|i| range.start + i)
                    .collect();
                v.sort_unstable();
                Ok(v)
            }
            None => Ok(range.collect()),
        }
    };
    let pool = pick(pool_range, opts.subset_size, &mut rng)?;
    let test = match test_range {
        Some(r) => Some(pick(r, opts.test_subset_size, &mut rng)?),
        None => None,
    };
    full.select(&pool, test.as_deref())
}

const CIFAR_SIDE: usize = 32;
const CIFAR_PIXELS: usize = CIFAR_SIDE * CIFAR_SIDE * 3;

/// First candidate directory under `root` that contains `marker`.
fn find_with(root: &Path, candidates: &[&str], marker: &str) -> Option<PathBuf> {
    candidates
        .iter()
        .map(|c| root.join(c))
        .find(|p| p.join(marker).is_file())
}

/// Reads CIFAR binary records (`label_bytes` leading label bytes, the last
/// of which is used, then 3072 planar RGB bytes).
fn read_cifar_records(
    path: &Path,
    label_bytes: usize,
    pixels: &mut Vec<f32>,
    labels: &mut Vec<usize>,
) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let record = label_bytes + CIFAR_PIXELS;
    if bytes.len() % record != 0 {
        return Err(Error::Dataset(format!(
            "{}: size {} is not a multiple of the record size {record}",
            path.display(),
            bytes.len()
        )));
    }
    let plane = CIFAR_SIDE * CIFAR_SIDE;
    for rec in bytes.chunks_exact(record) {
        labels.push(rec[label_bytes - 1] as usize);
        let img = &rec[label_bytes..];
        for p in 0..plane {
            for c in 0..3 {
                pixels.push(img[c * plane + p] as f32 / 255.0);
            }
        }
    }
    Ok(())
}

/// CIFAR-10 binary version (`cifar-10-batches-bin/`) under `root`.
pub fn load_cifar10(root: &Path) -> Result<Dataset> {
    let dir = find_with(root, &["cifar-10-batches-bin", "cifar10", "."], "data_batch_1.bin")
        .ok_or_else(|| {
            Error::Dataset(format!(
                "CIFAR-10 binary batches not found under {} (set {DATA_ROOT_ENV})",
                root.display()
            ))
        })?;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for b in 1..=5 {
        read_cifar_records(&dir.join(format!("data_batch_{b}.bin")), 1, &mut pixels, &mut labels)?;
    }
    let n_train = labels.len();
    read_cifar_records(&dir.join("test_batch.bin"), 1, &mut pixels, &mut labels)?;
    let n = labels.len();
    Dataset::from_parts("cifar10", (32, 32, 3), 10, pixels, labels, Some(n_train..n))
}

/// CIFAR-100 binary version (`cifar-100-binary/`), fine labels.
pub fn load_cifar100(root: &Path) -> Result<Dataset> {
    let dir = find_with(root, &["cifar-100-binary", "cifar100", "."], "train.bin")
        .ok_or_else(|| {
            Error::Dataset(format!(
                "CIFAR-100 binary files not found under {} (set {DATA_ROOT_ENV})",
                root.display()
            ))
        })?;
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    read_cifar_records(&dir.join("train.bin"), 2, &mut pixels, &mut labels)?;
    let n_train = labels.len();
    read_cifar_records(&dir.join("test.bin"), 2, &mut pixels, &mut labels)?;
    let n = labels.len();
    Dataset::from_parts("cifar100", (32, 32, 3), 100, pixels, labels, Some(n_train..n))
}

/// Class-conditional blob images: every class owns a template of three
/// coloured Gaussian blobs; samples are shifted, rescaled and noisy copies.
/// Labels cycle through the classes, so the dataset is balanced.
pub fn synthetic_blobs(spec: &SyntheticSpec) -> Result<Dataset> {
    let (side, ch, c) = (spec.side, spec.channels, spec.num_classes);
    let mut rng = substream(spec.seed, StreamLabel::Fold, 1 << 40);
    let mut templates = vec![vec![0f32; side * side * ch]; c];
    for t in templates.iter_mut() {
        for _ in 0..3 {
            let cx = rng.gen_range(0.15..0.85) * side as f64;
            let cy = rng.gen_range(0.15..0.85) * side as f64;
            let sigma = rng.gen_range(0.1..0.25) * side as f64;
            let colour: Vec<f64> = (0..ch).map(|_| rng.gen_range(-0.5..0.5)).collect();
            for y in 0..side {
                for x in 0..side {
                    let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                    let g = (-d2 / (2.0 * sigma * sigma)).exp();
                    for k in 0..ch {
                        t[(y * side + x) * ch + k] += (colour[k] * g) as f32;
                    }
                }
            }
        }
    }
    let noise = Normal::new(0.0, spec.noise.max(0.0))
        .map_err(|e| Error::Dataset(format!("noise: {e}")))?;
    let mut pixels = Vec::with_capacity(spec.num_samples * side * side * ch);
    let mut labels = Vec::with_capacity(spec.num_samples);
    for i in 0..spec.num_samples {
        let class = i % c;
        let dx = rng.gen_range(-2i64..=2);
        let dy = rng.gen_range(-2i64..=2);
        let scale = rng.gen_range(0.7..1.3);
        let t = &templates[class];
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                let sy = (y - dy).clamp(0, side as i64 - 1) as usize;
                let sx = (x - dx).clamp(0, side as i64 - 1) as usize;
                for k in 0..ch {
                    let v = 0.5 + scale * t[(sy * side + sx) * ch + k] as f64 + noise.sample(&mut rng);
                    pixels.push(v.clamp(0.0, 1.0) as f32);
                }
            }
        }
        labels.push(class);
    }
    Dataset::from_parts("synthetic", (side, side, ch), c, pixels, labels, None)
}

/// Two classes separable by mean brightness: class 0 images are centred at
/// 0.3, class 1 at 0.7, with uniform noise of half-width 0.15.
pub fn separable_two_class(num_samples: usize, side: usize, seed: u64) -> Result<Dataset> {
    let mut rng = substream(seed, StreamLabel::Fold, 1 << 41);
    let d = side * side * 3;
    let mut pixels = Vec::with_capacity(num_samples * d);
    let mut labels = Vec::with_capacity(num_samples);
    for i in 0..num_samples {
        let class = i % 2;
        let centre = if class == 0 { 0.3 } else { 0.7 };
        for _ in 0..d {
            pixels.push(centre + rng.gen_range(-0.15f32..0.15));
        }
        labels.push(class);
    }
    Dataset::from_parts("separable", (side, side, 3), 2, pixels, labels, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SyntheticSpec {
        SyntheticSpec {
            num_samples: 40,
            num_classes: 4,
            side: 8,
            channels: 3,
            noise: 0.1,
            seed: 5,
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let a = synthetic_blobs(&spec()).unwrap();
        let b = synthetic_blobs(&spec()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 40);
        for c in 0..4 {
            assert_eq!(a.labels().iter().filter(|&&l| l == c).count(), 10);
        }
        assert!(a.image(3).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn select_keeps_origin_and_test_tail() {
        let a = synthetic_blobs(&spec()).unwrap();
        let s = a.select(&[3, 7, 9], Some(&[20, 21])).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s.origin(), &[3, 7, 9, 20, 21]);
        assert_eq!(s.provided_test(), Some(3..5));
        assert_eq!(s.image(1), a.image(7));
        assert_eq!(s.label(4), a.label(21));
    }

    #[test]
    fn cifar_records_parse() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = vec![7u8];
        rec.extend((0..CIFAR_PIXELS).map(|i| (i % 251) as u8));
        let p = dir.path().join("b.bin");
        fs::write(&p, [rec.clone(), rec].concat()).unwrap();
        let (mut px, mut lb) = (Vec::new(), Vec::new());
        read_cifar_records(&p, 1, &mut px, &mut lb).unwrap();
        assert_eq!(lb, vec![7, 7]);
        // pixel (0,0): R at plane offset 0, G at 1024, B at 2048
        assert_eq!(px[0], 0.0);
        assert_eq!(px[1], (1024 % 251) as f32 / 255.0);
        assert_eq!(px[2], (2048 % 251) as f32 / 255.0);
    }

    #[test]
    fn missing_cifar_is_a_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_cifar10(dir.path()), Err(Error::Dataset(_))));
    }

    #[test]
    fn bad_parts_rejected() {
        assert!(Dataset::from_parts("x", (2, 2, 1), 2, vec![0.0; 7], vec![0, 1], None).is_err());
        assert!(Dataset::from_parts("x", (2, 2, 1), 2, vec![0.0; 8], vec![0, 2], None).is_err());
    }
}
