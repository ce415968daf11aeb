//! Dataset splits, initial labeled folds and long-tailed pools.

use std::collections::BTreeSet;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::index_set::check_sorted_unique;

/// Where the test split comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TestSpec {
    /// Dataset-provided test indices; val is carved from the rest.
    Provided(Vec<usize>),
    /// Carve this fraction of all samples as test.
    Fraction(f64),
}

/// Train/val/test split before any labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn round_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Splits `0..n_total` into disjoint train, val and test sets.
///
/// With a carved test split both fractions refer to `n_total`; with a
/// provided test split `val_fraction` refers to the remaining pool.
pub fn split_dataset<R: Rng + ?Sized>(
    n_total: usize,
    val_fraction: f64,
    test: &TestSpec,
    rng: &mut R,
) -> Result<DataSplit> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Partition(format!(
            "val fraction must lie in (0,1), got {val_fraction}"
        )));
    }
    let (mut pool, test_set, n_val): (Vec<usize>, Vec<usize>, usize) = match test {
        TestSpec::Provided(t) => {
            check_sorted_unique(t)?;
            if t.last().is_some_and(|&i| i >= n_total) {
                return Err(Error::Partition("provided test index out of range".into()));
            }
            let test_lookup: BTreeSet<usize> = t.iter().copied().collect();
            let pool: Vec<usize> = (0..n_total).filter(|i| !test_lookup.contains(i)).collect();
            let n_val = round_count(val_fraction, pool.len());
            (pool, Vec::new(), n_val)
        }
        TestSpec::Fraction(f) => {
            if !(*f > 0.0 && *f < 1.0) {
                return Err(Error::Partition(format!(
                    "test fraction must lie in (0,1), got {f}"
                )));
            }
            if f + val_fraction >= 1.0 {
                return Err(Error::Partition(format!(
                    "val fraction {val_fraction} + test fraction {f} must be < 1"
                )));
            }
            (
                (0..n_total).collect(),
                Vec::new(),
                round_count(val_fraction, n_total),
            )
        }
    };
    pool.shuffle(rng);
    let n_test = match test {
        TestSpec::Fraction(f) => round_count(*f, n_total),
        TestSpec::Provided(_) => 0,
    };
    if n_test + n_val >= pool.len() {
        return Err(Error::Partition(format!(
            "{n_test} test + {n_val} val samples leave no training data out of {}",
            pool.len()
        )));
    }
    let mut test_set = if let TestSpec::Provided(t) = test {
        t.clone()
    } else {
        let mut t = test_set;
        t.extend_from_slice(&pool[..n_test]);
        t
    };
    let mut val = pool[n_test..n_test + n_val].to_vec();
    let mut train = pool[n_test + n_val..].to_vec();
    test_set.sort_unstable();
    val.sort_unstable();
    train.sort_unstable();
    Ok(DataSplit {
        train,
        val,
        test: test_set,
    })
}

/// Draws `fold_count` independent labeled sets of `fold_size` unique
/// indices from `train`. Different folds may overlap.
pub fn draw_initial_folds<R: Rng + ?Sized>(
    train: &[usize],
    fold_count: usize,
    fold_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if fold_size > train.len() {
        return Err(Error::Partition(format!(
            "fold size {fold_size} exceeds the {} training samples",
            train.len()
        )));
    }
    Ok((0..fold_count)
        .map(|_| {
            let mut fold: Vec<usize> = sample_indices(rng, train.len(), fold_size)
                .into_iter()
                .map(|i| train[i])
                .collect();
            fold.sort_unstable();
            fold
        })
        .collect())
}

/// Labeled/unlabeled state of one run over a fixed split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionState {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl PartitionState {
    pub fn new(split: DataSplit, labeled: Vec<usize>) -> Result<Self> {
        check_sorted_unique(&labeled)?;
        let train_set: BTreeSet<usize> = split.train.iter().copied().collect();
        if let Some(i) = labeled.iter().find(|i| !train_set.contains(i)) {
            return Err(Error::Partition(format!(
                "labeled index {i} is not in the train split"
            )));
        }
        let labeled_set: BTreeSet<usize> = labeled.iter().copied().collect();
        let unlabeled = split
            .train
            .iter()
            .copied()
            .filter(|i| !labeled_set.contains(i))
            .collect();
        let state = PartitionState {
            train: split.train,
            val: split.val,
            test: split.test,
            labeled,
            unlabeled,
        };
        state.check_invariants()?;
        Ok(state)
    }

    /// Moves `new` from the unlabeled to the labeled pool.
    pub fn annotate(&mut self, new: &[usize]) -> Result<()> {
        check_sorted_unique(new)?;
        let unlabeled: BTreeSet<usize> = self.unlabeled.iter().copied().collect();
        if let Some(i) = new.iter().find(|i| !unlabeled.contains(i)) {
            return Err(Error::Partition(format!(
                "index {i} is not in the unlabeled pool"
            )));
        }
        let added: BTreeSet<usize> = new.iter().copied().collect();
        self.unlabeled.retain(|i| !added.contains(i));
        let mut labeled: BTreeSet<usize> = self.labeled.iter().copied().collect();
        labeled.extend(new);
        self.labeled = labeled.into_iter().collect();
        self.check_invariants()
    }

    /// Disjoint train/val/test, and labeled/unlabeled partition train.
    pub fn check_invariants(&self) -> Result<()> {
        for (name, set) in [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
        ] {
            check_sorted_unique(set)
                .map_err(|e| Error::Partition(format!("{name} set: {e}")))?;
        }
        let disjoint = |a: &[usize], b: &[usize]| {
            let a: BTreeSet<_> = a.iter().collect();
            b.iter().all(|i| !a.contains(i))
        };
        if !disjoint(&self.train, &self.val)
            || !disjoint(&self.train, &self.test)
            || !disjoint(&self.val, &self.test)
        {
            return Err(Error::Partition("train/val/test are not disjoint".into()));
        }
        if !disjoint(&self.labeled, &self.unlabeled) {
            return Err(Error::Partition("labeled and unlabeled overlap".into()));
        }
        if self.labeled.len() + self.unlabeled.len() != self.train.len() {
            return Err(Error::Partition(
                "labeled and unlabeled do not cover train".into(),
            ));
        }
        let mut union: Vec<usize> = self
            .labeled
            .iter()
            .chain(&self.unlabeled)
            .copied()
            .collect();
        union.sort_unstable();
        if union != self.train {
            return Err(Error::Partition(
                "labeled and unlabeled do not cover train".into(),
            ));
        }
        Ok(())
    }
}

/// Long-tailed class distribution `a + b * exp(alpha * (i + 0.5))`,
/// `i = 1..=C`, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceProfile {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    /// Unnormalized per-class sample counts; entry 0 is class index 1.
    pub raw_counts: Vec<f64>,
    pub class_probabilities: Vec<f64>,
}

pub fn imbalance_profile(num_classes: usize, a: f64, b: f64, alpha: f64) -> Result<ImbalanceProfile> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument("imbalance profile needs C >= 1".into()));
    }
    let raw: Vec<f64> = (1..=num_classes)
        .map(|i| a + b * (alpha * (i as f64 + 0.5)).exp())
        .collect();
    if raw.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "imbalance parameters a={a}, b={b}, alpha={alpha} give negative or non-finite counts"
        )));
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidArgument("imbalance counts sum to zero".into()));
    }
    Ok(ImbalanceProfile {
        a,
        b,
        alpha,
        class_probabilities: raw.iter().map(|r| r / total).collect(),
        raw_counts: raw,
    })
}

impl ImbalanceProfile {
    /// Profile from explicit probabilities (e.g. one-hot), normalized.
    pub fn from_probabilities(p: Vec<f64>) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < 0.0) || total <= 0.0 {
            return Err(Error::InvalidArgument(
                "class probabilities must be non-negative with positive sum".into(),
            ));
        }
        Ok(ImbalanceProfile {
            a: f64::NAN,
            b: f64::NAN,
            alpha: f64::NAN,
            raw_counts: p.clone(),
            class_probabilities: p.iter().map(|x| x / total).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_probabilities.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImbalancedSample {
    pub indices: Vec<usize>,
    /// One message per class that ran out of samples.
    pub fallbacks: Vec<String>,
}

/// Draws `total_size` indices whose classes follow `profile`: each draw
/// picks a class from the profile (renormalized over classes that still
/// have samples) and takes a uniformly random unused index of that class.
pub fn sample_imbalanced<R: Rng + ?Sized>(
    labels_by_index: &[(usize, usize)],
    profile: &ImbalanceProfile,
    total_size: usize,
    rng: &mut R,
) -> Result<ImbalancedSample> {
    if total_size > labels_by_index.len() {
        return Err(Error::Partition(format!(
            "requested {total_size} samples from a pool of {}",
            labels_by_index.len()
        )));
    }
    let c = profile.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    let mut sorted = labels_by_index.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Partition(format!("index {} listed twice", w[0].0)));
        }
    }
    for &(index, label) in &sorted {
        if label >= c {
            return Err(Error::Partition(format!(
                "label {label} outside the {c}-class profile"
            )));
        }
        by_class[label].push(index);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.is_empty() && profile.class_probabilities[class] > 0.0 {
            return Err(Error::Partition(format!(
                "class {class} has no available samples"
            )));
        }
    }
    for members in by_class.iter_mut() {
        members.shuffle(rng);
    }
    let mut taken = vec![0usize; c];
    let mut fallbacks = Vec::new();
    let mut out = Vec::with_capacity(total_size);
    for draw in 0..total_size {
        let mass: f64 = (0..c)
            .filter(|&k| taken[k] < by_class[k].len())
            .map(|k| profile.class_probabilities[k])
            .sum();
        if mass <= 0.0 {
            return Err(Error::Partition(format!(
                "every class with positive probability is exhausted after {draw} draws"
            )));
        }
        let mut u = rng.gen::<f64>() * mass;
        let mut chosen = None;
        for k in 0..c {
            if taken[k] >= by_class[k].len() || profile.class_probabilities[k] <= 0.0 {
                continue;
            }
            chosen = Some(k);
            u -= profile.class_probabilities[k];
            if u < 0.0 {
                break;
            }
        }
        let k = chosen.expect("positive mass implies a candidate class");
        out.push(by_class[k][taken[k]]);
        taken[k] += 1;
        if taken[k] == by_class[k].len() && profile.class_probabilities[k] > 0.0 {
            fallbacks.push(format!(
                "class {k} exhausted after {} draws; renormalizing over remaining classes",
                draw + 1
            ));
        }
    }
    out.sort_unstable();
    Ok(ImbalancedSample {
        indices: out,
        fallbacks,
    })
}
