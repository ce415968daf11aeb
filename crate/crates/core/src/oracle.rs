//! Simulated annotation oracle with controlled label noise.

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::NoiseMode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSpec {
    pub noise_fraction: f64,
    pub mode: NoiseMode,
    pub num_classes: usize,
}

impl OracleSpec {
    pub fn clean(num_classes: usize) -> Self {
        OracleSpec {
            noise_fraction: 0.0,
            mode: NoiseMode::Reassign,
            num_classes,
        }
    }

    /// Number of corrupted labels in a batch of `k`: `round(p * k)`.
    pub fn corrupted_count(&self, k: usize) -> usize {
        (self.noise_fraction * k as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub index: usize,
    pub label: usize,
    /// Whether the oracle picked this sample for corruption. In shuffle
    /// mode a picked sample can keep its true label.
    pub corrupted: bool,
}

/// Labels `indices` from `truth`. `round(p * k)` samples, chosen uniformly
/// without replacement, are corrupted: in reassign mode each gets a
/// uniformly drawn wrong class, in shuffle mode their labels are permuted
/// among themselves.
pub fn annotate<R: Rng + ?Sized>(
    indices: &[usize],
    truth: &[usize],
    oracle: &OracleSpec,
    rng: &mut R,
) -> Result<Vec<Annotation>> {
    if !(0.0..=1.0).contains(&oracle.noise_fraction) {
        return Err(Error::Oracle(format!(
            "noise fraction must lie in [0,1], got {}",
            oracle.noise_fraction
        )));
    }
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let label = *truth
            .get(i)
            .ok_or_else(|| Error::Oracle(format!("no ground-truth label for index {i}")))?;
        out.push(Annotation {
            index: i,
            label,
            corrupted: false,
        });
    }
    let n_bad = oracle.corrupted_count(indices.len());
    if n_bad == 0 {
        return Ok(out);
    }
    if oracle.num_classes < 2 {
        return Err(Error::Oracle(
            "label noise needs at least two classes".into(),
        ));
    }
    let mut picked: Vec<usize> = sample_indices(rng, indices.len(), n_bad).into_vec();
    picked.sort_unstable();
    match oracle.mode {
        NoiseMode::Reassign => {
            for &p in &picked {
                let true_label = out[p].label;
                let mut wrong = rng.gen_range(0..oracle.num_classes - 1);
                if wrong >= true_label {
                    wrong += 1;
                }
                out[p].label = wrong;
                out[p].corrupted = true;
            }
        }
        NoiseMode::Shuffle => {
            let mut labels: Vec<usize> = picked.iter().map(|&p| out[p].label).collect();
            labels.shuffle(rng);
            for (&p, l) in picked.iter().zip(labels) {
                out[p].label = l;
                out[p].corrupted = true;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamLabel};

    fn truth() -> Vec<usize> {
        (0..100).map(|i| i % 10).collect()
    }

    fn oracle(p: f64) -> OracleSpec {
        OracleSpec {
            noise_fraction: p,
            mode: NoiseMode::Reassign,
            num_classes: 10,
        }
    }

    #[test]
    fn clean_oracle_returns_truth() {
        let t = truth();
        let idx: Vec<usize> = (0..20).collect();
        let mut r = substream(1, StreamLabel::Noise, 0);
        let a = annotate(&idx, &t, &oracle(0.0), &mut r).unwrap();
        assert!(a.iter().all(|x| x.label == t[x.index] && !x.corrupted));
    }

    #[test]
    fn ten_percent_of_twenty_is_two() {
        let t = truth();
        let idx: Vec<usize> = (10..30).collect();
        let mut r = substream(1, StreamLabel::Noise, 0);
        let a = annotate(&idx, &t, &oracle(0.1), &mut r).unwrap();
        let bad: Vec<_> = a.iter().filter(|x| x.label != t[x.index]).collect();
        assert_eq!(bad.len(), 2);
        assert!(bad.iter().all(|x| x.corrupted));
    }

    #[test]
    fn full_noise_changes_every_label() {
        let t = truth();
        let idx: Vec<usize> = (0..50).collect();
        let mut r = substream(2, StreamLabel::Noise, 0);
        let a = annotate(&idx, &t, &oracle(1.0), &mut r).unwrap();
        assert!(a.iter().all(|x| x.label != t[x.index] && x.label < 10));
    }

    #[test]
    fn out_of_range_noise_rejected() {
        let mut r = substream(2, StreamLabel::Noise, 0);
        assert!(annotate(&[0], &truth(), &oracle(1.5), &mut r).is_err());
        assert!(annotate(&[0], &truth(), &oracle(-0.1), &mut r).is_err());
    }

    #[test]
    fn shuffle_mode_preserves_label_multiset() {
        let t = truth();
        let idx: Vec<usize> = (0..40).collect();
        let spec = OracleSpec {
            mode: NoiseMode::Shuffle,
            ..oracle(0.5)
        };
        let mut r = substream(3, StreamLabel::Noise, 0);
        let a = annotate(&idx, &t, &spec, &mut r).unwrap();
        let mut before: Vec<usize> = idx.iter().map(|&i| t[i]).collect();
        let mut after: Vec<usize> = a.iter().map(|x| x.label).collect();
        before.sort_unstable();
        after.sort_unstable();
        assert_eq!(before, after);
        assert_eq!(a.iter().filter(|x| x.corrupted).count(), 20);
    }

    #[test]
    fn corruption_subset_is_uniform() {
        // Each of 10 positions should be picked about p = 0.3 of the time.
        let t = truth();
        let idx: Vec<usize> = (0..10).collect();
        let mut hits = [0usize; 10];
        let mut r = substream(4, StreamLabel::Noise, 0);
        let reps = 5000;
        for _ in 0..reps {
            for (pos, x) in annotate(&idx, &t, &oracle(0.3), &mut r).unwrap().iter().enumerate() {
                if x.corrupted {
                    hits[pos] += 1;
                }
            }
        }
        let sd = (reps as f64 * 0.3 * 0.7).sqrt();
        for h in hits {
            assert!((h as f64 - reps as f64 * 0.3).abs() < 4.0 * sd);
        }
    }
}
