//! Label-partitioned deterministic random streams.
//!
//! Every source of randomness in a run draws from its own ChaCha20 stream,
//! keyed by `(seed, label, sub-index)`. Adding draws to one stream (e.g.
//! enabling augmentation) never shifts the draws of another (e.g. sampling).

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

pub type StreamRng = ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Init,
    Augment,
    Sample,
    Noise,
    Fold,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 5] = [
        StreamLabel::Init,
        StreamLabel::Augment,
        StreamLabel::Sample,
        StreamLabel::Noise,
        StreamLabel::Fold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Init => "init",
            StreamLabel::Augment => "augment",
            StreamLabel::Sample => "sample",
            StreamLabel::Noise => "noise",
            StreamLabel::Fold => "fold",
        }
    }

    fn id(self) -> u64 {
        match self {
            StreamLabel::Init => 1,
            StreamLabel::Augment => 2,
            StreamLabel::Sample => 3,
            StreamLabel::Noise => 4,
            StreamLabel::Fold => 5,
        }
    }
}

impl fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::UnknownStream(s.to_string()))
    }
}

const SUB_BITS: u32 = 56;
const SUB_MASK: u64 = (1 << SUB_BITS) - 1;

/// Stream `sub` of `label` for `seed`. Sub-indices above 2^56 wrap.
pub fn substream(seed: u64, label: StreamLabel, sub: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((label.id() << SUB_BITS) | (sub & SUB_MASK));
    rng
}

/// The root stream of a label.
pub fn make_rng(seed: u64, label: &str) -> Result<StreamRng> {
    let label: StreamLabel = label.parse()?;
    Ok(substream(seed, label, 0))
}

/// Named sub-streams of one training seed. Each AL iteration gets its own
/// sub-streams so that a run can resume at any iteration without replaying
/// earlier draws.
#[derive(Debug, Clone, Copy)]
pub struct RunStreams {
    pub seed: u64,
}

const PER_ITERATION: u64 = 1 << 16;

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        RunStreams { seed }
    }

    /// Weight init, mini-batch order and dropout masks of the task model.
    pub fn task_model(&self, iteration: usize) -> StreamRng {
        substream(self.seed, StreamLabel::Init, iteration as u64 * PER_ITERATION)
    }

    pub fn task_augment(&self, iteration: usize) -> StreamRng {
        substream(self.seed, StreamLabel::Augment, iteration as u64 * PER_ITERATION)
    }

    pub fn committee_member(&self, iteration: usize, member: usize) -> StreamRng {
        substream(
            self.seed,
            StreamLabel::Init,
            iteration as u64 * PER_ITERATION + 1 + member as u64,
        )
    }

    pub fn committee_augment(&self, iteration: usize, member: usize) -> StreamRng {
        substream(
            self.seed,
            StreamLabel::Augment,
            iteration as u64 * PER_ITERATION + 1 + member as u64,
        )
    }

    pub fn vaal(&self, iteration: usize) -> StreamRng {
        substream(
            self.seed,
            StreamLabel::Init,
            iteration as u64 * PER_ITERATION + PER_ITERATION - 1,
        )
    }

    /// Sampling randomness used to select the batch annotated at `iteration`
    /// (random baseline, MC-dropout masks).
    pub fn sample(&self, iteration: usize) -> StreamRng {
        substream(self.seed, StreamLabel::Sample, iteration as u64)
    }

    pub fn noise(&self, iteration: usize) -> StreamRng {
        substream(self.seed, StreamLabel::Noise, iteration as u64)
    }
}

/// Streams for the dataset split and the initial folds.
pub mod partition_streams {
    use super::*;

    pub fn split(partition_seed: u64) -> StreamRng {
        substream(partition_seed, StreamLabel::Fold, 0)
    }

    pub fn folds(partition_seed: u64) -> StreamRng {
        substream(partition_seed, StreamLabel::Fold, 1)
    }

    pub fn subset(partition_seed: u64) -> StreamRng {
        substream(partition_seed, StreamLabel::Fold, 2)
    }

    pub fn imbalance(partition_seed: u64) -> StreamRng {
        substream(partition_seed, StreamLabel::Fold, 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn draws(mut rng: StreamRng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_seed_and_label_repeat() {
        let a = draws(make_rng(7, "sample").unwrap(), 100);
        let b = draws(make_rng(7, "sample").unwrap(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn labels_give_different_streams() {
        let a = draws(make_rng(7, "sample").unwrap(), 100);
        let b = draws(make_rng(7, "noise").unwrap(), 100);
        assert_ne!(a, b);
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
    }

    #[test]
    fn seeds_give_different_streams() {
        for label in StreamLabel::ALL {
            let a = draws(make_rng(7, label.as_str()).unwrap(), 100);
            let b = draws(make_rng(8, label.as_str()).unwrap(), 100);
            assert_ne!(a, b, "{label}");
        }
    }

    #[test]
    fn unknown_label_is_an_error() {
        assert!(matches!(make_rng(7, "dropout"), Err(Error::UnknownStream(_))));
    }

    #[test]
    fn run_substreams_are_distinct() {
        let s = RunStreams::new(3);
        let all = [
            draws(s.task_model(0), 4),
            draws(s.task_model(1), 4),
            draws(s.committee_member(0, 0), 4),
            draws(s.committee_member(0, 1), 4),
            draws(s.vaal(0), 4),
            draws(s.task_augment(0), 4),
            draws(s.sample(0), 4),
            draws(s.noise(0), 4),
        ];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j], "{i} vs {j}");
            }
        }
    }
}
