//! Model outputs consumed by the acquisition functions.

use crate::error::{Error, Result};

/// Tolerance on per-row probability sums.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Class probabilities shaped `[passes, samples, classes]`, row-stochastic
/// in the last axis. `passes` is 1 for a deterministic prediction, T for
/// MC-dropout and M for a committee.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTensor {
    passes: usize,
    samples: usize,
    classes: usize,
    values: Vec<f64>,
}

impl PredictionTensor {
    pub fn new(passes: usize, samples: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if passes == 0 || classes == 0 {
            return Err(Error::InvalidArgument(
                "prediction tensor needs at least one pass and one class".into(),
            ));
        }
        if values.len() != passes * samples * classes {
            return Err(Error::InvalidArgument(format!(
                "prediction tensor has {} values, expected {passes} x {samples} x {classes}",
                values.len()
            )));
        }
        let t = PredictionTensor {
            passes,
            samples,
            classes,
            values,
        };
        t.check_stochastic()?;
        Ok(t)
    }

    /// Stacks per-pass `[samples, classes]` row-major matrices.
    pub fn from_passes(passes: Vec<Vec<f64>>, samples: usize, classes: usize) -> Result<Self> {
        let n = passes.len();
        Self::new(n, samples, classes, passes.concat())
    }

    fn check_stochastic(&self) -> Result<()> {
        for (r, row) in self.values.chunks_exact(self.classes).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {r} has negative or non-finite probabilities"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "row {r} sums to {s}, not 1"
                )));
            }
        }
        Ok(())
    }

    pub fn passes(&self) -> usize {
        self.passes
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, pass: usize, sample: usize) -> &[f64] {
        let start = (pass * self.samples + sample) * self.classes;
        &self.values[start..start + self.classes]
    }

    /// Mean over passes for one sample.
    pub fn mean_row(&self, sample: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.classes];
        for t in 0..self.passes {
            for (acc, p) in m.iter_mut().zip(self.row(t, sample)) {
                *acc += p;
            }
        }
        let inv = 1.0 / self.passes as f64;
        m.iter_mut().for_each(|x| *x *= inv);
        m
    }

    /// Arg-max class of every (pass, sample); ties go to the lower class.
    pub fn argmax_votes(&self) -> Vec<Vec<usize>> {
        (0..self.samples)
            .map(|i| {
                (0..self.passes)
                    .map(|t| {
                        let row = self.row(t, i);
                        let mut best = 0;
                        for (j, p) in row.iter().enumerate() {
                            if *p > row[best] {
                                best = j;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    }
}

/// Penultimate-layer activations, one row per dataset index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    indices: Vec<usize>,
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(indices: Vec<usize>, dim: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != indices.len() * dim {
            return Err(Error::InvalidArgument(format!(
                "embedding matrix has {} values, expected {} x {dim}",
                values.len(),
                indices.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("embeddings must be finite".into()));
        }
        Ok(EmbeddingMatrix {
            indices,
            dim,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    /// Row positions for `wanted` dataset indices.
    pub fn positions(&self, wanted: &[usize]) -> Result<Vec<usize>> {
        let lookup: std::collections::HashMap<usize, usize> = self
            .indices
            .iter()
            .enumerate()
            .map(|(pos, &i)| (i, pos))
            .collect();
        wanted
            .iter()
            .map(|i| {
                lookup.get(i).copied().ok_or_else(|| {
                    Error::Acquisition(format!("no embedding row for index {i}"))
                })
            })
            .collect()
    }
}

/// Hard class votes `[samples][members]` from an M-model committee.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitteePredictions {
    votes: Vec<Vec<usize>>,
    members: usize,
    classes: usize,
}

impl CommitteePredictions {
    pub fn new(votes: Vec<Vec<usize>>, classes: usize) -> Result<Self> {
        let members = votes.first().map_or(0, Vec::len);
        if votes.iter().any(|v| v.len() != members) {
            return Err(Error::InvalidArgument(
                "every sample needs one vote per committee member".into(),
            ));
        }
        if !votes.is_empty() && members < 2 {
            return Err(Error::InvalidArgument(format!(
                "committee needs at least 2 members, got {members}"
            )));
        }
        if votes.iter().flatten().any(|&c| c >= classes) {
            return Err(Error::InvalidArgument(format!(
                "vote outside the {classes} classes"
            )));
        }
        Ok(CommitteePredictions {
            votes,
            members,
            classes,
        })
    }

    pub fn members(&self) -> usize {
        self.members
    }

    pub fn samples(&self) -> usize {
        self.votes.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn votes(&self, sample: usize) -> &[usize] {
        &self.votes[sample]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_stochastic_rows_rejected() {
        assert!(PredictionTensor::new(1, 1, 2, vec![0.5, 0.6]).is_err());
        assert!(PredictionTensor::new(1, 1, 2, vec![-0.1, 1.1]).is_err());
        assert!(PredictionTensor::new(1, 1, 2, vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn mean_over_passes() {
        let t = PredictionTensor::from_passes(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1, 2).unwrap();
        assert_eq!(t.mean_row(0), vec![0.5, 0.5]);
    }

    #[test]
    fn committee_shape_checks() {
        assert!(CommitteePredictions::new(vec![vec![0]], 2).is_err());
        assert!(CommitteePredictions::new(vec![vec![0, 1], vec![0]], 2).is_err());
        assert!(CommitteePredictions::new(vec![vec![0, 2]], 2).is_err());
        assert!(CommitteePredictions::new(vec![vec![0, 1]], 2).is_ok());
    }
}
