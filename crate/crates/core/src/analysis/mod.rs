//! Result aggregation, significance testing and active-set overlap.

mod anova;
pub mod studentized;

pub use anova::{anova_tukey, AnovaOutcome, MethodGroup, PairCell, PairComparison, SignificanceReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One accuracy value for a (method, labeled fraction) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub method: String,
    pub labeled_fraction: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub labeled_fraction: f64,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation with an `n - 1` denominator; `None` for a
    /// single observation.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub methods: Vec<String>,
    pub fractions: Vec<f64>,
    /// Every observed cell, ordered by method then fraction.
    pub cells: Vec<CellSummary>,
    /// (method, fraction) combinations with no observations.
    pub gaps: Vec<(String, f64)>,
}

impl Aggregate {
    pub fn cell(&self, method: &str, fraction: f64) -> Option<&CellSummary> {
        let key = fraction_key(fraction);
        self.cells
            .iter()
            .find(|c| c.method == method && fraction_key(c.labeled_fraction) == key)
    }
}

/// Fractions are grouped on a 1e-9 grid so that values computed through
/// different arithmetic land in the same column.
fn fraction_key(f: f64) -> i64 {
    (f * 1e9).round() as i64
}

fn key_fraction(k: i64) -> f64 {
    k as f64 / 1e9
}

/// Mean and sample standard deviation of `values`. Values are summed in
/// sorted order so the result does not depend on input order.
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, None);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, Some((dev.iter().sum::<f64>() / (n - 1.0)).sqrt()))
}

/// Groups observations into (method, fraction) cells.
pub fn aggregate(observations: &[Observation]) -> Result<Aggregate> {
    if observations.is_empty() {
        return Err(Error::Statistics("no observations to aggregate".into()));
    }
    let mut cells: BTreeMap<(String, i64), Vec<f64>> = BTreeMap::new();
    let mut fractions = BTreeSet::new();
    for o in observations {
        if !o.accuracy.is_finite() || !o.labeled_fraction.is_finite() {
            return Err(Error::Statistics(format!(
                "non-finite observation for method {}",
                o.method
            )));
        }
        let key = fraction_key(o.labeled_fraction);
        fractions.insert(key);
        cells.entry((o.method.clone(), key)).or_default().push(o.accuracy);
    }
    let methods: Vec<String> = cells
        .keys()
        .map(|(m, _)| m.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut summaries = Vec::with_capacity(cells.len());
    let mut gaps = Vec::new();
    for m in &methods {
        for &f in &fractions {
            match cells.get(&(m.clone(), f)) {
                Some(values) => {
                    let (mean, std) = mean_std(values);
                    summaries.push(CellSummary {
                        method: m.clone(),
                        labeled_fraction: key_fraction(f),
                        n: values.len(),
                        mean,
                        std,
                    });
                }
                None => gaps.push((m.clone(), key_fraction(f))),
            }
        }
    }
    Ok(Aggregate {
        methods,
        fractions: fractions.into_iter().map(key_fraction).collect(),
        cells: summaries,
        gaps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub methods: Vec<String>,
    /// `values[a][b] = |A ∩ B| / |A|`.
    pub values: Vec<Vec<f64>>,
}

/// Pairwise overlap between equal-size index sets.
pub fn active_set_overlap(sets: &[(String, Vec<usize>)]) -> Result<OverlapMatrix> {
    let Some((_, first)) = sets.first() else {
        return Err(Error::Statistics("no index sets to compare".into()));
    };
    let size: BTreeSet<usize> = first.iter().copied().collect();
    if size.is_empty() {
        return Err(Error::Statistics("index sets must be non-empty".into()));
    }
    let as_sets: Vec<BTreeSet<usize>> = sets
        .iter()
        .map(|(_, s)| s.iter().copied().collect())
        .collect();
    for ((name, raw), set) in sets.iter().zip(&as_sets) {
        if set.len() != raw.len() {
            return Err(Error::Statistics(format!(
                "index set for {name} contains duplicates"
            )));
        }
        if set.len() != size.len() {
            return Err(Error::Statistics(format!(
                "index set for {name} has {} elements, expected {}",
                set.len(),
                size.len()
            )));
        }
    }
    let values = as_sets
        .iter()
        .map(|a| {
            as_sets
                .iter()
                .map(|b| a.intersection(b).count() as f64 / a.len() as f64)
                .collect()
        })
        .collect();
    Ok(OverlapMatrix {
        methods: sets.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(method: &str, f: f64, a: f64) -> Observation {
        Observation {
            method: method.into(),
            labeled_fraction: f,
            accuracy: a,
        }
    }

    #[test]
    fn mean_and_sample_std() {
        let agg = aggregate(&[obs("rsb", 0.1, 80.0), obs("rsb", 0.1, 82.0)]).unwrap();
        let c = agg.cell("rsb", 0.1).unwrap();
        assert_eq!(c.mean, 81.0);
        assert!((c.std.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(c.n, 2);
    }

    #[test]
    fn single_observation_has_no_std() {
        let agg = aggregate(&[obs("rsb", 0.1, 80.0)]).unwrap();
        assert_eq!(agg.cell("rsb", 0.1).unwrap().std, None);
    }

    #[test]
    fn constant_observations_have_zero_std() {
        let agg = aggregate(&[obs("a", 0.2, 5.0), obs("a", 0.2, 5.0), obs("a", 0.2, 5.0)]).unwrap();
        assert_eq!(agg.cell("a", 0.2).unwrap().std, Some(0.0));
    }

    #[test]
    fn missing_cells_are_gaps() {
        let agg = aggregate(&[obs("a", 0.1, 1.0), obs("a", 0.2, 1.0), obs("b", 0.1, 1.0)]).unwrap();
        assert_eq!(agg.gaps, vec![("b".to_string(), 0.2)]);
        assert!(agg.cell("b", 0.2).is_none());
        assert_eq!(agg.cells.len(), 3);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a: Vec<usize> = (0..10).collect();
        let b: Vec<usize> = (6..16).collect();
        let c: Vec<usize> = (100..110).collect();
        let m = active_set_overlap(&[
            ("a".into(), a.clone()),
            ("a2".into(), a),
            ("b".into(), b),
            ("c".into(), c),
        ])
        .unwrap();
        assert_eq!(m.values[0][1], 1.0);
        assert_eq!(m.values[0][2], 0.4);
        assert_eq!(m.values[0][3], 0.0);
        assert!((0..4).all(|i| m.values[i][i] == 1.0));
    }

    #[test]
    fn overlap_size_mismatch_rejected() {
        let r = active_set_overlap(&[("a".into(), vec![1, 2]), ("b".into(), vec![1])]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(
            values in prop::collection::vec(0.0f64..100.0, 2..20),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let observations: Vec<Observation> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| obs(if i % 2 == 0 { "a" } else { "b" }, 0.1 * (i % 3) as f64, v))
                .collect();
            let mut shuffled = observations.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate(&observations).unwrap(), aggregate(&shuffled).unwrap());
        }

        #[test]
        fn overlap_entries_in_unit_interval(
            sets in prop::collection::vec(prop::sample::subsequence((0..30usize).collect::<Vec<_>>(), 6), 1..6)
        ) {
            let named: Vec<(String, Vec<usize>)> =
                sets.into_iter().enumerate().map(|(i, s)| (i.to_string(), s)).collect();
            let m = active_set_overlap(&named).unwrap();
            for (i, row) in m.values.iter().enumerate() {
                prop_assert_eq!(row[i], 1.0);
                for (j, v) in row.iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(v));
                    prop_assert_eq!(*v, m.values[j][i]);
                }
            }
        }
    }
}
