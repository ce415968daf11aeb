//! One-way ANOVA followed by Tukey-Kramer all-pairs comparisons.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use super::studentized::studentized_range_sf;
use crate::error::{Error, Result};

/// Accuracy values of one method at a fixed labeled fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodGroup {
    pub method: String,
    pub observations: Vec<f64>,
}

impl MethodGroup {
    pub fn new(method: impl Into<String>, observations: Vec<f64>) -> Self {
        MethodGroup {
            method: method.into(),
            observations,
        }
    }

    fn mean(&self) -> f64 {
        super::mean_std(&self.observations).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AnovaOutcome {
    Tested {
        f: f64,
        p: f64,
        df_between: usize,
        df_within: usize,
    },
    /// Every observation in every group is identical; F is undefined.
    NoVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub a: usize,
    pub b: usize,
    /// `mean(a) - mean(b)`.
    pub mean_difference: f64,
    pub q: f64,
    pub p_unadjusted: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// One entry of the full pairwise matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCell {
    pub mean_difference: f64,
    pub p_adjusted: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub methods: Vec<String>,
    pub means: Vec<f64>,
    pub alpha: f64,
    pub anova: AnovaOutcome,
    /// Pairs `(a, b)` with `a < b`, in row-major order.
    pub pairs: Vec<PairComparison>,
}

impl SignificanceReport {
    pub fn pair(&self, a: usize, b: usize) -> Option<&PairComparison> {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        self.pairs.iter().find(|p| p.a == lo && p.b == hi)
    }

    /// Full `k x k` matrix; entry `[i][j]` holds `mean(i) - mean(j)`.
    pub fn matrix(&self) -> Vec<Vec<PairCell>> {
        let k = self.methods.len();
        (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| match self.pair(i, j) {
                        Some(p) if i != j => PairCell {
                            mean_difference: if i < j {
                                p.mean_difference
                            } else {
                                -p.mean_difference
                            },
                            p_adjusted: p.p_adjusted,
                            significant: p.significant,
                        },
                        _ => PairCell {
                            mean_difference: 0.0,
                            p_adjusted: 1.0,
                            significant: false,
                        },
                    })
                    .collect()
            })
            .collect()
    }

    pub fn significant_pairs(&self) -> impl Iterator<Item = &PairComparison> {
        self.pairs.iter().filter(|p| p.significant)
    }
}

/// One-way ANOVA over `groups` and Tukey-Kramer comparisons of every pair,
/// with significance judged on the adjusted p-value at `alpha`.
pub fn anova_tukey(groups: &[MethodGroup], alpha: f64) -> Result<SignificanceReport> {
    if groups.len() < 2 {
        return Err(Error::Statistics(format!(
            "ANOVA needs at least 2 groups, got {}",
            groups.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Statistics(format!("alpha must lie in (0,1), got {alpha}")));
    }
    for g in groups {
        if g.observations.len() < 2 {
            return Err(Error::Statistics(format!(
                "group {} has {} observations, need at least 2",
                g.method,
                g.observations.len()
            )));
        }
        if g.observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::Statistics(format!(
                "group {} has non-finite observations",
                g.method
            )));
        }
    }
    let k = groups.len();
    let n_total: usize = groups.iter().map(|g| g.observations.len()).sum();
    let means: Vec<f64> = groups.iter().map(MethodGroup::mean).collect();
    let grand = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| m * g.observations.len() as f64)
        .sum::<f64>()
        / n_total as f64;
    let ss_between: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.observations.len() as f64 * (m - grand).powi(2))
        .sum();
    let ss_within: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.observations.iter().map(|x| (x - m).powi(2)).sum::<f64>())
        .sum();
    let df_between = k - 1;
    let df_within = n_total - k;
    let ms_between = ss_between / df_between as f64;
    let ms_within = ss_within / df_within as f64;
    let methods: Vec<String> = groups.iter().map(|g| g.method.clone()).collect();

    let all_equal = groups
        .iter()
        .flat_map(|g| &g.observations)
        .all(|&x| x == groups[0].observations[0]);
    if all_equal {
        let pairs = all_pairs(k)
            .map(|(a, b)| PairComparison {
                a,
                b,
                mean_difference: 0.0,
                q: 0.0,
                p_unadjusted: 1.0,
                p_adjusted: 1.0,
                significant: false,
            })
            .collect();
        return Ok(SignificanceReport {
            methods,
            means,
            alpha,
            anova: AnovaOutcome::NoVariance,
            pairs,
        });
    }

    let (f, p) = if ms_within > 0.0 {
        let f = ms_between / ms_within;
        let dist = FisherSnedecor::new(df_between as f64, df_within as f64)
            .map_err(|e| Error::Statistics(e.to_string()))?;
        (f, dist.sf(f))
    } else {
        (f64::INFINITY, 0.0)
    };
    let t_dist = StudentsT::new(0.0, 1.0, df_within as f64)
        .map_err(|e| Error::Statistics(e.to_string()))?;

    let pairs = all_pairs(k)
        .map(|(a, b)| {
            let diff = means[a] - means[b];
            let na = groups[a].observations.len() as f64;
            let nb = groups[b].observations.len() as f64;
            let se = (0.5 * ms_within * (1.0 / na + 1.0 / nb)).sqrt();
            let (q, p_adj, p_raw) = if diff == 0.0 {
                (0.0, 1.0, 1.0)
            } else if se == 0.0 {
                (f64::INFINITY, 0.0, 0.0)
            } else {
                let q = diff.abs() / se;
                let p_raw = 2.0 * t_dist.sf(q / std::f64::consts::SQRT_2);
                // Quadrature error can leave the adjusted value a hair below
                // the unadjusted one when both are tiny.
                let p_adj = studentized_range_sf(q, k, df_within as f64).max(p_raw);
                (q, p_adj, p_raw)
            };
            PairComparison {
                a,
                b,
                mean_difference: diff,
                q,
                p_unadjusted: p_raw,
                p_adjusted: p_adj,
                significant: p_adj < alpha,
            }
        })
        .collect();
    Ok(SignificanceReport {
        methods,
        means,
        alpha,
        anova: AnovaOutcome::Tested {
            f,
            p,
            df_between,
            df_within,
        },
        pairs,
    })
}

fn all_pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |a| (a + 1..k).map(move |b| (a, b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn normal_group(name: &str, mean: f64, sd: f64, n: usize, rng: &mut impl rand::Rng) -> MethodGroup {
        let d = Normal::new(mean, sd).unwrap();
        MethodGroup::new(name, (0..n).map(|_| d.sample(rng)).collect())
    }

    #[test]
    fn identical_groups_have_no_significant_pairs() {
        let g = vec![
            MethodGroup::new("a", vec![1.0, 2.0, 3.0]),
            MethodGroup::new("b", vec![1.0, 2.0, 3.0]),
        ];
        let r = anova_tukey(&g, 0.05).unwrap();
        assert_eq!(r.significant_pairs().count(), 0);
        match r.anova {
            AnovaOutcome::Tested { f, p, .. } => {
                assert_eq!(f, 0.0);
                assert!((p - 1.0).abs() < 1e-12);
            }
            AnovaOutcome::NoVariance => panic!("groups have spread"),
        }
    }

    #[test]
    fn all_identical_values_report_no_variance() {
        let g = vec![
            MethodGroup::new("a", vec![4.0, 4.0]),
            MethodGroup::new("b", vec![4.0, 4.0]),
        ];
        assert_eq!(anova_tukey(&g, 0.05).unwrap().anova, AnovaOutcome::NoVariance);
    }

    #[test]
    fn separated_groups_are_significant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g = vec![
            normal_group("a", 0.0, 0.1, 5, &mut rng),
            normal_group("b", 10.0, 0.1, 5, &mut rng),
        ];
        let r = anova_tukey(&g, 0.05).unwrap();
        assert!(r.pairs[0].significant);
    }

    #[test]
    fn too_few_observations_rejected() {
        let g = vec![MethodGroup::new("a", vec![1.0]), MethodGroup::new("b", vec![1.0, 2.0])];
        assert!(anova_tukey(&g, 0.05).is_err());
        assert!(anova_tukey(&g[1..], 0.05).is_err());
    }

    #[test]
    fn matrix_is_antisymmetric_with_quiet_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let g: Vec<_> = (0..4)
            .map(|i| normal_group(&i.to_string(), i as f64, 1.0, 6, &mut rng))
            .collect();
        let r = anova_tukey(&g, 0.05).unwrap();
        let m = r.matrix();
        for i in 0..4 {
            assert!(!m[i][i].significant);
            for j in 0..4 {
                assert_eq!(m[i][j].mean_difference, -m[j][i].mean_difference);
                assert_eq!(m[i][j].significant, m[j][i].significant);
            }
        }
    }

    #[test]
    fn adjusted_p_never_below_unadjusted() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let g: Vec<_> = (0..3 + trial % 3)
                .map(|i| normal_group(&i.to_string(), 0.3 * i as f64, 1.0, 3 + i, &mut rng))
                .collect();
            for p in anova_tukey(&g, 0.05).unwrap().pairs {
                assert!(p.p_adjusted >= p.p_unadjusted);
            }
        }
    }
}
