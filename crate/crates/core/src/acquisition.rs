//! Sampling functions over the unlabeled pool.
//!
//! Every sampler is a pure function of model outputs (probabilities,
//! embeddings or committee votes) aligned with the pool indices, and
//! returns exactly `k` sorted, unique indices drawn from the pool. None of
//! them sees a label.

use std::collections::HashSet;

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{CommitteePredictions, EmbeddingMatrix, PredictionTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherIsSelected,
    LowerIsSelected,
}

/// Pool indices with one score each.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    pub pool_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub direction: Direction,
}

impl ScoredPool {
    pub fn new(pool_indices: Vec<usize>, scores: Vec<f64>, direction: Direction) -> Result<Self> {
        if pool_indices.len() != scores.len() {
            return Err(Error::Acquisition(format!(
                "{} pool indices but {} scores",
                pool_indices.len(),
                scores.len()
            )));
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Acquisition(format!(
                "score for index {} is not finite",
                pool_indices[pos]
            )));
        }
        check_unique(&pool_indices)?;
        Ok(ScoredPool {
            pool_indices,
            scores,
            direction,
        })
    }
}

fn check_unique(pool: &[usize]) -> Result<()> {
    let mut seen = HashSet::with_capacity(pool.len());
    for &i in pool {
        if !seen.insert(i) {
            return Err(Error::Acquisition(format!("index {i} appears twice in the pool")));
        }
    }
    Ok(())
}

fn check_k(k: usize, pool: usize) -> Result<()> {
    if k > pool {
        Err(Error::Acquisition(format!(
            "cannot select {k} samples from a pool of {pool}"
        )))
    } else {
        Ok(())
    }
}

/// The `k` most extreme indices in the scoring direction. Ties go to the
/// lower dataset index; the result is sorted.
pub fn select_top_k(scored: &ScoredPool, k: usize) -> Result<Vec<usize>> {
    check_k(k, scored.pool_indices.len())?;
    let mut order: Vec<usize> = (0..scored.pool_indices.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match scored.direction {
            Direction::HigherIsSelected => scored.scores[b].total_cmp(&scored.scores[a]),
            Direction::LowerIsSelected => scored.scores[a].total_cmp(&scored.scores[b]),
        };
        by_score.then(scored.pool_indices[a].cmp(&scored.pool_indices[b]))
    });
    let mut out: Vec<usize> = order[..k].iter().map(|&p| scored.pool_indices[p]).collect();
    out.sort_unstable();
    Ok(out)
}

/// Errors unless `selected` is `k` sorted unique members of `pool`.
pub fn check_selection(selected: &[usize], pool: &[usize], k: usize) -> Result<()> {
    if selected.len() != k {
        return Err(Error::Acquisition(format!(
            "selected {} samples, expected {k}",
            selected.len()
        )));
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Acquisition("selection is not sorted and unique".into()));
    }
    let pool: HashSet<usize> = pool.iter().copied().collect();
    if let Some(i) = selected.iter().find(|i| !pool.contains(i)) {
        return Err(Error::Acquisition(format!("selected index {i} is not in the pool")));
    }
    Ok(())
}

/// Uniform sample of `k` pool indices without replacement.
pub fn random_sample<R: Rng + ?Sized>(pool: &[usize], k: usize, rng: &mut R) -> Result<Vec<usize>> {
    check_k(k, pool.len())?;
    check_unique(pool)?;
    let mut out: Vec<usize> = sample_indices(rng, pool.len(), k)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    out.sort_unstable();
    Ok(out)
}

fn check_aligned(rows: usize, pool: &[usize]) -> Result<()> {
    if rows != pool.len() {
        return Err(Error::Acquisition(format!(
            "{rows} prediction rows for a pool of {}",
            pool.len()
        )));
    }
    Ok(())
}

/// Maximum class probability per sample (single pass). Rows must be
/// stochastic, which [`PredictionTensor`] guarantees.
pub fn confidence_scores(probs: &PredictionTensor, pool: &[usize]) -> Result<Vec<f64>> {
    check_aligned(probs.samples(), pool)?;
    if probs.passes() != 1 {
        return Err(Error::Acquisition(format!(
            "least confidence expects a single pass, got {}",
            probs.passes()
        )));
    }
    Ok((0..probs.samples())
        .map(|i| probs.row(0, i).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect())
}

/// Least confident first: lowest maximum softmax probability.
pub fn least_confidence(probs: &PredictionTensor, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(
        pool.to_vec(),
        confidence_scores(probs, pool)?,
        Direction::LowerIsSelected,
    )?;
    select_top_k(&scored, k)
}

/// Most confident first. Only meant for ablations.
pub fn most_confident(probs: &PredictionTensor, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(
        pool.to_vec(),
        confidence_scores(probs, pool)?,
        Direction::HigherIsSelected,
    )?;
    select_top_k(&scored, k)
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Entropy of the pass-averaged predictive distribution.
pub fn max_entropy_scores(mc: &PredictionTensor, pool: &[usize]) -> Result<Vec<f64>> {
    check_aligned(mc.samples(), pool)?;
    Ok((0..mc.samples()).map(|i| entropy(&mc.mean_row(i))).collect())
}

pub fn max_entropy(mc: &PredictionTensor, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(
        pool.to_vec(),
        max_entropy_scores(mc, pool)?,
        Direction::HigherIsSelected,
    )?;
    select_top_k(&scored, k)
}

/// Mutual information `H[mean_t p_t] - mean_t H[p_t]`, clamped at zero.
pub fn bald_scores(mc: &PredictionTensor, pool: &[usize]) -> Result<Vec<f64>> {
    check_aligned(mc.samples(), pool)?;
    if mc.passes() < 2 {
        return Err(Error::Acquisition(format!(
            "BALD needs at least 2 stochastic passes, got {}",
            mc.passes()
        )));
    }
    let t = mc.passes() as f64;
    Ok((0..mc.samples())
        .map(|i| {
            let total = entropy(&mc.mean_row(i));
            let expected: f64 = (0..mc.passes()).map(|p| entropy(mc.row(p, i))).sum::<f64>() / t;
            (total - expected).max(0.0)
        })
        .collect())
}

pub fn bald(mc: &PredictionTensor, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(pool.to_vec(), bald_scores(mc, pool)?, Direction::HigherIsSelected)?;
    select_top_k(&scored, k)
}

fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Euclidean distance of each pool sample to the centroid of all rows of
/// `embeddings` (which cover L and U).
///
/// Computed as `|n x - S| / n` with `S` the column sums, which keeps
/// samples that are equidistant from the centroid exactly tied.
pub fn cog_scores(embeddings: &EmbeddingMatrix, pool: &[usize]) -> Result<Vec<f64>> {
    if embeddings.rows() == 0 {
        return Err(Error::Acquisition("centre of gravity of an empty set".into()));
    }
    let d = embeddings.dim();
    let mut sums = vec![0.0f64; d];
    for r in 0..embeddings.rows() {
        for (c, &v) in sums.iter_mut().zip(embeddings.row(r)) {
            *c += v as f64;
        }
    }
    let n = embeddings.rows() as f64;
    let positions = embeddings.positions(pool)?;
    Ok(positions
        .iter()
        .map(|&p| {
            embeddings
                .row(p)
                .iter()
                .zip(&sums)
                .map(|(&x, &s)| (n * x as f64 - s).powi(2))
                .sum::<f64>()
                .sqrt()
                / n
        })
        .collect())
}

pub fn cog_sample(embeddings: &EmbeddingMatrix, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(pool.to_vec(), cog_scores(embeddings, pool)?, Direction::HigherIsSelected)?;
    select_top_k(&scored, k)
}

/// Outcome of a k-center greedy run.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetSelection {
    /// Selected indices, sorted.
    pub selected: Vec<usize>,
    /// Selected indices in pick order.
    pub pick_order: Vec<usize>,
    /// Coverage radius `max_u min_c |e_u - e_c|` before the first pick and
    /// after each pick.
    pub radii: Vec<f64>,
}

/// k-center greedy: repeatedly add the pool point farthest from its
/// nearest center, starting from the labeled set as centers.
pub fn coreset_greedy_detailed(
    embeddings: &EmbeddingMatrix,
    labeled: &[usize],
    pool: &[usize],
    k: usize,
) -> Result<CoresetSelection> {
    if labeled.is_empty() {
        return Err(Error::Acquisition(
            "coreset needs a non-empty labeled set as initial centers".into(),
        ));
    }
    check_k(k, pool.len())?;
    check_unique(pool)?;
    // Visit candidates in ascending dataset index so strict `>` breaks ties
    // toward the lower index.
    let mut pool_sorted = pool.to_vec();
    pool_sorted.sort_unstable();
    let upos = embeddings.positions(&pool_sorted)?;
    let lpos = embeddings.positions(labeled)?;

    let mut min_d2: Vec<f64> = upos
        .iter()
        .map(|&u| {
            lpos.iter()
                .map(|&l| squared_distance(embeddings.row(u), embeddings.row(l)))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let radius = |m: &[f64]| m.iter().copied().fold(0.0f64, f64::max).sqrt();
    let mut radii = vec![radius(&min_d2)];
    let mut taken = vec![false; pool_sorted.len()];
    let mut pick_order = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for (j, &d) in min_d2.iter().enumerate() {
            if taken[j] {
                continue;
            }
            match best {
                None => best = Some(j),
                Some(b) if d > min_d2[b] => best = Some(j),
                _ => {}
            }
        }
        let b = best.expect("k <= pool size leaves a candidate");
        taken[b] = true;
        pick_order.push(pool_sorted[b]);
        let centre = embeddings.row(upos[b]);
        for (j, &u) in upos.iter().enumerate() {
            let d = squared_distance(embeddings.row(u), centre);
            if d < min_d2[j] {
                min_d2[j] = d;
            }
        }
        radii.push(radius(&min_d2));
    }
    let mut selected = pick_order.clone();
    selected.sort_unstable();
    Ok(CoresetSelection {
        selected,
        pick_order,
        radii,
    })
}

pub fn coreset_greedy(
    embeddings: &EmbeddingMatrix,
    labeled: &[usize],
    pool: &[usize],
    k: usize,
) -> Result<Vec<usize>> {
    Ok(coreset_greedy_detailed(embeddings, labeled, pool, k)?.selected)
}

/// `1 - f_m / M`, with `f_m` the vote count of the modal class.
pub fn variance_ratio_scores(votes: &CommitteePredictions, pool: &[usize]) -> Result<Vec<f64>> {
    check_aligned(votes.samples(), pool)?;
    let m = votes.members() as f64;
    Ok((0..votes.samples())
        .map(|i| {
            let mut counts = vec![0usize; votes.classes()];
            for &v in votes.votes(i) {
                counts[v] += 1;
            }
            let modal = counts.iter().copied().max().unwrap_or(0);
            1.0 - modal as f64 / m
        })
        .collect())
}

pub fn variance_ratio(votes: &CommitteePredictions, pool: &[usize], k: usize) -> Result<Vec<usize>> {
    let scored = ScoredPool::new(
        pool.to_vec(),
        variance_ratio_scores(votes, pool)?,
        Direction::HigherIsSelected,
    )?;
    select_top_k(&scored, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, StreamLabel};
    use proptest::prelude::*;

    fn probs(rows: &[&[f64]]) -> PredictionTensor {
        let c = rows[0].len();
        PredictionTensor::new(1, rows.len(), c, rows.concat()).unwrap()
    }

    fn emb(points: &[(usize, &[f32])]) -> EmbeddingMatrix {
        let d = points[0].1.len();
        EmbeddingMatrix::new(
            points.iter().map(|p| p.0).collect(),
            d,
            points.iter().flat_map(|p| p.1.iter().copied()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn top_k_basic() {
        let s = ScoredPool::new(vec![10, 11, 12], vec![0.1, 0.9, 0.5], Direction::HigherIsSelected).unwrap();
        assert_eq!(select_top_k(&s, 2).unwrap(), vec![11, 12]);
    }

    #[test]
    fn top_k_ties_prefer_low_index() {
        let s = ScoredPool::new(vec![9, 3, 7, 1, 5], vec![1.0; 5], Direction::LowerIsSelected).unwrap();
        assert_eq!(select_top_k(&s, 3).unwrap(), vec![1, 3, 5]);
    }

    #[test]
    fn top_k_whole_pool_and_too_many() {
        let s = ScoredPool::new(vec![4, 2], vec![0.3, 0.1], Direction::HigherIsSelected).unwrap();
        assert_eq!(select_top_k(&s, 2).unwrap(), vec![2, 4]);
        assert!(select_top_k(&s, 3).is_err());
    }

    #[test]
    fn non_finite_scores_rejected() {
        assert!(ScoredPool::new(vec![0], vec![f64::NAN], Direction::HigherIsSelected).is_err());
    }

    #[test]
    fn random_sample_cases() {
        let pool: Vec<usize> = vec![4, 8, 15, 16, 23, 42];
        let mut r = substream(1, StreamLabel::Sample, 0);
        assert_eq!(random_sample(&pool, 6, &mut r).unwrap(), pool);
        let a = random_sample(&pool, 3, &mut substream(2, StreamLabel::Sample, 0)).unwrap();
        let b = random_sample(&pool, 3, &mut substream(2, StreamLabel::Sample, 0)).unwrap();
        assert_eq!(a, b);
        check_selection(&a, &pool, 3).unwrap();
        assert!(random_sample(&pool, 7, &mut r).is_err());
    }

    #[test]
    fn random_inclusion_frequency() {
        // Each of 20 elements should be included with probability k/|U| = 0.25.
        let pool: Vec<usize> = (0..20).collect();
        let (k, reps) = (5usize, 10_000usize);
        let mut counts = vec![0usize; 20];
        let mut r = substream(3, StreamLabel::Sample, 0);
        for _ in 0..reps {
            for i in random_sample(&pool, k, &mut r).unwrap() {
                counts[i] += 1;
            }
        }
        let p = k as f64 / pool.len() as f64;
        let mean = reps as f64 * p;
        let sd = (reps as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd + 1.0, "{c} vs {mean} +- {sd}");
        }
    }

    #[test]
    fn least_confidence_cases() {
        let p = probs(&[&[0.9, 0.1], &[0.6, 0.4], &[0.5, 0.5]]);
        assert_eq!(least_confidence(&p, &[0, 1, 2], 1).unwrap(), vec![2]);
        assert_eq!(least_confidence(&p, &[0, 1, 2], 2).unwrap(), vec![1, 2]);
        let one_hot = probs(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(least_confidence(&one_hot, &[7, 3, 5], 1).unwrap(), vec![3]);
        assert_eq!(most_confident(&p, &[0, 1, 2], 1).unwrap(), vec![0]);
    }

    #[test]
    fn entropy_cases() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.25; 4]) - 1.3863).abs() < 1e-4);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        let p = probs(&[&[1.0, 0.0, 0.0, 0.0], &[0.25, 0.25, 0.25, 0.25]]);
        assert_eq!(max_entropy(&p, &[0, 1], 1).unwrap(), vec![1]);
    }

    #[test]
    fn bald_cases() {
        let same = PredictionTensor::from_passes(vec![vec![0.3, 0.7]; 3], 1, 2).unwrap();
        assert_eq!(bald_scores(&same, &[0]).unwrap(), vec![0.0]);
        let split = PredictionTensor::from_passes(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 1, 2).unwrap();
        assert!((bald_scores(&split, &[0]).unwrap()[0] - 2f64.ln()).abs() < 1e-12);
        let single = PredictionTensor::from_passes(vec![vec![0.3, 0.7]], 1, 2).unwrap();
        assert!(bald_scores(&single, &[0]).is_err());
    }

    #[test]
    fn cog_cases() {
        let e = emb(&[(0, &[1.0, 0.0]), (1, &[-1.0, 0.0]), (2, &[0.0, 3.0])]);
        let s = cog_scores(&e, &[0, 1, 2]).unwrap();
        assert!((s[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((s[1] - 2f64.sqrt()).abs() < 1e-12);
        assert!((s[2] - 2.0).abs() < 1e-12);
        assert_eq!(cog_sample(&e, &[0, 1, 2], 1).unwrap(), vec![2]);
        let flat = emb(&[(5, &[1.0, 1.0]), (2, &[1.0, 1.0]), (9, &[1.0, 1.0])]);
        assert_eq!(cog_sample(&flat, &[5, 2, 9], 2).unwrap(), vec![2, 5]);
    }

    #[test]
    fn coreset_cases() {
        let e = emb(&[
            (0, &[0.0, 0.0]),
            (1, &[1.0, 0.0]),
            (2, &[5.0, 0.0]),
            (3, &[6.0, 0.0]),
        ]);
        let sel = coreset_greedy_detailed(&e, &[0], &[1, 2, 3], 2).unwrap();
        assert_eq!(sel.pick_order, vec![3, 1]);
        assert_eq!(sel.selected, vec![1, 3]);
        assert_eq!(coreset_greedy(&e, &[0], &[1, 2, 3], 1).unwrap(), vec![3]);
        assert!(coreset_greedy(&e, &[], &[1, 2, 3], 1).is_err());
        // every pool point coincides with a center
        let dup = emb(&[(0, &[1.0]), (1, &[2.0]), (4, &[1.0]), (3, &[2.0]), (2, &[1.0])]);
        assert_eq!(coreset_greedy(&dup, &[0, 1], &[4, 3, 2], 2).unwrap(), vec![2, 3]);
    }

    #[test]
    fn variance_ratio_cases() {
        let votes = CommitteePredictions::new(
            vec![vec![1; 5], vec![0, 0, 1, 2, 3], vec![2, 2, 2, 0, 1]],
            4,
        )
        .unwrap();
        let v = variance_ratio_scores(&votes, &[0, 1, 2]).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - 0.6).abs() < 1e-12);
        assert!((v[2] - 0.4).abs() < 1e-12);
        assert_eq!(variance_ratio(&votes, &[0, 1, 2], 1).unwrap(), vec![1]);
    }

    fn random_tensor(passes: usize, samples: usize, classes: usize, raw: &[f64]) -> PredictionTensor {
        let mut v = Vec::with_capacity(passes * samples * classes);
        for row in raw.chunks(classes).take(passes * samples) {
            let s: f64 = row.iter().sum();
            v.extend(row.iter().map(|x| x / s));
        }
        PredictionTensor::new(passes, samples, classes, v).unwrap()
    }

    proptest! {
        #[test]
        fn bald_bounded_by_entropy(raw in proptest::collection::vec(0.01f64..1.0, 4 * 6 * 3)) {
            let t = random_tensor(4, 6, 3, &raw);
            let pool: Vec<usize> = (0..6).collect();
            let b = bald_scores(&t, &pool).unwrap();
            let h = max_entropy_scores(&t, &pool).unwrap();
            for (bi, hi) in b.iter().zip(&h) {
                prop_assert!(*bi >= 0.0 && *hi >= 0.0);
                prop_assert!(*bi <= *hi + 1e-12);
            }
        }

        #[test]
        fn top_k_invariant_under_monotone_maps(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..30),
            k_frac in 0.0f64..1.0,
        ) {
            let pool: Vec<usize> = (0..scores.len()).map(|i| i * 3 + 1).collect();
            let k = ((scores.len() as f64) * k_frac) as usize;
            let a = ScoredPool::new(pool.clone(), scores.clone(), Direction::HigherIsSelected).unwrap();
            let mapped: Vec<f64> = scores.iter().map(|s| s.exp() * 2.0 + 1.0).collect();
            let b = ScoredPool::new(pool.clone(), mapped, Direction::HigherIsSelected).unwrap();
            let out = select_top_k(&a, k).unwrap();
            prop_assert_eq!(&out, &select_top_k(&b, k).unwrap());
            check_selection(&out, &pool, k).unwrap();
        }

        #[test]
        fn coreset_radius_never_grows(
            coords in proptest::collection::vec(-10.0f32..10.0, 2 * 12),
            k in 1usize..8,
        ) {
            let points: Vec<(usize, &[f32])> = coords.chunks(2).enumerate().collect();
            let e = emb(&points);
            let pool: Vec<usize> = (2..12).collect();
            let sel = coreset_greedy_detailed(&e, &[0, 1], &pool, k).unwrap();
            for w in sel.radii.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            check_selection(&sel.selected, &pool, k).unwrap();
        }

        #[test]
        fn cog_translation_invariant(
            coords in proptest::collection::vec(-10.0f32..10.0, 3 * 8),
            shift in proptest::collection::vec(-4.0f32..4.0, 3),
            k in 1usize..8,
        ) {
            // Quarter-grid coordinates and 8 points keep the centroid and all
            // distances exact, so ties survive the translation.
            let snap = |v: f32| (v * 4.0).round() / 4.0;
            let base: Vec<f32> = coords.iter().map(|&v| snap(v)).collect();
            let moved: Vec<f32> = base
                .chunks(3)
                .flat_map(|p| p.iter().zip(&shift).map(|(x, s)| x + snap(*s)).collect::<Vec<_>>())
                .collect();
            let idx: Vec<usize> = (0..8).collect();
            let a = EmbeddingMatrix::new(idx.clone(), 3, base).unwrap();
            let b = EmbeddingMatrix::new(idx.clone(), 3, moved).unwrap();
            prop_assert_eq!(cog_sample(&a, &idx, k).unwrap(), cog_sample(&b, &idx, k).unwrap());
        }
    }
}
