//! Seeded two-dimensional t-SNE of pair representations.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub seed: u64,
    /// Defaults to min(30, (n - 1) / 3).
    pub perplexity: Option<f64>,
    pub epochs: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            seed: 0,
            perplexity: None,
            epochs: 1000,
        }
    }
}

/// Exact t-SNE on squared Euclidean distances, initialized from a seeded
/// N(0, 1e-4) draw and run on one thread so repeated calls agree bitwise.
pub fn tsne_2d(points: &[Vec<f64>], params: &TsneParams) -> Result<Vec<[f64; 2]>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("t-SNE inputs must share one non-zero dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("t-SNE inputs must be finite".into()));
    }
    let max_perplexity = (n - 1) as f64 / 3.0;
    let perplexity = params.perplexity.unwrap_or(30.0).min(max_perplexity);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let init: Vec<f64> = (0..2 * n).map(|_| normal.sample(&mut rng)).collect();
    let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?;
    let flat = pool.install(|| {
        let mut t: bhtsne::tSNE<f64, &[f64]> = bhtsne::tSNE::new(&refs);
        t.perplexity(perplexity)
            .epochs(params.epochs)
            .initial_embedding(init)
            .exact(|a, b| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum());
        t.embedding()
    });
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("t-SNE produced non-finite coordinates".into()));
    }
    Ok(flat.chunks(2).map(|c| [c[0], c[1]]).collect())
}

/// The `low` least frequent and `high` most frequent labels (ties broken by
/// label id), least frequent first.
pub fn select_events(labels: &[usize], low: usize, high: usize) -> Vec<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let mut by_freq: Vec<(usize, usize)> = counts.into_iter().collect();
    by_freq.sort_by_key(|&(label, count)| (count, label));
    let mut out: Vec<usize> = by_freq.iter().take(low).map(|p| p.0).collect();
    for &(label, _) in by_freq.iter().rev().take(high) {
        if !out.contains(&label) {
            out.push(label);
        }
    }
    out
}

/// Mean silhouette coefficient of a 2-D labelling.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let n = points.len();
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut total = 0.0;
    for i in 0..n {
        let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for j in 0..n {
            if i != j {
                let e = sums.entry(labels[j]).or_default();
                e.0 += dist(&points[i], &points[j]);
                e.1 += 1;
            }
        }
        let a = sums.get(&labels[i]).map(|(s, c)| s / *c as f64).unwrap_or(0.0);
        let b = sums
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, (s, c))| s / *c as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_samples() {
        assert_eq!(tsne_2d(&[vec![1.0]], &TsneParams::default()).unwrap_err().kind(), "TooFewSamples");
    }

    #[test]
    fn event_selection_takes_both_tails() {
        let labels = [0, 0, 0, 1, 2, 2, 3, 3, 3, 3];
        assert_eq!(select_events(&labels, 2, 1), vec![1, 2, 3]);
        assert_eq!(select_events(&labels, 4, 4), vec![1, 2, 0, 3]);
    }

    #[test]
    fn silhouette_of_separated_pairs() {
        let p = [[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
        let s = silhouette(&p, &[0, 0, 1, 1]);
        assert!(s > 0.85, "{s}");
    }
}
