//! Cluster-quality scoring, the representation × algorithm × K benchmark
//! grid, and a two-sample mean test.

mod benchmark;
mod hotelling;
mod plot;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterResult, Points};
use crate::error::{Error, Result};

pub use benchmark::{
    check_assertion, run_benchmark, BenchmarkConfig, BenchmarkReport, BenchmarkRow, Features,
    Representation, RunMetadata, SummaryRow,
};
pub use hotelling::{hotelling_t2, HotellingResult};
pub use plot::scatter_svg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChReport {
    pub score: f64,
    pub k: usize,
    pub n: usize,
}

/// Calinski-Harabasz index: between- over within-cluster dispersion, scaled
/// by `(N − K)/(K − 1)`.
pub fn ch_score<P: Points + ?Sized>(x: &P, labels: &[usize], k: usize) -> Result<ChReport> {
    let (n, d) = (x.len(), x.dim());
    if labels.len() != n {
        return Err(Error::shape(format!("{n} labels"), labels.len()));
    }
    if k < 2 {
        return Err(Error::invalid(format!("score needs at least 2 clusters, got {k}")));
    }
    if n <= k {
        return Err(Error::invalid(format!("score needs more points ({n}) than clusters ({k})")));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside 0..{k}")));
    }
    let (centroids, counts) = crate::clustering::centroids(x, labels, k);
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("cluster {empty} is empty")));
    }
    let mut mean = vec![0.0; d];
    for (c, &m) in centroids.chunks(d.max(1)).zip(&counts) {
        mean.iter_mut().zip(c).for_each(|(a, b)| *a += b * m as f64);
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);

    let between: f64 = centroids
        .chunks(d.max(1))
        .zip(&counts)
        .map(|(c, &m)| m as f64 * c.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    let within = crate::clustering::wcss(x, labels, k);
    if within <= 0.0 {
        return Err(Error::Degenerate(
            "every point coincides with its cluster centroid (zero within-cluster dispersion)".into(),
        ));
    }
    let score = (n - k) as f64 / (k - 1) as f64 * between / within;
    Ok(ChReport { score, k, n })
}

pub fn ch_score_of<P: Points + ?Sized>(x: &P, result: &ClusterResult) -> Result<ChReport> {
    ch_score(x, &result.labels, result.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::testutil::blobs;
    use crate::features::FeatureMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct evaluation of the definition with explicit loops.
    fn oracle(x: &FeatureMatrix, labels: &[usize], k: usize) -> f64 {
        let (n, d) = (x.nrows(), x.ncols());
        let mut global = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                global[j] += x.get(i, j) / n as f64;
            }
        }
        let mut between = 0.0;
        let mut within = 0.0;
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            let mut cen = vec![0.0; d];
            for &i in &members {
                for j in 0..d {
                    cen[j] += x.get(i, j);
                }
            }
            for v in &mut cen {
                *v /= members.len() as f64;
            }
            for j in 0..d {
                between += members.len() as f64 * (cen[j] - global[j]).powi(2);
            }
            for &i in &members {
                for j in 0..d {
                    within += (x.get(i, j) - cen[j]).powi(2);
                }
            }
        }
        (n - k) as f64 / (k - 1) as f64 * between / within
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (FeatureMatrix, Vec<usize>, usize) {
        let k = rng.random_range(2..=10);
        let n = rng.random_range(k + 1..=200);
        let f = rng.random_range(1..=24);
        let data = (0..n * f).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
        labels.reverse();
        (FeatureMatrix::new(n, f, data, "r").unwrap(), labels, k)
    }

    #[test]
    fn hand_example_is_fifty() {
        let x = FeatureMatrix::new(4, 2, vec![0.0, 0.0, 0.0, 2.0, 10.0, 0.0, 10.0, 2.0], "x").unwrap();
        let r = ch_score(&x, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(r.score, 50.0);
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let (x, labels, k) = random_instance(&mut rng);
            let got = ch_score(&x, &labels, k).unwrap().score;
            let want = oracle(&x, &labels, k);
            assert!((got - want).abs() <= 1e-9 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn invariant_under_translation_and_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (x, labels, k) = random_instance(&mut rng);
            let base = ch_score(&x, &labels, k).unwrap().score;
            for (scale, shift) in [(3.5, 0.0), (-0.01, 0.0), (1.0, 1e3), (-7.0, -42.0)] {
                let moved: Vec<f64> = x.as_slice().iter().map(|v| v * scale + shift).collect();
                let y = FeatureMatrix::new(x.nrows(), x.ncols(), moved, "y").unwrap();
                let s = ch_score(&y, &labels, k).unwrap().score;
                assert!((s - base).abs() <= 1e-9 * base, "{s} vs {base}");
            }
        }
    }

    #[test]
    fn true_labels_beat_random_labels() {
        let centers = [vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        for seed in 0..5 {
            let (x, truth) = blobs(&centers, 50, 1.0, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let random: Vec<usize> = (0..x.nrows()).map(|i| if i < 3 { i } else { rng.random_range(0..3) }).collect();
            let good = ch_score(&x, &truth, 3).unwrap().score;
            let bad = ch_score(&x, &random, 3).unwrap().score;
            assert!(bad < good);

            let (iso, _) = blobs(&[vec![0.0, 0.0]], 150, 1.0, seed + 100);
            let near_one = ch_score(&iso, &random, 3).unwrap().score;
            assert!(near_one < 10.0, "random labels on one blob scored {near_one}");
        }
    }

    #[test]
    fn errors() {
        let x = FeatureMatrix::new(4, 1, vec![0.0, 0.0, 1.0, 1.0], "x").unwrap();
        assert!(matches!(ch_score(&x, &[0, 0, 1, 1], 2), Err(Error::Degenerate(_))));
        assert!(ch_score(&x, &[0, 0, 0, 0], 1).is_err());
        assert!(ch_score(&x, &[0, 0, 0, 0], 2).is_err());
        assert!(ch_score(&x, &[0, 1, 2, 3], 4).is_err());
        assert!(ch_score(&x, &[0, 1], 2).is_err());
    }
}
