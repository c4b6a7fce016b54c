use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_k, wcss, Algorithm, ClusterResult, Points};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub n_init: usize,
    pub max_iter: usize,
    /// Convergence threshold on the summed squared centroid shift, relative
    /// to the mean per-feature variance of the data.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(seed: u64) -> Self {
        KMeansParams {
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    /// `k × dim`, row-major.
    pub centroids: Vec<f64>,
    pub wcss: f64,
    pub n_iter: usize,
    /// Objective after every assignment step of the winning restart.
    pub history: Vec<f64>,
}

pub fn kmeans<P: Points + ?Sized>(x: &P, k: usize, seed: u64) -> Result<ClusterResult> {
    let fit = kmeans_fit(x, k, KMeansParams::new(seed))?;
    Ok(ClusterResult {
        labels: fit.labels,
        k,
        algorithm: Algorithm::KMeans,
        objective: fit.wcss,
    })
}

/// Lloyd iterations from k-means++ seeds; best of `n_init` restarts.
pub fn kmeans_fit<P: Points + ?Sized>(x: &P, k: usize, params: KMeansParams) -> Result<KMeansFit> {
    check_k(x, k)?;
    let tol = params.tol * mean_variance(x);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<KMeansFit> = None;
    for _ in 0..params.n_init.max(1) {
        let init = plus_plus(x, k, &mut rng);
        let fit = lloyd(x, k, init, params.max_iter, tol);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn mean_variance<P: Points + ?Sized>(x: &P) -> f64 {
    let (n, d) = (x.len(), x.dim());
    let mut mean = vec![0.0; d];
    let mut sq = 0.0;
    for i in 0..n {
        x.add_to(i, &mut mean);
        sq += x.sq_norm(i);
    }
    let mean_sq: f64 = mean.iter().map(|m| (m / n as f64).powi(2)).sum();
    ((sq / n as f64 - mean_sq) / d.max(1) as f64).max(0.0)
}

fn row_of<P: Points + ?Sized>(x: &P, i: usize) -> Vec<f64> {
    let mut r = vec![0.0; x.dim()];
    x.add_to(i, &mut r);
    r
}

/// k-means++ seeding: each next centre is drawn with probability
/// proportional to the squared distance to the nearest chosen centre.
fn plus_plus<P: Points + ?Sized>(x: &P, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = x.len();
    let mut centers = row_of(x, rng.random_range(0..n));
    let first_sq: f64 = centers.iter().map(|v| v * v).sum();
    let mut nearest: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| x.sq_dist_dense(i, &centers, first_sq))
        .collect();
    for _ in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row_of(x, pick);
        let c_sq: f64 = c.iter().map(|v| v * v).sum();
        nearest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, d)| *d = d.min(x.sq_dist_dense(i, &c, c_sq)));
        centers.extend(c);
    }
    centers
}

fn assign<P: Points + ?Sized>(x: &P, centroids: &[f64], k: usize) -> Vec<(usize, f64)> {
    let d = x.dim();
    let c_sq: Vec<f64> = centroids
        .chunks(d.max(1))
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for c in 0..k {
                let dist = x.sq_dist_dense(i, &centroids[c * d..(c + 1) * d], c_sq[c]);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            best
        })
        .collect()
}

fn lloyd<P: Points + ?Sized>(x: &P, k: usize, mut centroids: Vec<f64>, max_iter: usize, tol: f64) -> KMeansFit {
    let (n, d) = (x.len(), x.dim());
    let mut history = Vec::new();
    let mut labels = vec![0usize; n];
    let mut n_iter = 0;
    loop {
        let assigned = assign(x, &centroids, k);
        for (l, a) in labels.iter_mut().zip(&assigned) {
            *l = a.0;
        }
        history.push(assigned.iter().map(|a| a.1).sum());
        if n_iter >= max_iter {
            break;
        }
        n_iter += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            x.add_to(i, &mut sums[l * d..(l + 1) * d]);
            counts[l] += 1;
        }
        // An empty cluster takes over the point farthest from its centre.
        let mut dists: Vec<f64> = assigned.iter().map(|a| a.1).collect();
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                .expect("k < n leaves a cluster with two members");
            let old = labels[far];
            let row = row_of(x, far);
            sums[old * d..(old + 1) * d]
                .iter_mut()
                .zip(&row)
                .for_each(|(s, v)| *s -= v);
            counts[old] -= 1;
            sums[c * d..(c + 1) * d].copy_from_slice(&row);
            counts[c] = 1;
            labels[far] = c;
            dists[far] = 0.0;
        }

        let mut shift = 0.0;
        for c in 0..k {
            let m = &mut sums[c * d..(c + 1) * d];
            m.iter_mut().for_each(|v| *v /= counts[c] as f64);
            shift += m
                .iter()
                .zip(&centroids[c * d..(c + 1) * d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        centroids = sums;
        if shift <= tol {
            let assigned = assign(x, &centroids, k);
            for (l, a) in labels.iter_mut().zip(&assigned) {
                *l = a.0;
            }
            history.push(assigned.iter().map(|a| a.1).sum());
            break;
        }
    }
    // The final assignment can in principle empty a cluster; recompute
    // means from the labels that are actually returned.
    ensure_nonempty(x, &mut labels, k);
    let wcss = wcss(x, &labels, k);
    let (centroids, _) = super::centroids(x, &labels, k);
    KMeansFit {
        labels,
        centroids,
        wcss,
        n_iter,
        history,
    }
}

fn ensure_nonempty<P: Points + ?Sized>(x: &P, labels: &mut [usize], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let (cent, _) = super::centroids(x, labels, k);
        let d = x.dim();
        let dist = |i: usize| {
            let c = &cent[labels[i] * d..(labels[i] + 1) * d];
            x.sq_dist_dense(i, c, c.iter().map(|v| v * v).sum())
        };
        let far = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(b.cmp(&a)))
            .expect("k < n");
        labels[far] = empty;
    }
}
