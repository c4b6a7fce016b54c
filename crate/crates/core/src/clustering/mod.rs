//! k-means, Ward agglomerative and spectral clustering over dense or sparse
//! rows.

mod kmeans;
mod spectral;
mod ward;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::DocTermMatrix;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub use kmeans::{kmeans, kmeans_fit, KMeansFit, KMeansParams};
pub use spectral::{affinity, normalized_laplacian, spectral, spectral_embedding, EXACT_EIGEN_LIMIT};
pub use ward::{ward, ward_linkage, Dendrogram, Merge, MAX_WARD_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    Ward,
    Spectral,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::KMeans, Algorithm::Ward, Algorithm::Spectral];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Ward => "ward",
            Algorithm::Spectral => "spectral",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::KMeans),
            "ward" => Ok(Algorithm::Ward),
            "spectral" => Ok(Algorithm::Spectral),
            other => Err(Error::invalid(format!("unknown clustering algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub labels: Vec<usize>,
    pub k: usize,
    pub algorithm: Algorithm,
    /// Within-cluster sum of squares in the input space.
    pub objective: f64,
}

impl ClusterResult {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row_index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{i},{l}\n"));
        }
        out
    }
}

/// Row access shared by the clustering algorithms and the scoring code.
pub trait Points: Sync {
    fn len(&self) -> usize;
    fn dim(&self) -> usize;
    fn sq_norm(&self, i: usize) -> f64;
    fn dot_dense(&self, i: usize, v: &[f64]) -> f64;
    fn dot(&self, i: usize, j: usize) -> f64;
    /// `acc += x_i`
    fn add_to(&self, i: usize, acc: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `‖x_i − c‖²` given `c_sq = ‖c‖²`.
    fn sq_dist_dense(&self, i: usize, c: &[f64], c_sq: f64) -> f64 {
        (self.sq_norm(i) - 2.0 * self.dot_dense(i, c) + c_sq).max(0.0)
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        (self.sq_norm(i) + self.sq_norm(j) - 2.0 * self.dot(i, j)).max(0.0)
    }
}

impl Points for FeatureMatrix {
    fn len(&self) -> usize {
        self.nrows()
    }
    fn dim(&self) -> usize {
        self.ncols()
    }
    fn sq_norm(&self, i: usize) -> f64 {
        self.row(i).iter().map(|v| v * v).sum()
    }
    fn dot_dense(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()
    }
    fn dot(&self, i: usize, j: usize) -> f64 {
        self.dot_dense(i, self.row(j))
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        acc.iter_mut().zip(self.row(i)).for_each(|(a, b)| *a += b);
    }
    fn sq_dist_dense(&self, i: usize, c: &[f64], _c_sq: f64) -> f64 {
        self.row(i).iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    }
    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.sq_dist_dense(i, self.row(j), 0.0)
    }
}

impl Points for DocTermMatrix {
    fn len(&self) -> usize {
        self.nrows()
    }
    fn dim(&self) -> usize {
        self.ncols()
    }
    fn sq_norm(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v * v).sum()
    }
    fn dot_dense(&self, i: usize, v: &[f64]) -> f64 {
        self.row(i).map(|(j, x)| x * v[j]).sum()
    }
    fn dot(&self, i: usize, j: usize) -> f64 {
        let mut a = self.row(i).peekable();
        let mut b = self.row(j).peekable();
        let mut s = 0.0;
        while let (Some(&(ca, va)), Some(&(cb, vb))) = (a.peek(), b.peek()) {
            match ca.cmp(&cb) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    s += va * vb;
                    a.next();
                    b.next();
                }
            }
        }
        s
    }
    fn add_to(&self, i: usize, acc: &mut [f64]) {
        for (j, v) in self.row(i) {
            acc[j] += v;
        }
    }
}

pub(crate) fn check_k<P: Points + ?Sized>(x: &P, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 clusters, got {k}")));
    }
    if k >= x.len() {
        return Err(Error::invalid(format!(
            "{k} clusters requested for {} points; need fewer clusters than points",
            x.len()
        )));
    }
    Ok(())
}

/// Cluster means, `k × dim` row-major, plus member counts.
pub fn centroids<P: Points + ?Sized>(x: &P, labels: &[usize], k: usize) -> (Vec<f64>, Vec<usize>) {
    let d = x.dim();
    let mut c = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        x.add_to(i, &mut c[l * d..(l + 1) * d]);
        counts[l] += 1;
    }
    for (l, &n) in counts.iter().enumerate() {
        if n > 0 {
            c[l * d..(l + 1) * d].iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (c, counts)
}

/// Within-cluster sum of squared distances to the cluster means.
pub fn wcss<P: Points + ?Sized>(x: &P, labels: &[usize], k: usize) -> f64 {
    let d = x.dim();
    let (c, _) = centroids(x, labels, k);
    let c_sq: Vec<f64> = c.chunks(d.max(1)).map(|r| r.iter().map(|v| v * v).sum()).collect();
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| x.sq_dist_dense(i, &c[l * d..(l + 1) * d], c_sq[l]))
        .sum()
}

/// Renumbers labels in order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Fraction of point pairs on which two labelings agree (same cluster in
/// both, or different clusters in both).
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("{} labels", a.len()), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let pairs = |m: u64| m * m.saturating_sub(1) / 2;
    let mut cells = std::collections::HashMap::new();
    let mut rows = std::collections::HashMap::new();
    let mut cols = std::collections::HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0u64) += 1;
        *rows.entry(x).or_insert(0u64) += 1;
        *cols.entry(y).or_insert(0u64) += 1;
    }
    let same_both: u64 = cells.values().map(|&m| pairs(m)).sum();
    let same_a: u64 = rows.values().map(|&m| pairs(m)).sum();
    let same_b: u64 = cols.values().map(|&m| pairs(m)).sum();
    let total = pairs(n as u64);
    let agree = total + 2 * same_both - same_a - same_b;
    Ok(agree as f64 / total as f64)
}

/// `m` distinct indices from `0..n`, sorted; all of them when `m ≥ n`.
pub fn subsample_indices(n: usize, m: usize, seed: u64) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Runs one algorithm with its default settings.
pub fn cluster<P: Points + ?Sized>(x: &P, algorithm: Algorithm, k: usize, seed: u64) -> Result<ClusterResult> {
    match algorithm {
        Algorithm::KMeans => kmeans(x, k, seed),
        Algorithm::Ward => ward(x, k),
        Algorithm::Spectral => spectral(x, k, None, seed),
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rand_index_examples() {
        assert_eq!(rand_index(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
        // pairs: (01) same/same, (02) diff/diff, (12) diff/same → 2/3
        assert!((rand_index(&[0, 0, 1], &[0, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(rand_index(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn sparse_and_dense_points_agree() {
        let bow = DocTermMatrix::from_triplets(
            3,
            vec!["a".into(), "b".into(), "c".into()],
            vec![(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0), (2, 0, 1.0), (2, 1, 1.0), (2, 2, 1.0)],
            crate::baseline::Weighting::Counts,
        )
        .unwrap();
        let dense = FeatureMatrix::new(3, 3, bow.to_dense().transpose().as_slice().to_vec(), "d").unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((bow.sq_dist(i, j) - dense.sq_dist(i, j)).abs() < 1e-12);
            }
        }
        assert_eq!(wcss(&bow, &[0, 1, 1], 2), wcss(&dense, &[0, 1, 1], 2));
    }

    #[test]
    fn subsample_is_sorted_and_distinct() {
        let s = subsample_indices(100, 10, 3);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, subsample_indices(100, 10, 3));
        assert_eq!(subsample_indices(5, 10, 0), vec![0, 1, 2, 3, 4]);
    }

    proptest! {
        #[test]
        fn rand_index_ignores_renaming(labels in prop::collection::vec(0usize..4, 2..40)) {
            let renamed: Vec<usize> = labels.iter().map(|l| 10 - l).collect();
            prop_assert_eq!(rand_index(&labels, &renamed).unwrap(), 1.0);
            prop_assert_eq!(canonical_labels(&labels), canonical_labels(&renamed));
        }
    }
}
