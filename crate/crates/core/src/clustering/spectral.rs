use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::{kmeans, Algorithm, ClusterResult, Points};
use crate::baseline::linalg::{randomized_svd, RandomizedSvdParams};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Largest N for which the full Laplacian eigendecomposition is computed;
/// beyond it the leading eigenvectors come from subspace iteration.
pub const EXACT_EIGEN_LIMIT: usize = 2000;

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("kernel width gamma must be positive, got {gamma}")))
    }
}

/// `A_ij = exp(−γ‖x_i − x_j‖²)` with a zero diagonal.
pub fn affinity<P: Points + ?Sized>(x: &P, gamma: f64) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    let n = x.len();
    let mut a = DMatrix::zeros(n, n);
    // Column-major storage: column j holds A_·j.
    a.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                if i != j {
                    *v = (-gamma * x.sq_dist(i, j)).exp();
                }
            }
        });
    Ok(a)
}

fn inverse_sqrt_degrees(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    a.column_iter()
        .enumerate()
        .map(|(i, c)| {
            let d = c.sum();
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::IsolatedPoint(i))
            }
        })
        .collect()
}

/// Scales `A` in place to `D^{−1/2} A D^{−1/2}`.
fn normalize_affinity(a: &mut DMatrix<f64>) -> Result<()> {
    let s = inverse_sqrt_degrees(a)?;
    let n = a.nrows();
    a.as_mut_slice()
        .par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(j, col)| {
            for (i, v) in col.iter_mut().enumerate() {
                *v *= s[i] * s[j];
            }
        });
    Ok(())
}

/// `L_sym = I − D^{−1/2} A D^{−1/2}`.
pub fn normalized_laplacian(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut m = a.clone();
    normalize_affinity(&mut m)?;
    Ok(DMatrix::identity(a.nrows(), a.ncols()) - m)
}

/// Rows of the `k` bottom eigenvectors of `L_sym`, each scaled to unit length.
pub fn spectral_embedding<P: Points + ?Sized>(x: &P, k: usize, gamma: f64, seed: u64) -> Result<FeatureMatrix> {
    let n = x.len();
    let mut m = affinity(x, gamma)?;
    normalize_affinity(&mut m)?;
    let vecs = if n <= EXACT_EIGEN_LIMIT {
        // Bottom of L_sym = top of the normalized affinity.
        let eig = SymmetricEigen::new(m);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        DMatrix::from_fn(n, k, |i, j| eig.eigenvectors[(i, order[j])])
    } else {
        // Shifting by I makes the operator positive semidefinite, so its
        // leading singular vectors are the wanted eigenvectors.
        for i in 0..n {
            m[(i, i)] += 1.0;
        }
        let params = RandomizedSvdParams {
            tol: 1e-8,
            max_power_iters: 100,
            seed,
            ..RandomizedSvdParams::default()
        };
        randomized_svd(&m, k, params).u
    };
    let mut rows = Vec::with_capacity(n * k);
    for i in 0..n {
        let r: Vec<f64> = (0..k).map(|j| vecs[(i, j)]).collect();
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        rows.extend(r.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }));
    }
    FeatureMatrix::new(n, k, rows, "spectral-embedding")
}

/// Gaussian-kernel spectral clustering; `gamma` defaults to `1/F`.
pub fn spectral<P: Points + ?Sized>(x: &P, k: usize, gamma: Option<f64>, seed: u64) -> Result<ClusterResult> {
    let n = x.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("{k} clusters requested for {n} points")));
    }
    let gamma = gamma.unwrap_or(1.0 / x.dim().max(1) as f64);
    check_gamma(gamma)?;
    let labels: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        let emb = spectral_embedding(x, k, gamma, seed)?;
        kmeans(&emb, k, seed)?.labels
    };
    Ok(ClusterResult {
        objective: super::wcss(x, &labels, k),
        labels,
        k,
        algorithm: Algorithm::Spectral,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::blobs;
    use super::super::{canonical_labels, rand_index};
    use super::*;

    #[test]
    fn two_tight_groups_split_perfectly() {
        let x = FeatureMatrix::new(
            6,
            1,
            vec![0.0, 0.1, 0.05, 100.0, 100.1, 100.05],
            "x",
        )
        .unwrap();
        let r = spectral(&x, 2, Some(1.0), 0).unwrap();
        assert_eq!(canonical_labels(&r.labels), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn k_equal_n_is_one_point_per_cluster() {
        let x = FeatureMatrix::new(3, 1, vec![0.0, 1.0, 2.0], "x").unwrap();
        let r = spectral(&x, 3, None, 0).unwrap();
        assert_eq!(r.labels, vec![0, 1, 2]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn laplacian_spectrum_lies_in_zero_two() {
        let (x, _) = blobs(&[vec![0.0; 4], vec![3.0; 4]], 25, 1.0, 5);
        let a = affinity(&x, 0.3).unwrap();
        assert_eq!(a, a.transpose());
        assert!(a.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let l = normalized_laplacian(&a).unwrap();
        let eig = SymmetricEigen::new(l);
        for &e in eig.eigenvalues.iter() {
            assert!((-1e-9..=2.0 + 1e-9).contains(&e), "eigenvalue {e}");
        }
    }

    #[test]
    fn isolated_point_is_named() {
        let x = FeatureMatrix::new(3, 1, vec![0.0, 0.1, 1000.0], "x").unwrap();
        match spectral(&x, 2, Some(1.0), 0) {
            Err(Error::IsolatedPoint(2)) => {}
            other => panic!("expected isolated point 2, got {other:?}"),
        }
        assert!(spectral(&x, 2, Some(0.0), 0).is_err());
        assert!(spectral(&x, 2, Some(-1.0), 0).is_err());
    }

    #[test]
    fn iterative_path_matches_exact_embedding_clusters() {
        let (x, truth) = blobs(&[vec![0.0; 3], vec![8.0; 3], vec![-8.0, 0.0, 8.0]], 700, 1.0, 6);
        assert!(x.nrows() > EXACT_EIGEN_LIMIT);
        let r = spectral(&x, 3, Some(0.05), 1).unwrap();
        assert_eq!(rand_index(&r.labels, &truth).unwrap(), 1.0);
    }

    #[test]
    fn permutation_invariance() {
        let (x, _) = blobs(&[vec![0.0, 0.0], vec![6.0, 0.0], vec![0.0, 6.0]], 20, 1.0, 8);
        let n = x.nrows();
        let perm: Vec<usize> = (0..n).rev().collect();
        let a = spectral(&x, 3, Some(0.2), 2).unwrap();
        let b = spectral(&x.select_rows(&perm), 3, Some(0.2), 2).unwrap();
        let back: Vec<usize> = (0..n).map(|i| b.labels[n - 1 - i]).collect();
        assert_eq!(rand_index(&a.labels, &back).unwrap(), 1.0);
    }
}
