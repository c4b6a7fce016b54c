//! Linear reductions of a document-term (or any dense) matrix: PCA and
//! truncated SVD.

use nalgebra::{DMatrix, SymmetricEigen};

use super::linalg::{randomized_svd, Centered, DataMatrix, RandomizedSvdParams, Svd};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Above this `min(N, P)` PCA switches from an exact eigendecomposition to
/// the randomized solver on the implicitly centered matrix.
pub const EXACT_PCA_LIMIT: usize = 2000;

#[derive(Debug, Clone)]
pub struct PcaFit {
    /// `P × F`, unit columns.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
    pub total_variance: f64,
    pub mean: Vec<f64>,
}

fn to_features(m: &DMatrix<f64>, label: &str) -> Result<FeatureMatrix> {
    let rows: Vec<f64> = (0..m.nrows())
        .flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    FeatureMatrix::new(m.nrows(), m.ncols(), rows, label)
}

/// Projects onto the top-`f` principal components.
pub fn pca_reduce<M: DataMatrix + ?Sized>(x: &M, f: usize) -> Result<FeatureMatrix> {
    pca_fit_transform(x, f).map(|(m, _)| m)
}

pub fn pca_fit_transform<M: DataMatrix + ?Sized>(
    x: &M,
    f: usize,
) -> Result<(FeatureMatrix, PcaFit)> {
    let (n, p) = (x.nrows(), x.ncols());
    if f == 0 || f > n.min(p) || f >= n {
        return Err(Error::invalid(format!(
            "cannot extract {f} principal components from a {n}x{p} matrix"
        )));
    }
    let centered = Centered::new(x);
    let dof = (n - 1) as f64;
    let total_variance = centered.frobenius_sq() / dof;
    if total_variance <= 0.0 {
        return Err(Error::invalid("data has zero variance"));
    }

    let mut svd = if n.min(p) <= EXACT_PCA_LIMIT {
        exact_centered_svd(&centered.to_dense(), f)
    } else {
        randomized_svd(&centered, f, RandomizedSvdParams::default())
    };
    svd.fix_signs();
    let scores = svd.scores();
    let fit = PcaFit {
        explained_variance: svd.s.iter().map(|s| s * s / dof).collect(),
        components: svd.v,
        total_variance,
        mean: centered.means.iter().copied().collect(),
    };
    Ok((to_features(&scores, "pca")?, fit))
}

/// Top-`f` singular triplets of an already-centered dense matrix via the
/// eigendecomposition of the smaller of its two Gram matrices.
fn exact_centered_svd(xc: &DMatrix<f64>, f: usize) -> Svd {
    let (n, p) = xc.shape();
    let by_covariance = p <= n;
    let gram = if by_covariance {
        xc.tr_mul(xc)
    } else {
        xc * xc.transpose()
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let order = &order[..f];
    let s: Vec<f64> = order
        .iter()
        .map(|&j| eig.eigenvalues[j].max(0.0).sqrt())
        .collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), f, |i, j| {
        eig.eigenvectors[(i, order[j])]
    });

    if by_covariance {
        let v = vecs;
        let mut u = xc * &v;
        for (j, &sj) in s.iter().enumerate() {
            if sj > 0.0 {
                u.column_mut(j).unscale_mut(sj);
            }
        }
        Svd { u, s, v }
    } else {
        let u = vecs;
        let mut v = xc.tr_mul(&u);
        for (j, &sj) in s.iter().enumerate() {
            if sj > 0.0 {
                v.column_mut(j).unscale_mut(sj);
            }
        }
        Svd { u, s, v }
    }
}

/// `U_F Σ_F` of the uncentered matrix, computed with the seeded randomized
/// solver (10 power iterations).
pub fn tsvd_reduce<M: DataMatrix + ?Sized>(x: &M, f: usize, seed: u64) -> Result<FeatureMatrix> {
    tsvd_fit(x, f, seed).and_then(|svd| to_features(&svd.scores(), "tsvd"))
}

pub fn tsvd_fit<M: DataMatrix + ?Sized>(x: &M, f: usize, seed: u64) -> Result<Svd> {
    let (n, p) = (x.nrows(), x.ncols());
    if f == 0 || f >= n.min(p) {
        return Err(Error::invalid(format!(
            "truncated SVD needs 0 < F < min(N, P); got F = {f} for {n}x{p}"
        )));
    }
    Ok(randomized_svd(
        x,
        f,
        RandomizedSvdParams {
            seed,
            ..Default::default()
        },
    ))
}
