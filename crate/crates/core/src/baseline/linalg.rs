//! Matrix access shared by the reducers, and a seeded randomized SVD.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::doc_term::DocTermMatrix;
use crate::features::FeatureMatrix;

/// What the reducers need from an input matrix, dense or sparse.
pub trait DataMatrix {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn to_dense(&self) -> DMatrix<f64>;
    /// `X · B`
    fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64>;
    /// `Xᵀ · B`
    fn tmul(&self, b: &DMatrix<f64>) -> DMatrix<f64>;
    fn column_means(&self) -> Vec<f64>;
    fn frobenius_sq(&self) -> f64;
}

impl DataMatrix for DocTermMatrix {
    fn nrows(&self) -> usize {
        DocTermMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        DocTermMatrix::ncols(self)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        DocTermMatrix::to_dense(self)
    }
    fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.mul_dense(b)
    }
    fn tmul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.tmul_dense(b)
    }
    fn column_means(&self) -> Vec<f64> {
        DocTermMatrix::column_means(self)
    }
    fn frobenius_sq(&self) -> f64 {
        DocTermMatrix::frobenius_sq(self)
    }
}

impl DataMatrix for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
    fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self * b
    }
    fn tmul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(b)
    }
    fn column_means(&self) -> Vec<f64> {
        self.row_mean().iter().copied().collect()
    }
    fn frobenius_sq(&self) -> f64 {
        self.norm_squared()
    }
}

impl DataMatrix for FeatureMatrix {
    fn nrows(&self) -> usize {
        FeatureMatrix::nrows(self)
    }
    fn ncols(&self) -> usize {
        FeatureMatrix::ncols(self)
    }
    fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.nrows(), self.ncols(), self.as_slice())
    }
    fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.to_dense() * b
    }
    fn tmul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.to_dense().tr_mul(b)
    }
    fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ncols()];
        for r in self.rows() {
            m.iter_mut().zip(r).for_each(|(a, b)| *a += b);
        }
        let n = self.nrows().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
    fn frobenius_sq(&self) -> f64 {
        self.as_slice().iter().map(|v| v * v).sum()
    }
}

/// `X − 1·meanᵀ` without materialising it.
pub struct Centered<'a, M: DataMatrix + ?Sized> {
    pub inner: &'a M,
    pub means: DVector<f64>,
}

impl<'a, M: DataMatrix + ?Sized> Centered<'a, M> {
    pub fn new(inner: &'a M) -> Self {
        let means = DVector::from_vec(inner.column_means());
        Centered { inner, means }
    }
}

impl<M: DataMatrix + ?Sized> DataMatrix for Centered<'_, M> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn to_dense(&self) -> DMatrix<f64> {
        let mut d = self.inner.to_dense();
        for mut row in d.row_iter_mut() {
            row -= self.means.transpose();
        }
        d
    }
    fn mul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.inner.mul(b);
        let shift = self.means.transpose() * b;
        for mut row in out.row_iter_mut() {
            row -= &shift;
        }
        out
    }
    fn tmul(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = self.inner.tmul(b);
        let col_sums = b.row_sum();
        out -= &self.means * col_sums;
        out
    }
    fn column_means(&self) -> Vec<f64> {
        vec![0.0; self.ncols()]
    }
    fn frobenius_sq(&self) -> f64 {
        (self.inner.frobenius_sq() - self.nrows() as f64 * self.means.norm_squared()).max(0.0)
    }
}

/// Truncated factorisation `X ≈ U diag(s) Vᵀ` with components in decreasing
/// singular-value order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// Flips each component so its largest-magnitude loading in `v` is
    /// positive (first index wins ties).
    pub fn fix_signs(&mut self) {
        for j in 0..self.s.len() {
            let col = self.v.column(j);
            let mut best = 0;
            for i in 1..col.len() {
                if col[i].abs() > col[best].abs() {
                    best = i;
                }
            }
            if col[best] < 0.0 {
                self.v.column_mut(j).neg_mut();
                self.u.column_mut(j).neg_mut();
            }
        }
    }

    /// `U diag(s)`.
    pub fn scores(&self) -> DMatrix<f64> {
        let mut out = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            out.column_mut(j).scale_mut(*s);
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RandomizedSvdParams {
    pub oversamples: usize,
    /// Minimum number of power iterations.
    pub power_iters: usize,
    /// Keep iterating past `power_iters` until every retained Ritz pair has
    /// residual `‖X v − σ u‖ ≤ tol · σ₁`, or `max_power_iters` is reached.
    pub tol: f64,
    pub max_power_iters: usize,
    pub seed: u64,
}

impl Default for RandomizedSvdParams {
    fn default() -> Self {
        RandomizedSvdParams {
            oversamples: 10,
            power_iters: 10,
            tol: 1e-10,
            max_power_iters: 300,
            seed: 0,
        }
    }
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// SVD of `X` restricted to the range of `q`, top `k` triplets.
fn project<M: DataMatrix + ?Sized>(x: &M, q: &DMatrix<f64>, k: usize) -> Svd {
    // B = Qᵀ X, handled as Bᵀ = Xᵀ Q (p × l, thin).
    let bt = x.tmul(q);
    let svd = bt.svd(true, true);
    let (vb, sb, ub_t) = (
        svd.u.expect("requested"),
        svd.singular_values,
        svd.v_t.expect("requested"),
    );
    // Bᵀ = Vb Σ Ubᵀ  ⇒  X ≈ (Q Ub) Σ Vbᵀ
    let mut order: Vec<usize> = (0..sb.len()).collect();
    order.sort_by(|&a, &b| sb[b].total_cmp(&sb[a]));
    let order = &order[..k.min(order.len())];
    let qu = q * ub_t.transpose();
    Svd {
        u: DMatrix::from_fn(q.nrows(), order.len(), |i, j| qu[(i, order[j])]),
        s: order.iter().map(|&j| sb[j]).collect(),
        v: DMatrix::from_fn(vb.nrows(), order.len(), |i, j| vb[(i, order[j])]),
    }
}

fn max_residual<M: DataMatrix + ?Sized>(x: &M, svd: &Svd) -> f64 {
    let xv = x.mul(&svd.v);
    let mut worst: f64 = 0.0;
    for (j, &s) in svd.s.iter().enumerate() {
        let r = (xv.column(j) - svd.u.column(j) * s).norm();
        worst = worst.max(r);
    }
    worst
}

/// Randomized range finder with subspace (power) iteration followed by an
/// exact SVD of the small projected matrix.
pub fn randomized_svd<M: DataMatrix + ?Sized>(x: &M, k: usize, params: RandomizedSvdParams) -> Svd {
    let (n, p) = (x.nrows(), x.ncols());
    let l = (k + params.oversamples.max(k)).min(n.min(p));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let omega = DMatrix::from_fn(p, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormalize(x.mul(&omega));
    let mut iters = 0;
    loop {
        if iters >= params.power_iters {
            let svd = project(x, &q, k);
            let top = svd.s.first().copied().unwrap_or(0.0);
            if iters >= params.max_power_iters || max_residual(x, &svd) <= params.tol * top {
                let mut svd = svd;
                svd.fix_signs();
                return svd;
            }
        }
        let z = orthonormalize(x.tmul(&q));
        q = orthonormalize(x.mul(&z));
        iters += 1;
    }
}

/// Exact thin SVD through a dense decomposition.
pub fn dense_svd(x: &DMatrix<f64>, k: usize) -> Svd {
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let order = &order[..k.min(order.len())];
    let mut out = Svd {
        u: DMatrix::from_fn(x.nrows(), order.len(), |i, j| u[(i, order[j])]),
        s: order.iter().map(|&j| s[j]).collect(),
        v: DMatrix::from_fn(x.ncols(), order.len(), |i, j| vt[(order[j], i)]),
    };
    out.fix_signs();
    out
}
