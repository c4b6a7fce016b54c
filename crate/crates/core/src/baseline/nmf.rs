//! Nonnegative matrix factorisation `X ≈ W H` under the squared Frobenius
//! loss, solved with multiplicative updates and no regularisation.

use nalgebra::DMatrix;

use super::doc_term::DocTermMatrix;
use super::linalg::{randomized_svd, DataMatrix, RandomizedSvdParams};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone)]
pub struct NmfFit {
    /// `N × K`
    pub w: DMatrix<f64>,
    /// `K × P`
    pub h: DMatrix<f64>,
    /// `‖X − WH‖²_F` after initialisation and after each iteration.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmfInit {
    /// Nonnegative double SVD with exact zeros left in place.
    ZeroFill,
    /// Nonnegative double SVD with zeros replaced by the mean of `X`.
    #[default]
    MeanFill,
}

/// Nonnegative double SVD initialisation.
pub fn nndsvd<M: DataMatrix + ?Sized>(
    x: &M,
    k: usize,
    seed: u64,
    init: NmfInit,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut w = DMatrix::zeros(n, k);
    let mut h = DMatrix::zeros(k, p);
    let svd = randomized_svd(
        x,
        k,
        RandomizedSvdParams {
            seed,
            ..Default::default()
        },
    );
    for j in 0..svd.s.len() {
        let s = svd.s[j];
        if s <= 0.0 {
            continue;
        }
        let u = svd.u.column(j);
        let v = svd.v.column(j);
        if j == 0 {
            // The leading pair of a nonnegative matrix can be taken nonnegative.
            w.column_mut(0).copy_from(&(u.abs() * s.sqrt()));
            h.row_mut(0).copy_from(&(v.abs() * s.sqrt()).transpose());
            continue;
        }
        let up = u.map(|a| a.max(0.0));
        let un = u.map(|a| (-a).max(0.0));
        let vp = v.map(|a| a.max(0.0));
        let vn = v.map(|a| (-a).max(0.0));
        let (nup, nun, nvp, nvn) = (up.norm(), un.norm(), vp.norm(), vn.norm());
        let (mp, mn) = (nup * nvp, nun * nvn);
        let (uu, vv, sigma) = if mp > mn {
            (up / nup, vp / nvp, mp)
        } else if mn > 0.0 {
            (un / nun, vn / nvn, mn)
        } else {
            continue;
        };
        let scale = (s * sigma).sqrt();
        w.column_mut(j).copy_from(&(uu * scale));
        h.row_mut(j).copy_from(&(vv * scale).transpose());
    }
    if init == NmfInit::MeanFill {
        let mean = x.column_means().iter().sum::<f64>() / p.max(1) as f64;
        w.iter_mut()
            .chain(h.iter_mut())
            .filter(|v| **v == 0.0)
            .for_each(|v| *v = mean);
    }
    (w, h)
}

fn objective(x: &DocTermMatrix, w: &DMatrix<f64>, h: &DMatrix<f64>, x_sq: f64) -> f64 {
    // ‖X‖² − 2⟨W, X Hᵀ⟩ + ⟨WᵀW, HHᵀ⟩
    let xht = x.mul_dense(&h.transpose());
    let cross = w.component_mul(&xht).sum();
    let quad = w.tr_mul(w).component_mul(&(h * h.transpose())).sum();
    (x_sq - 2.0 * cross + quad).max(0.0)
}

fn multiplicative(target: &mut DMatrix<f64>, num: &DMatrix<f64>, den: &DMatrix<f64>) {
    for ((t, &a), &b) in target.iter_mut().zip(num.iter()).zip(den.iter()) {
        if *t > 0.0 && b > 0.0 {
            *t *= a / b;
        }
    }
}

pub fn nmf_fit(x: &DocTermMatrix, k: usize, iters: usize, seed: u64) -> Result<NmfFit> {
    nmf_fit_with(x, k, iters, seed, NmfInit::default())
}

pub fn nmf_fit_with(
    x: &DocTermMatrix,
    k: usize,
    iters: usize,
    seed: u64,
    init: NmfInit,
) -> Result<NmfFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if k == 0 || k >= n.min(p) {
        return Err(Error::invalid(format!(
            "NMF needs 0 < K < min(N, P); got K = {k} for {n}x{p}"
        )));
    }
    if let Some((i, j, v)) = x.triplets().find(|&(_, _, v)| v < 0.0) {
        return Err(Error::invalid(format!("negative entry {v} at ({i}, {j})")));
    }
    let x_sq = x.frobenius_sq();
    if x_sq == 0.0 {
        return Ok(NmfFit {
            w: DMatrix::zeros(n, k),
            h: DMatrix::zeros(k, p),
            objective: vec![0.0],
        });
    }

    let (mut w, mut h) = nndsvd(x, k, seed, init);
    let mut history = vec![objective(x, &w, &h, x_sq)];
    for _ in 0..iters {
        // W ← W ∘ (X Hᵀ) / (W H Hᵀ)
        let xht = x.mul_dense(&h.transpose());
        let den = &w * (&h * h.transpose());
        multiplicative(&mut w, &xht, &den);
        // H ← H ∘ (Wᵀ X) / (Wᵀ W H)
        let wtx = x.tmul_dense(&w).transpose();
        let den = w.tr_mul(&w) * &h;
        multiplicative(&mut h, &wtx, &den);
        history.push(objective(x, &w, &h, x_sq));
    }
    Ok(NmfFit {
        w,
        h,
        objective: history,
    })
}

/// The document factor `W` of the factorisation.
pub fn nmf_fit_transform(
    x: &DocTermMatrix,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<FeatureMatrix> {
    let fit = nmf_fit(x, k, iters, seed)?;
    let data: Vec<f64> = (0..fit.w.nrows())
        .flat_map(|i| fit.w.row(i).iter().copied().collect::<Vec<_>>())
        .collect();
    FeatureMatrix::new(fit.w.nrows(), k, data, "nmf")
}
