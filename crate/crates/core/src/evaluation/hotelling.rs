use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub t2: f64,
    /// `None` when the F approximation has no positive denominator degrees
    /// of freedom (`n_A + n_B − p − 1 ≤ 0`).
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub df1: usize,
    pub df2: i64,
}

fn mean_and_scatter(x: &FeatureMatrix) -> (DVector<f64>, DMatrix<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    let mut mean = DVector::zeros(p);
    for r in x.rows() {
        mean += DVector::from_column_slice(r);
    }
    mean /= n as f64;
    let mut s = DMatrix::zeros(p, p);
    for r in x.rows() {
        let d = DVector::from_column_slice(r) - &mean;
        s.ger(1.0, &d, &d, 1.0);
    }
    (mean, s)
}

/// Upper tail of the F(d1, d2) distribution.
fn f_survival(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

/// Two-sample Hotelling T² with pooled covariance. A singular pooled
/// covariance is an error unless `pseudo_inverse` is set.
pub fn hotelling_t2(a: &FeatureMatrix, b: &FeatureMatrix, pseudo_inverse: bool) -> Result<HotellingResult> {
    let p = a.ncols();
    if b.ncols() != p {
        return Err(Error::shape(format!("{p} features"), b.ncols()));
    }
    let (na, nb) = (a.nrows(), b.nrows());
    if na < 1 || nb < 1 || na + nb < 3 {
        return Err(Error::invalid(format!("samples of {na} and {nb} rows are too small")));
    }
    if p == 0 {
        return Err(Error::invalid("samples have no features"));
    }
    let (ma, sa) = mean_and_scatter(a);
    let (mb, sb) = mean_and_scatter(b);
    let pooled = (sa + sb) / (na + nb - 2) as f64;
    let diff = ma - mb;

    let full_rank = na + nb - 2 > p;
    let solved = if full_rank {
        pooled.clone().cholesky().and_then(|c| {
            // Rounding lets Cholesky succeed on numerically singular input;
            // reject pivots that lost all but ~12 digits of their variance.
            let l = c.l_dirty();
            let ok = (0..p).all(|i| l[(i, i)] * l[(i, i)] > 1e-12 * pooled[(i, i)]);
            ok.then(|| c.solve(&diff))
        })
    } else {
        None
    };
    let x = match solved {
        Some(x) => x,
        None if pseudo_inverse => {
            let scale = pooled.amax().max(f64::MIN_POSITIVE);
            let pinv = pooled
                .pseudo_inverse(scale * 1e-12)
                .map_err(|e| Error::Numerical(format!("pseudo-inverse failed: {e}")))?;
            pinv * &diff
        }
        None => {
            return Err(Error::Numerical(
                "pooled covariance is singular; enable the pseudo-inverse to proceed".into(),
            ))
        }
    };
    let t2 = (na * nb) as f64 / (na + nb) as f64 * diff.dot(&x);
    let t2 = t2.max(0.0);
    let df2 = (na + nb) as i64 - p as i64 - 1;
    let (f_stat, p_value) = if df2 > 0 {
        let f = t2 * df2 as f64 / (p as f64 * (na + nb - 2) as f64);
        (Some(f), Some(f_survival(f, p as f64, df2 as f64)))
    } else {
        (None, None)
    };
    Ok(HotellingResult {
        t2,
        f_stat,
        p_value,
        df1: p,
        df2,
    })
}
