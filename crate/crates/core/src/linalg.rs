//! Small dense least-squares helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("design matrix is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error("not enough observations: {nobs} rows for {cols} columns")]
    Underdetermined { nobs: usize, cols: usize },
    #[error("constraint system is singular")]
    SingularConstraint,
}

/// Relative singular-value cut-off used to declare exact collinearity.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub resid: DVector<f64>,
    pub ssr: f64,
    pub nobs: usize,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
}

impl OlsFit {
    pub fn k(&self) -> usize {
        self.coef.len()
    }

    /// `SSR / (n - k)`.
    pub fn sigma2(&self) -> f64 {
        self.ssr / (self.nobs - self.k()) as f64
    }

    pub fn se(&self, j: usize) -> f64 {
        (self.sigma2() * self.xtx_inv[(j, j)]).sqrt()
    }

    pub fn t_ratio(&self, j: usize) -> f64 {
        self.coef[j] / self.se(j)
    }
}

/// Ordinary least squares through an SVD so that exact collinearity is
/// reported instead of producing garbage.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit, LinalgError> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(LinalgError::Underdetermined { nobs: n, cols: k });
    }
    if k == 0 {
        let ssr = y.norm_squared();
        return Ok(OlsFit {
            coef: DVector::zeros(0),
            resid: y.clone(),
            ssr,
            nobs: n,
            xtx_inv: DMatrix::zeros(0, 0),
        });
    }
    // Column scaling keeps the rank test meaningful when regressors live on
    // very different scales (a constant next to a cumulative level, say).
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    for (j, s) in scales.iter().enumerate() {
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    if rank < k || smax == 0.0 {
        return Err(LinalgError::RankDeficient { rank, cols: k });
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let uty = u.transpose() * y;
    let mut tmp = DVector::zeros(k);
    for i in 0..k {
        tmp[i] = uty[i] / svd.singular_values[i];
    }
    let coef_s = vt.transpose() * tmp;
    let mut inv_s = DMatrix::zeros(k, k);
    for i in 0..k {
        let si = svd.singular_values[i];
        let vi = vt.row(i).transpose();
        inv_s += (&vi * vi.transpose()) / (si * si);
    }
    let mut coef = coef_s;
    let mut xtx_inv = inv_s;
    for i in 0..k {
        coef[i] /= scales[i];
        for j in 0..k {
            xtx_inv[(i, j)] /= scales[i] * scales[j];
        }
    }
    let resid = y - x * &coef;
    let ssr = resid.norm_squared();
    Ok(OlsFit {
        coef,
        resid,
        ssr,
        nobs: n,
        xtx_inv,
    })
}

/// Residuals of regressing each column of `y` on `x` (or `y` itself when `x`
/// has no columns).
pub fn partial_out(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    if x.ncols() == 0 {
        return Ok(y.clone());
    }
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for j in 0..y.ncols() {
        let fit = ols(x, &y.column(j).into_owned())?;
        out.set_column(j, &fit.resid);
    }
    Ok(out)
}

/// Minimises `||y - X b||^2` subject to `a' b = c` (when given) by solving
/// the bordered normal equations. Returns `b`.
pub fn constrained_ls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    constraint: Option<(&DVector<f64>, f64)>,
) -> Result<DVector<f64>, LinalgError> {
    let k = x.ncols();
    let Some((a, c)) = constraint else {
        return ols(x, y).map(|f| f.coef);
    };
    // Scale columns so the bordered system is well conditioned.
    let scales: Vec<f64> = (0..k)
        .map(|j| {
            let s = x.column(j).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut xs = x.clone();
    let mut a_s = a.clone();
    for j in 0..k {
        xs.column_mut(j).scale_mut(1.0 / scales[j]);
        a_s[j] /= scales[j];
    }
    let a_norm = a_s.norm();
    if a_norm == 0.0 {
        return Err(LinalgError::SingularConstraint);
    }
    let a_s = a_s / a_norm;
    let c_s = c / a_norm;
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    kkt.view_mut((0, 0), (k, k))
        .copy_from(&(xs.transpose() * &xs));
    kkt.view_mut((0, k), (k, 1)).copy_from(&a_s);
    kkt.view_mut((k, 0), (1, k)).copy_from(&a_s.transpose());
    let mut rhs = DVector::zeros(k + 1);
    rhs.rows_mut(0, k).copy_from(&(xs.transpose() * y));
    rhs[k] = c_s;

    // The bordered matrix is nonsingular iff X has full rank on the null
    // space of a'. Check that through the projected Gram matrix.
    let proj = DMatrix::identity(k, k) - &a_s * a_s.transpose();
    let xp = &xs * &proj;
    let sv = xp.singular_values();
    let smax = sv.max();
    let rank = sv
        .iter()
        .filter(|&&s| s > RANK_TOL * smax.max(1e-300))
        .count();
    if k > 0 && rank + 1 < k {
        return Err(LinalgError::RankDeficient {
            rank: rank + 1,
            cols: k,
        });
    }
    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(LinalgError::SingularConstraint)?;
    let mut b = sol.rows(0, k).into_owned();
    for j in 0..k {
        b[j] /= scales[j];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_line() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(10, |i, _| 3.0 + 0.5 * i as f64);
        let f = ols(&x, &y).unwrap();
        assert!((f.coef[0] - 3.0).abs() < 1e-12);
        assert!((f.coef[1] - 0.5).abs() < 1e-12);
        assert!(f.ssr < 1e-20);
    }

    #[test]
    fn ols_flags_collinear() {
        let x = DMatrix::from_fn(10, 2, |_, _| 1.0);
        let y = DVector::from_fn(10, |i, _| i as f64);
        assert!(matches!(
            ols(&x, &y),
            Err(LinalgError::RankDeficient { .. })
        ));
    }

    #[test]
    fn constrained_ls_hits_constraint() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_vec(vec![0.1, 1.2, 1.9, 3.1, 4.0, 5.2]);
        let a = DVector::from_vec(vec![1.0, 5.0]);
        let b = constrained_ls(&x, &y, Some((&a, 5.2))).unwrap();
        assert!((b[0] + 5.0 * b[1] - 5.2).abs() < 1e-12);
    }
}
