use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a QR factor is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit with the pieces needed for classical standard errors.
#[derive(Debug, Clone)]
pub struct LsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
}

impl LsFit {
    /// Homoskedastic standard errors with `n - p` degrees of freedom.
    pub fn std_errors(&self) -> Vec<f64> {
        let n = self.residuals.len();
        let p = self.coef.len();
        let dof = n.saturating_sub(p).max(1) as f64;
        let s2 = self.residuals.norm_squared() / dof;
        (0..p).map(|j| (s2 * self.xtx_inv[(j, j)]).sqrt()).collect()
    }
}

/// Householder-QR least squares; errors when the design is rank deficient.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LsFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!("design has {n} rows, response {}", y.len())));
    }
    if n < p || p == 0 {
        return Err(Error::SingularDesign);
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..p).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    if scale == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= RANK_TOL * scale) {
        return Err(Error::SingularDesign);
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularDesign)?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::SingularDesign)?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let residuals = y - x * &coef;
    Ok(LsFit {
        coef,
        residuals,
        xtx_inv,
    })
}

/// Prepends a column of ones.
pub fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    x.clone().insert_column(0, 1.0)
}
