//! Probit maximum likelihood by Newton–Raphson with analytic derivatives.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{inverse_mills, normal_cdf, normal_pdf};

pub const MAX_ITER: usize = 100;
/// Convergence threshold on the per-observation score norm.
pub const GRAD_TOL: f64 = 1e-10;
/// Coefficient norm beyond which the fit is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub coef: DVector<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

fn ln_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        // Φ = φ / λ in the far tail.
        normal_pdf(x).ln() - inverse_mills(x).ln()
    }
}

pub fn log_likelihood(z: &DMatrix<f64>, d: &[bool], coef: &DVector<f64>) -> f64 {
    let index = z * coef;
    index
        .iter()
        .zip(d)
        .map(|(&x, &di)| if di { ln_cdf(x) } else { ln_cdf(-x) })
        .sum()
}

/// Score and negative Hessian at `coef`.
fn derivatives(z: &DMatrix<f64>, d: &[bool], coef: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let l = z.ncols();
    let index = z * coef;
    let mut score = DVector::zeros(l);
    let mut info = DMatrix::zeros(l, l);
    for (i, (&x, &di)) in index.iter().zip(d).enumerate() {
        // Generalized residual and its derivative.
        let (g, w) = if di {
            let lam = inverse_mills(x);
            (lam, lam * (lam + x))
        } else {
            let lam = inverse_mills(-x);
            (-lam, lam * (lam - x))
        };
        let row = z.row(i);
        score += g * row.transpose();
        info += w * row.transpose() * row;
    }
    (score, info)
}

/// Maximizes the probit likelihood of `d` on the columns of `z` (no constant
/// is added).
pub fn fit(z: &DMatrix<f64>, d: &[bool]) -> Result<ProbitFit> {
    let n = z.nrows();
    if d.len() != n {
        return Err(Error::DimensionMismatch(format!("z has {n} rows, d has {}", d.len())));
    }
    let selected = d.iter().filter(|&&s| s).count();
    if selected == 0 || selected == n {
        return Err(Error::ProbitFailed("selection indicator is constant".into()));
    }
    let l = z.ncols();
    let mut coef = DVector::zeros(l);
    let mut ll = log_likelihood(z, d, &coef);
    for iter in 1..=MAX_ITER {
        let (score, info) = derivatives(z, d, &coef);
        if score.norm() / (n as f64) < GRAD_TOL {
            return finish(z, d, coef, ll, iter - 1);
        }
        let step = info
            .clone()
            .cholesky()
            .map(|c| c.solve(&score))
            .or_else(|| info.lu().solve(&score))
            .ok_or_else(|| Error::ProbitFailed("singular information matrix".into()))?;
        // Step halving keeps the likelihood from decreasing.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &coef + t * &step;
            let trial_ll = log_likelihood(z, d, &trial);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * ll.abs() {
                accepted = Some((trial, trial_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            return Err(Error::ProbitFailed("line search failed".into()));
        };
        let moved = (&next - &coef).norm();
        coef = next;
        ll = next_ll;
        if coef.norm() > DIVERGENCE_NORM || !coef.iter().all(|c| c.is_finite()) {
            return Err(Error::ProbitFailed(format!(
                "coefficient norm exceeded {DIVERGENCE_NORM} (separation)"
            )));
        }
        if moved <= 1e-14 * (1.0 + coef.norm()) {
            return finish(z, d, coef, ll, iter);
        }
    }
    Err(Error::ProbitFailed(format!("no convergence in {MAX_ITER} iterations")))
}

/// Rejects a stationary point that classifies every observation perfectly:
/// the likelihood then has no finite maximizer and the score only vanishes
/// numerically.
fn finish(z: &DMatrix<f64>, d: &[bool], coef: DVector<f64>, ll: f64, iterations: usize) -> Result<ProbitFit> {
    let index = z * &coef;
    if index.iter().zip(d).all(|(&x, &di)| if di { x > 0.0 } else { x < 0.0 }) {
        return Err(Error::ProbitFailed("perfect separation".into()));
    }
    Ok(ProbitFit {
        coef,
        log_likelihood: ll,
        iterations,
    })
}
