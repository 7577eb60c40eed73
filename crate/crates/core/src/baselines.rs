//! Comparison estimators of the outcome intercept: least squares on the
//! selected subsample, the Heckman two-step, the Heckman (1990) tail mean and
//! the Andrews–Schafgans (1998) smoothed tail mean.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, with_intercept};
use crate::numerics::inverse_mills;
use crate::probit;
use crate::snn::{residualized_outcome, InterceptEstimate, Method};

/// Tail thresholds as sample quantiles of the selection index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRule {
    /// `b_n` is this quantile of the index.
    pub quantile: f64,
    /// `τ` (smoothed tail only) is this quantile of the index.
    pub tau_quantile: f64,
}

impl TailRule {
    pub fn new(quantile: f64, tau_quantile: f64) -> Result<Self> {
        let rule = TailRule {
            quantile,
            tau_quantile,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, q) in [("quantile", self.quantile), ("tau quantile", self.tau_quantile)] {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidArgument(format!("tail {name} {q} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

impl Default for TailRule {
    fn default() -> Self {
        TailRule {
            quantile: 0.95,
            tau_quantile: 0.5,
        }
    }
}

/// Linear-interpolation sample quantile (the "type 7" definition).
pub fn sample_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub theta: f64,
    pub beta: Vec<f64>,
    /// Standard errors for `(theta, beta...)`.
    pub std_errors: Vec<f64>,
}

/// Least squares of `y` on `(1, x, extra...)` over the selected rows.
fn selected_regression(data: &Dataset, extra: Option<&[f64]>) -> Result<(DVector<f64>, Vec<f64>)> {
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.d()[i]).collect();
    let k = data.k() + extra.map_or(0, |_| 1);
    if rows.len() <= k + 1 {
        return Err(Error::InsufficientSelected);
    }
    let mut design = with_intercept(&data.x().select_rows(rows.iter()));
    if let Some(col) = extra {
        let c = DVector::from_iterator(rows.len(), rows.iter().map(|&i| col[i]));
        let at = design.ncols();
        design = design.insert_column(at, 0.0);
        design.set_column(at, &c);
    }
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y()[i]));
    let fit = least_squares(&design, &y)?;
    let se = fit.std_errors();
    Ok((fit.coef, se))
}

pub fn ols_selected(data: &Dataset) -> Result<OlsFit> {
    let (coef, std_errors) = selected_regression(data, None)?;
    Ok(OlsFit {
        theta: coef[0],
        beta: coef.iter().skip(1).copied().collect(),
        std_errors,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeckmanFit {
    pub theta: f64,
    pub beta: Vec<f64>,
    pub lambda_coef: f64,
    pub gamma: Vec<f64>,
}

/// Probit of `d` on `z`, then least squares of `y` on `(1, x, λ(zγ̂))` over
/// the selected rows.
pub fn heckman_two_step(data: &Dataset) -> Result<HeckmanFit> {
    let probit = probit::fit(data.z(), data.d())?;
    let gamma: Vec<f64> = probit.coef.iter().copied().collect();
    let lambda: Vec<f64> = data.index(&gamma)?.into_iter().map(inverse_mills).collect();
    let (coef, _) = selected_regression(data, Some(&lambda))?;
    let k = data.k();
    Ok(HeckmanFit {
        theta: coef[0],
        beta: coef.iter().skip(1).take(k).copied().collect(),
        lambda_coef: coef[k + 1],
        gamma,
    })
}

/// Weighted mean of `W` over selected rows with weights `weight(index)`.
fn tail_mean(
    data: &Dataset,
    beta: &[f64],
    index: &[f64],
    weight: impl Fn(f64) -> f64,
    method: Method,
    tail_share: f64,
) -> Result<InterceptEstimate> {
    let w = residualized_outcome(data, beta)?;
    let (mut num, mut den, mut count) = (0.0, 0.0, 0usize);
    let weights: Vec<f64> = index
        .iter()
        .zip(data.d())
        .map(|(&v, &s)| if s { weight(v) } else { 0.0 })
        .collect();
    for (&wt, &wi) in weights.iter().zip(&w) {
        if wt != 0.0 {
            num += wt * wi;
            den += wt;
            count += 1;
        }
    }
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::EmptyTail);
    }
    let theta = num / den;
    let spread: f64 = weights
        .iter()
        .zip(&w)
        .map(|(&wt, &wi)| (wt * (wi - theta)).powi(2))
        .sum();
    Ok(InterceptEstimate {
        theta,
        std_error: spread.sqrt() / den,
        bandwidth: tail_share,
        effective_n: count,
        method,
    })
}

/// Mean of `W` over selected observations with index above `b_n`.
pub fn h90_intercept(data: &Dataset, beta: &[f64], gamma: &[f64], rule: TailRule) -> Result<InterceptEstimate> {
    rule.validate()?;
    let index = data.index(gamma)?;
    let b_n = sample_quantile(&index, rule.quantile);
    h90_intercept_at(data, beta, &index, b_n, 1.0 - rule.quantile)
}

fn h90_intercept_at(
    data: &Dataset,
    beta: &[f64],
    index: &[f64],
    b_n: f64,
    tail_share: f64,
) -> Result<InterceptEstimate> {
    tail_mean(data, beta, index, |v| if v > b_n { 1.0 } else { 0.0 }, Method::H90, tail_share)
}

/// `s(u) = 1 - exp(-u / (τ - u))` on `(0, τ)`, zero at or below zero and
/// one from `τ` on. With `τ <= 0` this is the indicator of `u > 0`.
pub fn as98_weight(u: f64, tau: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= tau {
        1.0
    } else {
        1.0 - (-u / (tau - u)).exp()
    }
}

/// Smoothly weighted tail mean with `b_n` and `τ` taken as index quantiles.
pub fn as98_intercept(data: &Dataset, beta: &[f64], gamma: &[f64], rule: TailRule) -> Result<InterceptEstimate> {
    rule.validate()?;
    let index = data.index(gamma)?;
    let b_n = sample_quantile(&index, rule.quantile);
    let tau = sample_quantile(&index, rule.tau_quantile);
    as98_intercept_at(data, beta, gamma, b_n, tau)
}

/// Smoothly weighted tail mean at explicit thresholds.
pub fn as98_intercept_at(
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
    b_n: f64,
    tau: f64,
) -> Result<InterceptEstimate> {
    let index = data.index(gamma)?;
    let share = index.iter().filter(|&&v| v > b_n).count() as f64 / index.len() as f64;
    tail_mean(data, beta, &index, |v| as98_weight(v - b_n, tau), Method::As98, share)
}

/// H90 at an explicit threshold.
pub fn h90_intercept_with_threshold(
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
    b_n: f64,
) -> Result<InterceptEstimate> {
    let index = data.index(gamma)?;
    let share = index.iter().filter(|&&v| v > b_n).count() as f64 / index.len() as f64;
    h90_intercept_at(data, beta, &index, b_n, share)
}

/// Unit-coefficient design helper for tests and examples.
#[doc(hidden)]
pub fn design_from_rows(rows: &[&[f64]]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}
