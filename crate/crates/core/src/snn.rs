//! Locally linear intercept estimator on the rank-transformed index.
//!
//! The residualized outcome `W_i = d_i (y_i - x_i'β)` is regressed on
//! `η_i - 1` by kernel-weighted least squares with weights
//! `K((η_i - 1) / h)`. The fitted intercept is the conditional mean of `W`
//! at the upper boundary `η = 1`, where selection becomes certain and the
//! mean equals the outcome intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::numerics::{KernelConstants, KernelSpec};
use crate::transform::{eta_hat, IndexRanks};

/// Plug-in bandwidths are clamped into this band.
pub const PLUG_IN_MIN: f64 = 0.05;
pub const PLUG_IN_MAX: f64 = 0.5;

/// Growth factor applied when the window holds fewer than two distinct ranks.
const WIDEN_FACTOR: f64 = 1.5;

/// Smallest sample accepted by the plug-in rule.
pub const PLUG_IN_MIN_N: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Snn,
    Ols,
    Heckman,
    H90,
    As98,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Snn => "snn",
            Method::Ols => "ols",
            Method::Heckman => "heckman",
            Method::H90 => "h90",
            Method::As98 => "as98",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// A fixed bandwidth in `(0, 1]`.
    Fixed(f64),
    /// `scale` times the estimated MSE-optimal bandwidth.
    PlugIn(f64),
}

impl BandwidthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Fixed(h) if !(h > 0.0 && h <= 1.0) => Err(Error::InvalidArgument(
                format!("fixed bandwidth {h} outside (0, 1]"),
            )),
            BandwidthRule::PlugIn(s) if !(s > 0.0 && s.is_finite()) => Err(Error::InvalidArgument(
                format!("plug-in scale {s} must be positive"),
            )),
            _ => Ok(()),
        }
    }
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::PlugIn(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterceptEstimate {
    pub theta: f64,
    pub std_error: f64,
    pub bandwidth: f64,
    pub effective_n: usize,
    pub method: Method,
}

/// `W_i = d_i (y_i - x_i'β)`.
pub fn residualized_outcome(data: &Dataset, beta: &[f64]) -> Result<Vec<f64>> {
    data.check_beta(beta)?;
    let x = data.x();
    Ok((0..data.n())
        .map(|i| {
            if data.d()[i] {
                let fit: f64 = beta.iter().enumerate().map(|(j, b)| x[(i, j)] * b).sum();
                data.y()[i] - fit
            } else {
                0.0
            }
        })
        .collect())
}

/// Kernel-weighted local line at the boundary.
#[derive(Debug, Clone, Copy)]
struct LocalFit {
    intercept: f64,
    sigma2: f64,
    effective_n: usize,
}

/// Solves the 2×2 weighted normal equations of `w` on `(1, η - 1)`.
fn local_linear_at_one(eta: &[f64], w: &[f64], kernel: &KernelSpec, h: f64) -> Result<LocalFit> {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut effective_n = 0;
    for (&e, &wi) in eta.iter().zip(w) {
        let t = e - 1.0;
        let k = kernel.eval(t / h);
        if k == 0.0 {
            continue;
        }
        effective_n += 1;
        s0 += k;
        s1 += k * t;
        s2 += k * t * t;
        t0 += k * wi;
        t1 += k * t * wi;
    }
    if effective_n == 0 {
        return Err(Error::NoEffectiveObservations);
    }
    let det = s0 * s2 - s1 * s1;
    if det.abs() <= 1e-14 * (s0 * s2).abs() {
        return Err(Error::DegenerateLocalDesign);
    }
    let intercept = (s2 * t0 - s1 * t1) / det;
    let slope = (s0 * t1 - s1 * t0) / det;

    let (mut num, mut den) = (0.0, 0.0);
    for (&e, &wi) in eta.iter().zip(w) {
        let t = e - 1.0;
        let k = kernel.eval(t / h).abs();
        if k == 0.0 {
            continue;
        }
        let r = wi - intercept - slope * t;
        num += k * r * r;
        den += k;
    }
    Ok(LocalFit {
        intercept,
        sigma2: num / den,
        effective_n,
    })
}

fn distinct_in_window(eta: &[f64], h: f64) -> usize {
    let mut inside: Vec<f64> = eta.iter().copied().filter(|&e| 1.0 - e < h).collect();
    inside.sort_by(f64::total_cmp);
    inside.dedup();
    inside.len()
}

/// Locally linear estimate of the intercept from precomputed ranks and
/// residualized outcomes.
///
/// A window holding fewer than two distinct ranks is widened by a factor
/// 1.5 at a time, up to the plug-in ceiling, before giving up.
pub fn snn_intercept_from_parts(
    eta: &IndexRanks,
    w: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<InterceptEstimate> {
    let eta = eta.values();
    if eta.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks, {} outcomes",
            eta.len(),
            w.len()
        )));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {h} must be positive")));
    }
    let mut h = h;
    while distinct_in_window(eta, h) < 2 && h < PLUG_IN_MAX {
        h = (h * WIDEN_FACTOR).min(PLUG_IN_MAX);
    }
    let fit = local_linear_at_one(eta, w, kernel, h)?;
    if fit.effective_n < 2 {
        return Err(Error::DegenerateLocalDesign);
    }
    let consts = KernelConstants::of(kernel);
    let n = eta.len() as f64;
    Ok(InterceptEstimate {
        theta: fit.intercept,
        std_error: (fit.sigma2 * consts.l2 / (n * h)).sqrt(),
        bandwidth: h,
        effective_n: fit.effective_n,
        method: Method::Snn,
    })
}

pub fn snn_intercept(
    data: &Dataset,
    beta: &[f64],
    gamma: &[f64],
    kernel: &KernelSpec,
    rule: BandwidthRule,
) -> Result<InterceptEstimate> {
    rule.validate()?;
    let w = residualized_outcome(data, beta)?;
    let eta = eta_hat(data.z(), gamma)?;
    let h = match rule {
        BandwidthRule::Fixed(h) => h,
        BandwidthRule::PlugIn(scale) => scale * plug_in_from_parts(&eta, &w, kernel)?,
    };
    snn_intercept_from_parts(&eta, &w, kernel, h)
}

/// Pilot quantities for the MSE-optimal bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotFit {
    /// Mean squared residual of the pilot polynomial.
    pub sigma2: f64,
    /// `p`-th derivative of the pilot at `η = 1`.
    pub derivative: f64,
}

/// Global least-squares polynomial of degree `p` in `η - 1`.
///
/// A derivative that is negligible next to the scale of `w` is reported as
/// exactly zero.
pub fn pilot_fit(eta: &IndexRanks, w: &[f64], order: usize) -> Result<PilotFit> {
    let n = eta.len();
    let design = DMatrix::from_fn(n, order + 1, |i, j| (eta.values()[i] - 1.0).powi(j as i32));
    let fit = least_squares(&design, &DVector::from_column_slice(w))?;
    let factorial: f64 = (1..=order).map(|v| v as f64).product();
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut derivative = factorial * fit.coef[order];
    if derivative.abs() <= 1e-10 * (1.0 + scale) {
        derivative = 0.0;
    }
    Ok(PilotFit {
        sigma2: fit.residuals.norm_squared() / n as f64,
        derivative,
    })
}

/// `[(p!)^2 σ² ∫K² / (2p (∫u^p K)^2 (m^(p))^2 n)]^(1/(2p+1))`, unclamped.
///
/// Infinite when the derivative is zero.
pub fn optimal_bandwidth(kernel: &KernelSpec, sigma2: f64, derivative: f64, n: usize) -> f64 {
    let p = kernel.order();
    let consts = KernelConstants::of(kernel);
    let factorial: f64 = (1..=p).map(|v| v as f64).product();
    let num = factorial * factorial * sigma2 * consts.l2;
    let den = 2.0 * p as f64 * consts.order_moment.powi(2) * derivative.powi(2) * n as f64;
    (num / den).powf(1.0 / (2 * p + 1) as f64)
}

fn plug_in_from_parts(eta: &IndexRanks, w: &[f64], kernel: &KernelSpec) -> Result<f64> {
    if eta.len() < PLUG_IN_MIN_N {
        return Err(Error::InsufficientSample(format!(
            "plug-in bandwidth needs n >= {PLUG_IN_MIN_N}, got {}",
            eta.len()
        )));
    }
    let h = match pilot_fit(eta, w, kernel.order()) {
        Ok(pilot) => optimal_bandwidth(kernel, pilot.sigma2, pilot.derivative, eta.len()),
        // A rank-deficient pilot (e.g. massive ties) carries no curvature information.
        Err(_) => f64::INFINITY,
    };
    Ok(if h.is_nan() { PLUG_IN_MAX } else { h.clamp(PLUG_IN_MIN, PLUG_IN_MAX) })
}

/// Estimated MSE-optimal bandwidth, clamped to `[0.05, 0.5]`.
pub fn plug_in_bandwidth(data: &Dataset, beta: &[f64], gamma: &[f64], kernel: &KernelSpec) -> Result<f64> {
    let w = residualized_outcome(data, beta)?;
    let eta = eta_hat(data.z(), gamma)?;
    plug_in_from_parts(&eta, &w, kernel)
}

/// Rate-optimal schedule `c n^{-1/(2p+1)}`.
pub fn undersmoothing_bandwidth(n: usize, order: usize, c: f64) -> f64 {
    c * (n as f64).powf(-1.0 / (2 * order + 1) as f64)
}
