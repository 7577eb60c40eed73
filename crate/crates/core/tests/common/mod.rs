#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use snn_core::dgp::Sampler;
use snn_core::Dataset;

/// Small random selection sample with slopes for the oracles.
pub struct Instance {
    pub data: Dataset,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `n` rows, `k` outcome and `l` selection regressors, noisy selection so
/// probit is well posed with high probability.
pub fn random_instance(rng: &mut Sampler, n: usize, k: usize, l: usize) -> Instance {
    let x = DMatrix::from_fn(n, k, |_, _| rng.normal());
    let z = DMatrix::from_fn(n, l, |_, _| rng.normal());
    let beta: Vec<f64> = (0..k).map(|_| rng.normal()).collect();
    let mut gamma: Vec<f64> = (0..l).map(|_| rng.normal()).collect();
    gamma[0] = 1.0;
    let d: Vec<bool> = (0..n)
        .map(|i| {
            let idx: f64 = (0..l).map(|j| z[(i, j)] * gamma[j]).sum();
            idx + 1.5 * rng.normal() > -0.3
        })
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            if d[i] {
                0.7 + (0..k).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + rng.normal()
            } else {
                0.0
            }
        })
        .collect();
    Instance {
        data: Dataset::new(d, y, x, z).unwrap(),
        beta,
        gamma,
    }
}

pub fn index(data: &Dataset, gamma: &[f64]) -> Vec<f64> {
    let z = data.z();
    (0..data.n()).map(|i| (0..z.ncols()).map(|j| z[(i, j)] * gamma[j]).sum()).collect()
}

pub fn residualized(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let x = data.x();
    (0..data.n())
        .map(|i| {
            if data.d()[i] {
                data.y()[i] - (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>()
            } else {
                0.0
            }
        })
        .collect()
}

/// Empirical CDF at each point by counting, O(n²).
pub fn eta_oracle(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    values.iter().map(|&v| values.iter().filter(|&&u| u <= v).count() as f64 / n).collect()
}

pub fn epanechnikov(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.75 * (1.0 - u * u)
    } else {
        0.0
    }
}

/// Intercept of the kernel-weighted line through `(eta - 1, w)`, solved
/// from the 2×2 weighted normal equations.
pub fn local_linear_oracle(eta: &[f64], w: &[f64], h: f64) -> f64 {
    let mut a = DMatrix::<f64>::zeros(2, 2);
    let mut b = DVector::<f64>::zeros(2);
    for (&e, &wi) in eta.iter().zip(w) {
        let t = e - 1.0;
        let k = epanechnikov(t / h);
        let row = [1.0, t];
        for r in 0..2 {
            b[r] += k * row[r] * wi;
            for c in 0..2 {
                a[(r, c)] += k * row[r] * row[c];
            }
        }
    }
    a.lu().solve(&b).unwrap()[0]
}

/// Least squares of `y` on `(1, cols...)` over the selected rows by the
/// normal equations.
pub fn selected_ls_oracle(data: &Dataset, extra: Option<&[f64]>) -> Vec<f64> {
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.d()[i]).collect();
    let k = data.k();
    let width = 1 + k + extra.is_some() as usize;
    let design = DMatrix::from_fn(rows.len(), width, |r, c| {
        let i = rows[r];
        match c {
            0 => 1.0,
            c if c <= k => data.x()[(i, c - 1)],
            _ => extra.unwrap()[i],
        }
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| data.y()[i]));
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    xtx.cholesky().unwrap().solve(&xty).iter().copied().collect()
}

/// Type-7 sample quantile.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = (s.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        s[lo]
    } else {
        s[lo] * (1.0 - frac) + s[lo + 1] * frac
    }
}

/// Weighted mean of the residualized outcome over selected rows.
pub fn tail_oracle(data: &Dataset, beta: &[f64], weight: impl Fn(usize) -> f64) -> f64 {
    let w = residualized(data, beta);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..data.n() {
        if data.d()[i] {
            num += weight(i) * w[i];
            den += weight(i);
        }
    }
    num / den
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Two DGP1 samples whose intercepts differ by `gap`.
pub fn two_groups(n: usize, rho: f64, gap: f64, seed: u64) -> (Dataset, Dataset) {
    use snn_core::dgp::{simulate, DgpFamily, DgpSpec};
    let s0 = DgpSpec::new(DgpFamily::Dgp1, n, rho, 2.0, seed);
    let mut s1 = DgpSpec::new(DgpFamily::Dgp1, n, rho, 2.0, seed.wrapping_add(1));
    s1.theta0 = s0.theta0 + gap;
    (simulate(&s0).unwrap().dataset, simulate(&s1).unwrap().dataset)
}
