//! Slope and selection-index estimates for observed data: normalized probit,
//! Klein–Spady semiparametric binary choice and Robinson's double residual
//! regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::least_squares;
use crate::probit;

/// Probabilities are clipped to `[P_CLIP, 1 - P_CLIP]` in the quasi-likelihood.
pub const P_CLIP: f64 = 1e-4;
pub const NM_MAX_ITER: usize = 2000;
pub const NM_TOL: f64 = 1e-8;
pub const SILVERMAN_C: f64 = 1.06;
const NORMALIZE_TOL: f64 = 1e-8;
const KS_MIN_N: usize = 100;
/// Leave-one-out kernel mass below which the window counts as empty.
const EMPTY_WINDOW: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NuisanceMethod {
    Truth,
    Probit,
    KleinSpady,
    Robinson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta_method: NuisanceMethod,
    pub gamma_method: NuisanceMethod,
}

fn normalize(coef: &[f64]) -> Result<Vec<f64>> {
    let first = coef[0];
    if first.abs() < NORMALIZE_TOL {
        return Err(Error::NormalizationImpossible);
    }
    Ok(coef.iter().map(|c| c / first).collect())
}

/// Probit MLE of `d` on `z`, rescaled so the first coefficient is one.
pub fn probit_gamma(data: &Dataset) -> Result<Vec<f64>> {
    let fit = probit::fit(data.z(), data.d())?;
    normalize(fit.coef.as_slice())
}

/// `c · sd(values) · n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64], c: f64) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    c * var.sqrt() * n.powf(-0.2)
}

/// Leave-one-out Epanechnikov smoother on a scalar index.
///
/// The index is centred, then sorted; running sums of the polynomial kernel
/// pieces keep each evaluation at `O(n log n)`.
struct LooSmoother {
    order: Vec<usize>,
    sorted: Vec<f64>,
    h: f64,
}

impl LooSmoother {
    fn new(index: &[f64], h: f64) -> Self {
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
        let center = index.iter().sum::<f64>() / index.len() as f64;
        let sorted = order.iter().map(|&i| index[i] - center).collect();
        LooSmoother { order, sorted, h }
    }

    /// For each observation, the leave-one-out kernel sums `(Σ K, Σ K v)`.
    fn sums(&self, values: &[f64]) -> Vec<(f64, f64)> {
        let n = self.sorted.len();
        // Prefix sums of x^a and v x^a for a = 0, 1, 2.
        let mut pre = vec![[0.0f64; 6]; n + 1];
        for (r, &i) in self.order.iter().enumerate() {
            let x = self.sorted[r];
            let v = values[i];
            let p = pre[r];
            pre[r + 1] = [
                p[0] + 1.0,
                p[1] + x,
                p[2] + x * x,
                p[3] + v,
                p[4] + v * x,
                p[5] + v * x * x,
            ];
        }
        let h2 = self.h * self.h;
        let mut out = vec![(0.0, 0.0); n];
        for (r, &i) in self.order.iter().enumerate() {
            let x = self.sorted[r];
            let lo = self.sorted.partition_point(|&s| s <= x - self.h);
            let hi = self.sorted.partition_point(|&s| s < x + self.h);
            let s: Vec<f64> = (0..6).map(|a| pre[hi][a] - pre[lo][a]).collect();
            let k = |c0: f64, c1: f64, c2: f64| 0.75 * (c0 - (c2 - 2.0 * x * c1 + x * x * c0) / h2);
            // The own term has kernel weight 0.75.
            let den = k(s[0], s[1], s[2]) - 0.75;
            let num = k(s[3], s[4], s[5]) - 0.75 * values[i];
            out[i] = (den, num);
        }
        out
    }
}

/// Klein–Spady quasi-log-likelihood at `gamma` with an absolute index
/// bandwidth. Observations whose window holds (almost) no kernel mass get the
/// sample selection rate.
pub fn klein_spady_objective(data: &Dataset, gamma: &[f64], bandwidth: f64) -> Result<f64> {
    let index = data.index(gamma)?;
    let d: Vec<f64> = data.d().iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
    let rate = d.iter().sum::<f64>() / d.len() as f64;
    let smoother = LooSmoother::new(&index, bandwidth);
    Ok(smoother
        .sums(&d)
        .iter()
        .zip(&d)
        .map(|(&(den, num), &di)| {
            let p = if den > EMPTY_WINDOW { num / den } else { rate };
            let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
            if di > 0.5 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum())
}

/// Maximizes the Klein–Spady objective over `{γ : γ₁ = 1}` by Nelder–Mead
/// from the normalized probit estimate.
pub fn klein_spady_gamma(data: &Dataset, pilot_bandwidth: f64) -> Result<Vec<f64>> {
    if !(pilot_bandwidth > 0.0 && pilot_bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth {pilot_bandwidth}")));
    }
    let n_sel = data.n_selected();
    if n_sel == 0 || n_sel == data.n() {
        return Err(Error::DegenerateOutcome);
    }
    if data.n() < KS_MIN_N {
        return Err(Error::InsufficientSample(format!(
            "Klein-Spady needs at least {KS_MIN_N} observations, got {}",
            data.n()
        )));
    }
    let l = data.l();
    if l == 1 {
        return Ok(vec![1.0]);
    }
    let start = probit_gamma(data).unwrap_or_else(|_| vec![1.0; l]);
    let full = |free: &[f64]| {
        let mut g = Vec::with_capacity(l);
        g.push(1.0);
        g.extend_from_slice(free);
        g
    };
    let objective = |free: &[f64]| -> f64 {
        match klein_spady_objective(data, &full(free), pilot_bandwidth) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let best = nelder_mead(objective, &start[1..], NM_MAX_ITER, NM_TOL)?;
    Ok(full(&best))
}

/// Minimizes `f` with the standard reflection/expansion/contraction/shrink
/// moves. Stops when either the spread of function values or the simplex
/// diameter falls below `tol` (relative to scale).
fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    let m = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for j in 0..m {
        let mut p = start.to_vec();
        p[j] += if p[j] != 0.0 { 0.05 * p[j] } else { 0.00025 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    for _ in 0..max_iter {
        let mut idx: Vec<usize> = (0..=m).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let (best, worst) = (values[0], values[m]);
        let diameter = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let scale = 1.0 + simplex[0].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if best.is_finite() && ((worst - best).abs() <= tol * (1.0 + best.abs()) || diameter <= tol * scale) {
            return Ok(simplex.swap_remove(0));
        }

        let centroid: Vec<f64> = (0..m).map(|j| simplex[..m].iter().map(|p| p[j]).sum::<f64>() / m as f64).collect();
        let reflected = combine(&centroid, &simplex[m], -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = combine(&centroid, &simplex[m], -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[m] = expanded;
                values[m] = fe;
            } else {
                simplex[m] = reflected;
                values[m] = fr;
            }
            continue;
        }
        if fr < values[m - 1] {
            simplex[m] = reflected;
            values[m] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[m] {
            let c = combine(&centroid, &reflected, 0.5);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = combine(&centroid, &simplex[m], 0.5);
            let fc = f(&c);
            (c, fc)
        };
        if fc < values[m].min(fr) {
            simplex[m] = contracted;
            values[m] = fc;
            continue;
        }
        for i in 1..=m {
            simplex[i] = combine(&simplex[0], &simplex[i], 0.5);
            values[i] = f(&simplex[i]);
        }
    }
    Err(Error::NoConvergence(format!("Nelder-Mead exceeded {max_iter} iterations")))
}

/// Double-residual slope estimate over the selected rows: leave-one-out
/// kernel regressions of `y` and each `x` column on the index are
/// subtracted, then `y` residuals are regressed on `x` residuals without a
/// constant. Rows with an empty kernel window are dropped.
pub fn robinson_beta(data: &Dataset, gamma: &[f64], bandwidth: f64) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!("bandwidth {bandwidth}")));
    }
    let k = data.k();
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.d()[i]).collect();
    if rows.len() < k + 10 {
        return Err(Error::InsufficientSelected);
    }
    let full_index = data.index(gamma)?;
    let index: Vec<f64> = rows.iter().map(|&i| full_index[i]).collect();
    let m = rows.len();
    let smoother = WindowSmoother::new(&index, bandwidth);

    let y: Vec<f64> = rows.iter().map(|&i| data.y()[i]).collect();
    let y_res = smoother.residuals(&y);
    let x_res: Vec<Vec<Option<f64>>> = (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|&i| data.x()[(i, j)]).collect();
            smoother.residuals(&col)
        })
        .collect();
    let keep: Vec<usize> = (0..m).filter(|&r| y_res[r].is_some()).collect();
    if keep.len() < k + 1 {
        return Err(Error::SingularDesign);
    }
    let design = DMatrix::from_fn(keep.len(), k, |r, j| x_res[j][keep[r]].unwrap());
    let response = DVector::from_iterator(keep.len(), keep.iter().map(|&r| y_res[r].unwrap()));
    let fit = least_squares(&design, &response)?;
    Ok(fit.coef.iter().copied().collect())
}

/// Direct leave-one-out Epanechnikov smoother over sorted windows; exact
/// summation for the regression residuals.
struct WindowSmoother {
    order: Vec<usize>,
    sorted: Vec<f64>,
    h: f64,
}

impl WindowSmoother {
    fn new(index: &[f64], h: f64) -> Self {
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
        let sorted = order.iter().map(|&i| index[i]).collect();
        WindowSmoother { order, sorted, h }
    }

    fn residuals(&self, values: &[f64]) -> Vec<Option<f64>> {
        let n = self.sorted.len();
        let mut out = vec![None; n];
        for (r, &i) in self.order.iter().enumerate() {
            let x = self.sorted[r];
            let lo = self.sorted.partition_point(|&s| s <= x - self.h);
            let hi = self.sorted.partition_point(|&s| s < x + self.h);
            let (mut den, mut num) = (0.0, 0.0);
            for q in lo..hi {
                if q == r {
                    continue;
                }
                let u = (self.sorted[q] - x) / self.h;
                let w = 0.75 * (1.0 - u * u);
                den += w;
                num += w * values[self.order[q]];
            }
            if den > 0.0 {
                out[i] = Some(values[i] - num / den);
            }
        }
        out
    }
}

/// Klein–Spady for γ then Robinson for β, both with Silverman bandwidths
/// scaled by `c`.
pub fn estimate(data: &Dataset, c: f64) -> Result<NuisanceEstimates> {
    let pilot_gamma = probit_gamma(data).unwrap_or_else(|_| vec![1.0; data.l()]);
    let h_index = silverman_bandwidth(&data.index(&pilot_gamma)?, c);
    let gamma = klein_spady_gamma(data, h_index)?;
    let index = data.index(&gamma)?;
    let selected: Vec<f64> = (0..data.n()).filter(|&i| data.d()[i]).map(|i| index[i]).collect();
    let beta = robinson_beta(data, &gamma, silverman_bandwidth(&selected, c))?;
    Ok(NuisanceEstimates {
        beta,
        gamma,
        beta_method: NuisanceMethod::Robinson,
        gamma_method: NuisanceMethod::KleinSpady,
    })
}
