//! Simulation designs: a jointly normal index and error (DGP1) and a Cauchy
//! index with Pareto selection error (DGP2), plus the identification ratio
//! `r_Q(q)` of the transformed selection error.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{normal_pdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DgpFamily {
    Dgp1,
    Dgp2,
}

impl DgpFamily {
    pub fn label(&self) -> &'static str {
        match self {
            DgpFamily::Dgp1 => "dgp1",
            DgpFamily::Dgp2 => "dgp2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: DgpFamily,
    pub n: usize,
    pub rho: f64,
    pub alpha: f64,
    pub l: usize,
    pub k: usize,
    pub theta0: f64,
    pub seed: u64,
}

impl DgpSpec {
    pub fn new(family: DgpFamily, n: usize, rho: f64, alpha: f64, seed: u64) -> Self {
        DgpSpec {
            family,
            n,
            rho,
            alpha,
            l: 7,
            k: 4,
            theta0: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n = {} (need at least 2)", self.n)));
        }
        if self.k == 0 || self.k >= self.l {
            return Err(Error::InvalidArgument(format!("need 0 < k < l, got k = {}, l = {}", self.k, self.l)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha = {} must be positive", self.alpha)));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        Ok(())
    }

    /// True selection coefficients.
    pub fn gamma0(&self) -> Vec<f64> {
        match self.family {
            DgpFamily::Dgp1 => vec![(self.alpha / self.l as f64).sqrt(); self.l],
            DgpFamily::Dgp2 => {
                let mut g = vec![0.0; self.l];
                g[self.l - 1] = 1.0;
                g
            }
        }
    }

    /// True outcome slopes (all ones).
    pub fn beta0(&self) -> Vec<f64> {
        vec![1.0; self.k]
    }
}

/// A simulated sample together with the latent errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDraw {
    pub dataset: Dataset,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub index: Vec<f64>,
}

/// Seeded stream of uniforms and Box–Muller normals.
pub struct Sampler {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let t = 2.0 * PI * self.uniform();
        self.spare = Some(r * t.sin());
        r * t.cos()
    }

    pub fn cauchy(&mut self) -> f64 {
        (PI * (self.uniform() - 0.5)).tan()
    }

    /// Pareto type I on `[1, ∞)` with shape `alpha`.
    pub fn pareto(&mut self, alpha: f64) -> f64 {
        self.uniform().powf(-1.0 / alpha)
    }

    pub fn index_below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Draws one sample. For DGP2, `U = ρV + E` uses the Pareto `V` as drawn, so
/// `ρ` is not the error correlation there.
pub fn simulate(spec: &DgpSpec) -> Result<LatentDraw> {
    spec.validate()?;
    let (n, l, k) = (spec.n, spec.l, spec.k);
    let gamma = spec.gamma0();
    let e_scale = (1.0 - spec.rho * spec.rho).max(0.0).sqrt();
    let mut s = Sampler::new(spec.seed);
    let mut z = DMatrix::zeros(n, l);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut index = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..l {
            z[(i, j)] = match spec.family {
                DgpFamily::Dgp1 => s.normal(),
                DgpFamily::Dgp2 => s.cauchy(),
            };
        }
        let vi = match spec.family {
            DgpFamily::Dgp1 => s.normal(),
            DgpFamily::Dgp2 => s.pareto(spec.alpha),
        };
        let ui = spec.rho * vi + e_scale * s.normal();
        let idx: f64 = (0..l).map(|j| z[(i, j)] * gamma[j]).sum();
        let di = idx >= vi;
        let xb: f64 = (0..k).map(|j| z[(i, j)]).sum();
        y.push(if di { spec.theta0 + xb + ui } else { 0.0 });
        d.push(di);
        u.push(ui);
        v.push(vi);
        index.push(idx);
    }
    let x = z.columns(0, k).into_owned();
    Ok(LatentDraw {
        dataset: Dataset::new(d, y, x, z)?,
        u,
        v,
        index,
    })
}

/// Density of `F_0(V)` at `q`: `g_V(F_0⁻¹(q)) / f_0(F_0⁻¹(q))`.
pub fn identification_ratio(family: DgpFamily, alpha: f64, q: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    if !(q >= 1e-9 && q <= 1.0 - 1e-9) {
        return Err(Error::InvalidArgument(format!("q = {q} must lie in [1e-9, 1 - 1e-9]")));
    }
    let ratio = match family {
        DgpFamily::Dgp1 => {
            let s = alpha.sqrt();
            let x = s * normal_quantile(q);
            normal_pdf(x) / (normal_pdf(x / s) / s)
        }
        DgpFamily::Dgp2 => {
            let x = (PI * (q - 0.5)).tan();
            if x < 1.0 {
                0.0
            } else {
                alpha * x.powf(-alpha - 1.0) * PI * (1.0 + x * x)
            }
        }
    };
    if ratio.is_finite() {
        Ok(ratio)
    } else {
        Err(Error::OutOfRange)
    }
}

pub fn true_intercept(spec: &DgpSpec) -> f64 {
    spec.theta0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn independent_errors_at_zero_rho() {
        let draw = simulate(&DgpSpec::new(DgpFamily::Dgp1, 50_000, 0.0, 2.0, 1)).unwrap();
        assert!(corr(&draw.u, &draw.v).abs() < 0.02);
        let draw = simulate(&DgpSpec::new(DgpFamily::Dgp1, 50_000, 0.75, 2.0, 2)).unwrap();
        assert!((corr(&draw.u, &draw.v) - 0.75).abs() < 0.02);
    }

    #[test]
    fn index_variance_is_alpha() {
        let draw = simulate(&DgpSpec::new(DgpFamily::Dgp1, 50_000, 0.5, 2.0, 3)).unwrap();
        let n = draw.index.len() as f64;
        let m = draw.index.iter().sum::<f64>() / n;
        let var = draw.index.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        assert!((var / 2.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn dgp2_selection_rate_matches_frequency_oracle() {
        let draw = simulate(&DgpSpec::new(DgpFamily::Dgp2, 50_000, 0.5, 1.0, 4)).unwrap();
        let rate = draw.dataset.n_selected() as f64 / 50_000.0;
        // Separate stream and direct transforms.
        let mut rng = ChaCha8Rng::seed_from_u64(0xDEAD_BEEF);
        let draws = 1_000_000;
        let mut hits = 0usize;
        for _ in 0..draws {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let cauchy = (PI * (a - 0.5)).tan();
            let pareto = 1.0 / (1.0 - b);
            if cauchy >= pareto {
                hits += 1;
            }
        }
        let oracle = hits as f64 / draws as f64;
        assert!((rate - oracle).abs() < 0.01, "{rate} vs {oracle}");
    }

    #[test]
    fn structural_identities() {
        for family in [DgpFamily::Dgp1, DgpFamily::Dgp2] {
            let spec = DgpSpec::new(family, 500, 0.95, 1.25, 5);
            let draw = simulate(&spec).unwrap();
            let data = &draw.dataset;
            for i in 0..spec.n {
                assert_eq!(data.d()[i], draw.index[i] >= draw.v[i]);
                let xb: f64 = (0..spec.k).map(|j| data.x()[(i, j)]).sum();
                let expected = if data.d()[i] { 1.0 + xb + draw.u[i] } else { 0.0 };
                assert_eq!(data.y()[i], expected);
            }
            assert_eq!(draw, simulate(&spec).unwrap());
        }
    }

    #[test]
    fn normal_columns_pass_moment_check() {
        let draw = simulate(&DgpSpec::new(DgpFamily::Dgp1, 100_000, 0.0, 2.0, 6)).unwrap();
        let z = draw.dataset.z();
        for j in 0..z.ncols() {
            let col: Vec<f64> = z.column(j).iter().copied().collect();
            let n = col.len() as f64;
            let m = col.iter().sum::<f64>() / n;
            let m2 = col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let m3 = col.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
            let m4 = col.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
            assert!((m3 / m2.powf(1.5)).abs() < 0.05);
            assert!((m4 / (m2 * m2) - 3.0).abs() < 0.1);
        }
    }

    #[test]
    fn identification_ratio_values() {
        for q in [1e-9, 0.01, 0.3, 0.5, 0.9, 1.0 - 1e-6] {
            assert_eq!(identification_ratio(DgpFamily::Dgp1, 1.0, q).unwrap(), 1.0);
        }
        let r = identification_ratio(DgpFamily::Dgp2, 1.0, 1.0 - 1e-6).unwrap();
        assert!((r - PI).abs() < 1e-3, "{r}");
        // The ratio grows like (π/2)·tan(π(q - 1/2))^(1/2): about 886 at
        // q = 1 - 1e-6 and about 2800 at q = 1 - 1e-7.
        let r = identification_ratio(DgpFamily::Dgp2, 0.5, 1.0 - 1e-6).unwrap();
        assert!((r - 0.5 * PI * (1.0 / (PI * 1e-6)).sqrt()).abs() < 1.0, "{r}");
        assert!(identification_ratio(DgpFamily::Dgp2, 0.5, 1.0 - 1e-7).unwrap() > 1e3);
        assert_eq!(identification_ratio(DgpFamily::Dgp2, 1.0, 0.5).unwrap(), 0.0);
        assert!(identification_ratio(DgpFamily::Dgp1, 1.0, 0.0).is_err());
    }

    // The Pareto density starts with a jump at v = 1, so under DGP2 the ratio
    // jumps at q = F_0(1) = 3/4; continuity is checked on either side.
    #[test]
    fn identification_ratio_is_continuous_and_nonnegative() {
        for (family, alpha) in [(DgpFamily::Dgp1, 2.0), (DgpFamily::Dgp1, 0.5), (DgpFamily::Dgp2, 1.5)] {
            let mut prev = identification_ratio(family, alpha, 0.01).unwrap();
            for i in 101..=9900 {
                let q = i as f64 * 1e-4;
                let r = identification_ratio(family, alpha, q).unwrap();
                assert!(r >= 0.0);
                let jump = family == DgpFamily::Dgp2 && prev == 0.0 && r > 0.0;
                if jump {
                    assert!((q - 0.75).abs() < 2e-4);
                    assert!((r - 2.0 * PI * alpha).abs() < 0.01 * r);
                }
                assert!(jump || (r - prev).abs() < 0.05 * (1.0 + prev.abs()), "{family:?} q={q}");
                prev = r;
            }
        }
    }

    #[test]
    fn intercept_is_theta0() {
        let mut spec = DgpSpec::new(DgpFamily::Dgp1, 10, 0.0, 1.0, 0);
        assert_eq!(true_intercept(&spec), 1.0);
        spec.theta0 = 0.0;
        assert_eq!(true_intercept(&spec), 0.0);
        spec.theta0 = -2.5;
        assert_eq!(true_intercept(&spec), -2.5);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = DgpSpec::new(DgpFamily::Dgp1, 10, 1.5, 1.0, 0);
        assert!(simulate(&spec).is_err());
        spec.rho = 0.0;
        spec.k = 7;
        assert!(simulate(&spec).is_err());
    }
}
