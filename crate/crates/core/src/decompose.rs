//! Two-group decomposition of the mean selected-outcome gap into wage
//! structure (A), endowment (B) and selection (C) parts, with row-bootstrap
//! standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dgp::Sampler;
use crate::error::{Error, Result};
use crate::montecarlo::{derive_seed, EstimatorConfig};
use crate::nuisance::{self, NuisanceEstimates};

/// Which group's covariate means weight the slope difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Weighting {
    /// `A = Δθ + X̄₀'Δβ`, `B = (X̄₁ - X̄₀)'β̂₁`.
    #[default]
    Group0Weights,
    /// `A = Δθ + X̄₁'Δβ`, `B = (X̄₁ - X̄₀)'β̂₀`.
    Group1Weights,
}

impl Weighting {
    pub fn swapped(self) -> Self {
        match self {
            Weighting::Group0Weights => Weighting::Group1Weights,
            Weighting::Group1Weights => Weighting::Group0Weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposeConfig {
    pub estimator: EstimatorConfig,
    pub weighting: Weighting,
    /// Silverman constant for the nuisance bandwidths.
    pub nuisance_c: f64,
}

impl DecomposeConfig {
    pub fn new(estimator: EstimatorConfig) -> Self {
        DecomposeConfig {
            estimator,
            weighting: Weighting::default(),
            nuisance_c: nuisance::SILVERMAN_C,
        }
    }
}

/// Names of the reported quantities, in the order used for standard errors.
pub const QUANTITIES: [&str; 9] = [
    "gap_overall",
    "component_a",
    "component_b",
    "component_c",
    "gap_selection_corrected",
    "coefficient_terms",
    "intercept_difference",
    "theta_group0",
    "theta_group1",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe {
    /// One entry per name in [`QUANTITIES`].
    pub se: Vec<f64>,
    pub b: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub gap_overall: f64,
    /// Wage structure: intercept difference plus `coefficient_terms`.
    pub component_a: f64,
    /// Endowments.
    pub component_b: f64,
    /// Selection, the residual `gap - A - B`.
    pub component_c: f64,
    pub gap_selection_corrected: f64,
    /// `X̄'(β̂₁ - β̂₀)` with `X̄` per weighting.
    pub coefficient_terms: f64,
    pub theta_by_group: [f64; 2],
    pub intercept_difference: f64,
    pub nuisance: [NuisanceEstimates; 2],
    pub weighting: Weighting,
    pub bootstrap_se: Option<BootstrapSe>,
}

impl DecompositionReport {
    pub fn values(&self) -> [f64; 9] {
        [
            self.gap_overall,
            self.component_a,
            self.component_b,
            self.component_c,
            self.gap_selection_corrected,
            self.coefficient_terms,
            self.intercept_difference,
            self.theta_by_group[0],
            self.theta_by_group[1],
        ]
    }

    /// Decomposition rows with bootstrap SEs in parentheses.
    pub fn to_table(&self) -> String {
        let v = self.values();
        let rows = [
            ("Wage gap (overall)", 0),
            ("Endowments (B)", 2),
            ("Wage gap (selection-corrected, A+B)", 4),
            ("Coefficients", 5),
            ("Difference in intercepts", 6),
            ("Wage structure (A)", 1),
            ("Selection (C)", 3),
        ];
        let mut out = format!("weighting: {:?}\n", self.weighting);
        for (name, i) in rows {
            let se = match &self.bootstrap_se {
                Some(b) => format!(" ({:.4})", b.se[i]),
                None => String::new(),
            };
            out.push_str(&format!("{name:<38} {:>10.4}{se}\n", v[i]));
        }
        if let Some(b) = &self.bootstrap_se {
            out.push_str(&format!("bootstrap B = {} ({} failed)\n", b.b, b.reps_failed));
        }
        out
    }
}

fn selected_means(data: &Dataset) -> Result<(f64, Vec<f64>)> {
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.d()[i]).collect();
    if rows.is_empty() {
        return Err(Error::InsufficientSelected);
    }
    let m = rows.len() as f64;
    let y = rows.iter().map(|&i| data.y()[i]).sum::<f64>() / m;
    let x = (0..data.k())
        .map(|j| rows.iter().map(|&i| data.x()[(i, j)]).sum::<f64>() / m)
        .collect();
    Ok((y, x))
}

struct GroupFit {
    y_bar: f64,
    x_bar: Vec<f64>,
    theta: f64,
    nuisance: NuisanceEstimates,
}

/// Klein–Spady and Robinson for the nuisance values, then the configured
/// intercept estimator. Slopes always come from the Robinson step.
fn fit_group(data: &Dataset, config: &DecomposeConfig) -> Result<GroupFit> {
    let (y_bar, x_bar) = selected_means(data)?;
    let nuisance = nuisance::estimate(data, config.nuisance_c)?;
    let theta = config.estimator.estimate(data, &nuisance.beta, &nuisance.gamma)?;
    Ok(GroupFit {
        y_bar,
        x_bar,
        theta,
        nuisance,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn assemble(g0: GroupFit, g1: GroupFit, weighting: Weighting) -> Result<DecompositionReport> {
    if g0.x_bar.len() != g1.x_bar.len() {
        return Err(Error::DimensionMismatch(format!(
            "groups have {} and {} outcome regressors",
            g0.x_bar.len(),
            g1.x_bar.len()
        )));
    }
    let (b0, b1) = (&g0.nuisance.beta, &g1.nuisance.beta);
    let d_beta: Vec<f64> = b1.iter().zip(b0).map(|(a, b)| a - b).collect();
    let d_x: Vec<f64> = g1.x_bar.iter().zip(&g0.x_bar).map(|(a, b)| a - b).collect();
    let (x_w, b_w) = match weighting {
        Weighting::Group0Weights => (&g0.x_bar, b1),
        Weighting::Group1Weights => (&g1.x_bar, b0),
    };
    let gap = g1.y_bar - g0.y_bar;
    let intercept_difference = g1.theta - g0.theta;
    let coefficient_terms = dot(x_w, &d_beta);
    let a = intercept_difference + coefficient_terms;
    let b = dot(&d_x, b_w);
    Ok(DecompositionReport {
        gap_overall: gap,
        component_a: a,
        component_b: b,
        component_c: gap - a - b,
        gap_selection_corrected: a + b,
        coefficient_terms,
        theta_by_group: [g0.theta, g1.theta],
        intercept_difference,
        nuisance: [g0.nuisance, g1.nuisance],
        weighting,
        bootstrap_se: None,
    })
}

pub fn decompose(data0: &Dataset, data1: &Dataset, config: &DecomposeConfig) -> Result<DecompositionReport> {
    config.estimator.validate()?;
    let g0 = fit_group(data0, config).map_err(|e| e.in_group("group 0"))?;
    let g1 = fit_group(data1, config).map_err(|e| e.in_group("group 1"))?;
    assemble(g0, g1, config.weighting)
}

fn resample(data: &Dataset, sampler: &mut Sampler) -> Result<Dataset> {
    let n = data.n();
    let rows: Vec<usize> = (0..n).map(|_| sampler.index_below(n)).collect();
    data.resample(&rows)
}

/// Evaluates `f` on `b` pairs of within-group row resamples. Replication `r`
/// uses seeds derived from `(seed, group, r)`; failures are `None`.
pub fn bootstrap_with<T, F>(data0: &Dataset, data1: &Dataset, b: usize, seed: u64, workers: usize, f: F) -> Result<Vec<Option<T>>>
where
    T: Send,
    F: Fn(&Dataset, &Dataset) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        (0..b)
            .into_par_iter()
            .map(|r| {
                let mut s0 = Sampler::new(derive_seed(seed, "bootstrap|group0", r as u64));
                let mut s1 = Sampler::new(derive_seed(seed, "bootstrap|group1", r as u64));
                let d0 = resample(data0, &mut s0).ok()?;
                let d1 = resample(data1, &mut s1).ok()?;
                f(&d0, &d1).ok()
            })
            .collect()
    }))
}

/// Sample standard deviation (divisor `B_ok - 1`) of each coordinate over
/// the successful replications.
pub fn bootstrap_sd(draws: &[Option<Vec<f64>>], b: usize) -> Result<BootstrapSe> {
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    if ok.len() < 2 {
        return Err(Error::BootstrapFailed(format!(
            "{} of {b} replications succeeded (need at least 2)",
            ok.len()
        )));
    }
    let m = ok.len() as f64;
    let width = ok[0].len();
    let se = (0..width)
        .map(|j| {
            let mean = ok.iter().map(|v| v[j]).sum::<f64>() / m;
            (ok.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSe {
        se,
        b,
        reps_ok: ok.len(),
        reps_failed: b - ok.len(),
    })
}

/// Every bootstrap decomposition (failures as `None`).
pub fn bootstrap_reports(
    data0: &Dataset,
    data1: &Dataset,
    config: &DecomposeConfig,
    b: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<Option<DecompositionReport>>> {
    config.estimator.validate()?;
    bootstrap_with(data0, data1, b, seed, workers, |d0, d1| decompose(d0, d1, config))
}

pub fn bootstrap_se(
    data0: &Dataset,
    data1: &Dataset,
    config: &DecomposeConfig,
    b: usize,
    seed: u64,
    workers: usize,
) -> Result<BootstrapSe> {
    if b < 2 {
        return Err(Error::BootstrapFailed(format!("B = {b} (need at least 2)")));
    }
    let reports = bootstrap_reports(data0, data1, config, b, seed, workers)?;
    let draws: Vec<Option<Vec<f64>>> = reports.into_iter().map(|r| r.map(|r| r.values().to_vec())).collect();
    bootstrap_sd(&draws, b)
}

/// Point decomposition with bootstrap standard errors attached.
pub fn decompose_with_se(
    data0: &Dataset,
    data1: &Dataset,
    config: &DecomposeConfig,
    b: usize,
    seed: u64,
    workers: usize,
) -> Result<DecompositionReport> {
    let mut report = decompose(data0, data1, config)?;
    report.bootstrap_se = Some(bootstrap_se(data0, data1, config, b, seed, workers)?);
    Ok(report)
}
