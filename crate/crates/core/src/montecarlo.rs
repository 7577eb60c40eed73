//! Replicated simulation of intercept estimators over a (ρ, α) grid.
//!
//! Every replication draws its sample from a seed hashed from the base seed,
//! the cell label and the replication number. All estimators in a cell see
//! the same samples. Replications run on a rayon pool and are reduced in
//! replication order, so results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{as98_intercept, h90_intercept, heckman_two_step, ols_selected, TailRule};
use crate::dgp::{simulate, true_intercept, DgpFamily, DgpSpec, LatentDraw};
use crate::error::{Error, Result};
use crate::nuisance;
use crate::numerics::KernelSpec;
use crate::snn::{snn_intercept, undersmoothing_bandwidth, BandwidthRule, Method};

/// One intercept estimator with its tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EstimatorConfig {
    Snn { kernel_order: usize, rule: BandwidthRule },
    Ols,
    Heckman,
    H90(TailRule),
    As98(TailRule),
}

impl EstimatorConfig {
    pub fn method(&self) -> Method {
        match self {
            EstimatorConfig::Snn { .. } => Method::Snn,
            EstimatorConfig::Ols => Method::Ols,
            EstimatorConfig::Heckman => Method::Heckman,
            EstimatorConfig::H90(_) => Method::H90,
            EstimatorConfig::As98(_) => Method::As98,
        }
    }

    /// Panel label, e.g. `snn[plugin x1.5]` or `h90[q=0.95]`.
    pub fn label(&self) -> String {
        match self {
            EstimatorConfig::Snn { kernel_order, rule } => {
                let bw = match rule {
                    BandwidthRule::Fixed(h) => format!("fixed {h}"),
                    BandwidthRule::PlugIn(s) => format!("plugin x{s}"),
                };
                if *kernel_order == 2 {
                    format!("snn[{bw}]")
                } else {
                    format!("snn[{bw}, order {kernel_order}]")
                }
            }
            EstimatorConfig::Ols => "ols".into(),
            EstimatorConfig::Heckman => "heckman".into(),
            EstimatorConfig::H90(r) => format!("h90[q={}]", r.quantile),
            EstimatorConfig::As98(r) => format!("as98[q={}, tau q={}]", r.quantile, r.tau_quantile),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::Snn { kernel_order, rule } => {
                KernelSpec::of_order(*kernel_order)?;
                rule.validate()
            }
            EstimatorConfig::H90(r) | EstimatorConfig::As98(r) => r.validate(),
            _ => Ok(()),
        }
    }

    /// Intercept estimate given the nuisance values used by the
    /// index-based estimators.
    pub fn estimate(&self, data: &crate::Dataset, beta: &[f64], gamma: &[f64]) -> Result<f64> {
        Ok(match self {
            EstimatorConfig::Snn { kernel_order, rule } => {
                snn_intercept(data, beta, gamma, &KernelSpec::of_order(*kernel_order)?, *rule)?.theta
            }
            EstimatorConfig::Ols => ols_selected(data)?.theta,
            EstimatorConfig::Heckman => heckman_two_step(data)?.theta,
            EstimatorConfig::H90(r) => h90_intercept(data, beta, gamma, *r)?.theta,
            EstimatorConfig::As98(r) => as98_intercept(data, beta, gamma, *r)?.theta,
        })
    }
}

/// Source of β and γ for the index-based estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NuisanceMode {
    /// Pinned to the generating values.
    #[default]
    Truth,
    /// Klein–Spady then Robinson on each sample.
    Estimated,
}

/// JSON has no NaN; empty cells are written as `null` and read back as NaN.
fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    #[serde(deserialize_with = "nan_from_null")]
    pub sq_bias: f64,
    #[serde(deserialize_with = "nan_from_null")]
    pub sd: f64,
    /// `√n · RMSE`.
    #[serde(deserialize_with = "nan_from_null")]
    pub rmse_scaled: f64,
    pub reps_ok: usize,
    pub reps_failed: usize,
}

impl CellStats {
    /// Any failed replication marks the cell unstable.
    pub fn unstable(&self) -> bool {
        self.reps_failed > 0
    }

    /// Summary of per-replication estimates (`None` for failures). The
    /// spread uses the `1/R` convention. With no successes the statistics
    /// are NaN.
    pub fn from_estimates(estimates: &[Option<f64>], theta0: f64, n: usize) -> Self {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let reps_ok = ok.len();
        let reps_failed = estimates.len() - reps_ok;
        if reps_ok == 0 {
            return CellStats {
                sq_bias: f64::NAN,
                sd: f64::NAN,
                rmse_scaled: f64::NAN,
                reps_ok,
                reps_failed,
            };
        }
        let r = reps_ok as f64;
        let mean = ok.iter().sum::<f64>() / r;
        let var = ok.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / r;
        let sq_bias = (mean - theta0).powi(2);
        CellStats {
            sq_bias,
            sd: var.sqrt(),
            rmse_scaled: (n as f64).sqrt() * (sq_bias + var).sqrt(),
            reps_ok,
            reps_failed,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for replication `rep` of the cell named `label`.
pub fn derive_seed(base_seed: u64, label: &str, rep: u64) -> u64 {
    // FNV-1a: stable across platforms and releases, unlike std's hasher.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(splitmix64(splitmix64(base_seed) ^ h) ^ rep)
}

/// Label identifying the simulated design of a cell (not the estimator).
pub fn cell_label(spec: &DgpSpec) -> String {
    format!(
        "{}|n={}|rho={}|alpha={}|l={}|k={}|theta0={}",
        spec.family.label(),
        spec.n,
        spec.rho,
        spec.alpha,
        spec.l,
        spec.k,
        spec.theta0
    )
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Replicates the design in `spec` (its seed is ignored); `eval` maps each
/// draw to one result per estimator.
fn replicate<E>(spec: &DgpSpec, reps: usize, base_seed: u64, workers: usize, width: usize, eval: E) -> Result<Vec<CellStats>>
where
    E: Fn(&LatentDraw) -> Vec<Option<f64>> + Sync,
{
    if reps < 2 {
        return Err(Error::InvalidArgument(format!("reps = {reps} (need at least 2)")));
    }
    spec.validate()?;
    let label = cell_label(spec);
    let per_rep: Vec<Vec<Option<f64>>> = pool(workers)?.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut s = *spec;
                s.seed = derive_seed(base_seed, &label, r as u64);
                match simulate(&s) {
                    Ok(draw) => eval(&draw),
                    Err(_) => vec![None; width],
                }
            })
            .collect()
    });
    let theta0 = true_intercept(spec);
    Ok((0..width)
        .map(|e| {
            let column: Vec<Option<f64>> = per_rep.iter().map(|row| row[e]).collect();
            CellStats::from_estimates(&column, theta0, spec.n)
        })
        .collect())
}

/// Applies every function in `estimators` to common draws of one cell.
pub fn run_cell_multi<F>(
    spec: &DgpSpec,
    reps: usize,
    base_seed: u64,
    workers: usize,
    estimators: &[F],
) -> Result<Vec<CellStats>>
where
    F: Fn(&LatentDraw) -> Result<f64> + Sync,
{
    replicate(spec, reps, base_seed, workers, estimators.len(), |draw| {
        estimators.iter().map(|f| f(draw).ok().filter(|t| t.is_finite())).collect()
    })
}

/// Single-estimator cell with an arbitrary estimator function.
pub fn run_cell_with<F>(spec: &DgpSpec, reps: usize, base_seed: u64, workers: usize, f: F) -> Result<CellStats>
where
    F: Fn(&LatentDraw) -> Result<f64> + Sync,
{
    Ok(run_cell_multi(spec, reps, base_seed, workers, &[f])?[0])
}

/// Estimates of β and γ for one draw.
fn nuisance_for(draw: &LatentDraw, spec: &DgpSpec, mode: NuisanceMode) -> Result<(Vec<f64>, Vec<f64>)> {
    match mode {
        NuisanceMode::Truth => Ok((spec.beta0(), spec.gamma0())),
        NuisanceMode::Estimated => {
            let est = nuisance::estimate(&draw.dataset, nuisance::SILVERMAN_C)?;
            Ok((est.beta, est.gamma))
        }
    }
}

/// Statistics of several estimators on common samples from one cell.
pub fn run_cell_estimators(
    spec: &DgpSpec,
    estimators: &[EstimatorConfig],
    reps: usize,
    base_seed: u64,
    workers: usize,
    mode: NuisanceMode,
) -> Result<Vec<CellStats>> {
    for e in estimators {
        e.validate()?;
    }
    replicate(spec, reps, base_seed, workers, estimators.len(), |draw| {
        // β and γ are estimated once per draw and shared by all estimators.
        let nuisance = nuisance_for(draw, spec, mode);
        estimators
            .iter()
            .map(|e| {
                let result = match (e, &nuisance) {
                    (EstimatorConfig::Ols | EstimatorConfig::Heckman, _) => e.estimate(&draw.dataset, &[], &[]),
                    (_, Ok((b, g))) => e.estimate(&draw.dataset, b, g),
                    (_, Err(err)) => Err(err.clone()),
                };
                result.ok().filter(|t| t.is_finite())
            })
            .collect()
    })
}

/// One estimator on one cell.
pub fn run_cell(
    spec: &DgpSpec,
    estimator: &EstimatorConfig,
    reps: usize,
    base_seed: u64,
    mode: NuisanceMode,
) -> Result<CellStats> {
    Ok(run_cell_estimators(spec, std::slice::from_ref(estimator), reps, base_seed, 1, mode)?[0])
}

/// Grid of designs and estimators for one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePlan {
    pub family: DgpFamily,
    pub n: usize,
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    pub estimators: Vec<EstimatorConfig>,
    pub reps: usize,
    pub base_seed: u64,
    pub nuisance: NuisanceMode,
}

impl TablePlan {
    /// The standard (ρ, α) grid.
    pub fn standard(family: DgpFamily, n: usize, estimators: Vec<EstimatorConfig>, reps: usize, base_seed: u64) -> Self {
        TablePlan {
            family,
            n,
            rhos: vec![0.0, 0.25, 0.5, 0.75, 0.95],
            alphas: vec![2.0, 1.5, 1.25, 1.0],
            estimators,
            reps,
            base_seed,
            nuisance: NuisanceMode::Truth,
        }
    }

    /// The proposed estimator at 1, 2/3 and 3/2 times the plug-in bandwidth.
    pub fn bandwidth_panels() -> Vec<EstimatorConfig> {
        [1.0, 2.0 / 3.0, 1.5]
            .into_iter()
            .map(|s| EstimatorConfig::Snn {
                kernel_order: 2,
                rule: BandwidthRule::PlugIn(s),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub rho: f64,
    pub alpha: f64,
    pub panel: usize,
    pub stats: CellStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub family: DgpFamily,
    pub n: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    pub panels: Vec<String>,
    pub estimators: Vec<EstimatorConfig>,
    pub cells: Vec<CellResult>,
}

pub fn run_table(plan: &TablePlan, workers: usize) -> Result<MonteCarloReport> {
    if plan.rhos.is_empty() || plan.alphas.is_empty() || plan.estimators.is_empty() {
        return Err(Error::InvalidArgument("empty Monte Carlo plan".into()));
    }
    let mut cells = Vec::new();
    for &rho in &plan.rhos {
        for &alpha in &plan.alphas {
            let spec = DgpSpec::new(plan.family, plan.n, rho, alpha, 0);
            let stats = run_cell_estimators(&spec, &plan.estimators, plan.reps, plan.base_seed, workers, plan.nuisance)?;
            cells.extend(stats.into_iter().enumerate().map(|(panel, stats)| CellResult {
                rho,
                alpha,
                panel,
                stats,
            }));
        }
    }
    Ok(MonteCarloReport {
        family: plan.family,
        n: plan.n,
        reps: plan.reps,
        base_seed: plan.base_seed,
        rhos: plan.rhos.clone(),
        alphas: plan.alphas.clone(),
        panels: plan.estimators.iter().map(|e| e.label()).collect(),
        estimators: plan.estimators.clone(),
        cells,
    })
}

impl MonteCarloReport {
    pub fn cell(&self, panel: usize, rho: f64, alpha: f64) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.panel == panel && c.rho == rho && c.alpha == alpha)
            .map(|c| &c.stats)
    }

    /// One row per (panel, ρ); per α the columns sq_bias, sd, rmse_scaled and
    /// the failure count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("panel,rho");
        for a in &self.alphas {
            out.push_str(&format!(",sq_bias@{a},sd@{a},rmse_scaled@{a},failed@{a}"));
        }
        out.push('\n');
        for (p, name) in self.panels.iter().enumerate() {
            for &rho in &self.rhos {
                out.push_str(&format!("\"{name}\",{rho}"));
                for &alpha in &self.alphas {
                    match self.cell(p, rho, alpha) {
                        Some(s) => out.push_str(&format!(
                            ",{},{},{},{}",
                            s.sq_bias, s.sd, s.rmse_scaled, s.reps_failed
                        )),
                        None => out.push_str(",,,,"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Markdown tables, one per panel, with failed replications counted
    /// next to the affected cell.
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "{} n={} reps={} seed={}\n",
            self.family.label(),
            self.n,
            self.reps,
            self.base_seed
        );
        for (p, name) in self.panels.iter().enumerate() {
            out.push_str(&format!("\n### {name}\n\n| rho |"));
            for a in &self.alphas {
                out.push_str(&format!(" sq bias ({a:.2}) | sd ({a:.2}) | RMSE ({a:.2}) |"));
            }
            out.push_str("\n|---|");
            out.push_str(&"---|---|---|".repeat(self.alphas.len()));
            out.push('\n');
            for &rho in &self.rhos {
                out.push_str(&format!("| {rho:.2} |"));
                for &alpha in &self.alphas {
                    let s = self.cell(p, rho, alpha).expect("complete grid");
                    let flag = if s.unstable() {
                        format!(" ({} failed)", s.reps_failed)
                    } else {
                        String::new()
                    };
                    out.push_str(&format!(" {:.4} | {:.4} | {:.4}{flag} |", s.sq_bias, s.sd, s.rmse_scaled));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// RMSE-versus-n slope for an arbitrary error function `f(n, seed)`.
pub fn rate_check_with<F>(ns: &[usize], reps: usize, base_seed: u64, workers: usize, f: F) -> Result<f64>
where
    F: Fn(usize, u64) -> Result<f64> + Sync,
{
    if ns.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 sample sizes, got {}", ns.len())));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("sample sizes must increase".into()));
    }
    let pool = pool(workers)?;
    let mut rmse = Vec::with_capacity(ns.len());
    for &n in ns {
        let label = format!("rate|n={n}");
        let errors: Vec<Option<f64>> = pool.install(|| {
            (0..reps)
                .into_par_iter()
                .map(|r| f(n, derive_seed(base_seed, &label, r as u64)).ok().filter(|e| e.is_finite()))
                .collect()
        });
        let ok: Vec<f64> = errors.into_iter().flatten().collect();
        if ok.is_empty() {
            return Err(Error::CellFailed(format!("every replication failed at n = {n}")));
        }
        rmse.push((ok.iter().map(|e| e * e).sum::<f64>() / ok.len() as f64).sqrt());
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok(log_log_slope(&xs, &rmse))
}

/// RMSE slope of the proposed estimator with the bandwidth `c n^{-1/(2p+1)}`
/// at each sample size; β and γ are pinned to truth.
pub fn rate_check(
    ns: &[usize],
    template: &DgpSpec,
    kernel_order: usize,
    c: f64,
    reps: usize,
    base_seed: u64,
    workers: usize,
) -> Result<f64> {
    let kernel = KernelSpec::of_order(kernel_order)?;
    let cell = cell_label(template);
    rate_check_with(ns, reps, base_seed ^ splitmix64(cell.len() as u64), workers, |n, seed| {
        let mut spec = *template;
        spec.n = n;
        spec.seed = seed;
        let draw = simulate(&spec)?;
        let h = undersmoothing_bandwidth(n, kernel_order, c).min(1.0);
        let est = snn_intercept(&draw.dataset, &spec.beta0(), &spec.gamma0(), &kernel, BandwidthRule::Fixed(h))?;
        Ok(est.theta - true_intercept(&spec))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_estimator_has_zero_stats() {
        let spec = DgpSpec::new(DgpFamily::Dgp1, 50, 0.5, 2.0, 0);
        let stats = run_cell_with(&spec, 10, 1, 1, |_| Ok(1.0)).unwrap();
        assert_eq!((stats.sq_bias, stats.sd, stats.rmse_scaled), (0.0, 0.0, 0.0));
        assert_eq!((stats.reps_ok, stats.reps_failed), (10, 0));
    }

    #[test]
    fn summary_statistics_by_hand() {
        let est = [Some(1.0), Some(3.0), None, Some(2.0)];
        let s = CellStats::from_estimates(&est, 1.0, 4);
        assert_eq!((s.reps_ok, s.reps_failed), (3, 1));
        assert!((s.sq_bias - 1.0).abs() < 1e-15);
        assert!((s.sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((s.rmse_scaled - 2.0 * (1.0 + 2.0 / 3.0f64).sqrt()).abs() < 1e-12);
        assert!(s.unstable());
        let none = CellStats::from_estimates(&[None, None], 1.0, 4);
        assert_eq!(none.reps_ok, 0);
        assert!(none.rmse_scaled.is_nan());
    }

    #[test]
    fn seeds_differ_by_cell_and_replication() {
        let a = derive_seed(42, "dgp1|n=100", 0);
        assert_ne!(a, derive_seed(42, "dgp1|n=100", 1));
        assert_ne!(a, derive_seed(42, "dgp1|n=400", 0));
        assert_ne!(a, derive_seed(43, "dgp1|n=100", 0));
        assert_eq!(a, derive_seed(42, "dgp1|n=100", 0));
    }

    #[test]
    fn exact_power_law_slope() {
        let slope = rate_check_with(&[100, 400, 1600, 6400], 5, 0, 1, |n, _| Ok(3.0 * (n as f64).powf(-0.4))).unwrap();
        assert!((slope + 0.4).abs() < 1e-10);
    }

    #[test]
    fn rate_check_rejects_short_grids() {
        assert!(rate_check_with(&[100, 200], 5, 0, 1, |_, _| Ok(1.0)).is_err());
        assert!(matches!(
            rate_check_with(&[1, 2, 3], 5, 0, 1, |_, _| Err(Error::EmptyTail)),
            Err(Error::CellFailed(_))
        ));
    }

    #[test]
    fn one_by_one_plan_matches_run_cell() {
        let est = EstimatorConfig::Snn {
            kernel_order: 2,
            rule: BandwidthRule::PlugIn(1.0),
        };
        let plan = TablePlan {
            family: DgpFamily::Dgp1,
            n: 100,
            rhos: vec![0.5],
            alphas: vec![1.5],
            estimators: vec![est],
            reps: 20,
            base_seed: 9,
            nuisance: NuisanceMode::Truth,
        };
        let report = run_table(&plan, 2).unwrap();
        assert_eq!(report.cells.len(), 1);
        let direct = run_cell(&DgpSpec::new(DgpFamily::Dgp1, 100, 0.5, 1.5, 0), &est, 20, 9, NuisanceMode::Truth).unwrap();
        assert_eq!(report.cells[0].stats, direct);
    }

    #[test]
    fn report_formats() {
        let plan = TablePlan {
            family: DgpFamily::Dgp2,
            n: 60,
            rhos: vec![0.0, 0.5],
            alphas: vec![2.0, 1.0],
            estimators: vec![EstimatorConfig::Ols, EstimatorConfig::As98(TailRule::default())],
            reps: 5,
            base_seed: 3,
            nuisance: NuisanceMode::Truth,
        };
        let report = run_table(&plan, 1).unwrap();
        assert_eq!(report.cells.len(), 8);
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * 2);
        assert!(csv.starts_with("panel,rho,sq_bias@2,sd@2,rmse_scaled@2,failed@2"));
        let back: MonteCarloReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back.cells.len(), 8);
        assert!(report.to_markdown().contains("### as98"));
    }
}
