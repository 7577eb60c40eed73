use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snn_core::baselines::TailRule;
use snn_core::dgp::DgpFamily;
use snn_core::montecarlo::{EstimatorConfig, NuisanceMode};
use snn_core::snn::BandwidthRule;

#[derive(Parser, Debug)]
#[command(name = "snnsel", version, about = "Intercept estimation in sample-selection models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw one simulated sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Monte Carlo table over a (rho, alpha) grid.
    McTable(McTableArgs),
    /// Log-log slope of RMSE against n under the undersmoothing schedule.
    RateCheck(RateCheckArgs),
    /// Intercept of one dataset.
    Estimate(EstimateArgs),
    /// Two-group gap decomposition with bootstrap standard errors.
    Decompose(DecomposeArgs),
    /// Kernel moments and squared norm by quadrature.
    KernelCheck(KernelCheckArgs),
    /// Identification ratio profile over q.
    IdentCheck(IdentCheckArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dgp {
    Dgp1,
    Dgp2,
}

impl From<Dgp> for DgpFamily {
    fn from(d: Dgp) -> Self {
        match d {
            Dgp::Dgp1 => DgpFamily::Dgp1,
            Dgp::Dgp2 => DgpFamily::Dgp2,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Estimator {
    Snn,
    Ols,
    Heckman,
    H90,
    As98,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
    Markdown,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Nuisance {
    #[default]
    Truth,
    Estimated,
}

impl From<Nuisance> for NuisanceMode {
    fn from(n: Nuisance) -> Self {
        match n {
            Nuisance::Truth => NuisanceMode::Truth,
            Nuisance::Estimated => NuisanceMode::Estimated,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WeightingArg {
    #[default]
    Group0,
    Group1,
}

/// `plugin`, `plugin:<scale>` or `fixed:<h>`.
pub fn parse_bandwidth(s: &str) -> Result<BandwidthRule, String> {
    let (kind, value) = match s.split_once(':') {
        Some((k, v)) => (k, Some(v)),
        None => (s, None),
    };
    let number = |v: &str| v.parse::<f64>().map_err(|_| format!("bad number {v:?} in bandwidth {s:?}"));
    let rule = match (kind, value) {
        ("plugin", None) => BandwidthRule::PlugIn(1.0),
        ("plugin", Some(v)) => BandwidthRule::PlugIn(number(v)?),
        ("fixed", Some(v)) => BandwidthRule::Fixed(number(v)?),
        _ => return Err(format!("bandwidth {s:?}: expected plugin, plugin:<scale> or fixed:<h>")),
    };
    rule.validate().map_err(|e| e.to_string())?;
    Ok(rule)
}

fn parse_quantile(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(q) if q > 0.0 && q < 1.0 => Ok(q),
        _ => Err(format!("{s:?} is not a number in (0, 1)")),
    }
}

#[derive(Args, Debug, Clone)]
pub struct EstimatorArgs {
    /// Intercept estimator(s).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "snn")]
    pub estimator: Vec<Estimator>,
    /// Bandwidth rule(s) for snn: plugin, plugin:<scale>, fixed:<h>.
    #[arg(long, value_parser = parse_bandwidth, value_delimiter = ',', default_value = "plugin")]
    pub bandwidth: Vec<BandwidthRule>,
    #[arg(long, default_value_t = 2)]
    pub kernel_order: usize,
    /// Index quantile giving b_n for h90 and as98.
    #[arg(long, value_parser = parse_quantile, default_value_t = 0.95)]
    pub tail_quantile: f64,
    /// Index quantile giving tau for as98.
    #[arg(long, value_parser = parse_quantile, default_value_t = 0.5)]
    pub tau_quantile: f64,
}

impl EstimatorArgs {
    /// One configuration per estimator, and per bandwidth for snn.
    pub fn configs(&self) -> Vec<EstimatorConfig> {
        let tail = TailRule {
            quantile: self.tail_quantile,
            tau_quantile: self.tau_quantile,
        };
        let mut out = Vec::new();
        for e in &self.estimator {
            match e {
                Estimator::Snn => out.extend(self.bandwidth.iter().map(|&rule| EstimatorConfig::Snn {
                    kernel_order: self.kernel_order,
                    rule,
                })),
                Estimator::Ols => out.push(EstimatorConfig::Ols),
                Estimator::Heckman => out.push(EstimatorConfig::Heckman),
                Estimator::H90 => out.push(EstimatorConfig::H90(tail)),
                Estimator::As98 => out.push(EstimatorConfig::As98(tail)),
            }
        }
        out
    }
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SchemaArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "y", default_value = "y")]
    pub outcome: String,
    #[arg(long = "d", default_value = "d")]
    pub selection: String,
    /// Outcome regressors, comma separated.
    #[arg(long = "x", value_delimiter = ',', required = true)]
    pub x: Vec<String>,
    /// Selection regressors, comma separated.
    #[arg(long = "z", value_delimiter = ',', required = true)]
    pub z: Vec<String>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub dgp: Dgp,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Also write the latent u, v and the true index.
    #[arg(long)]
    pub latent: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct McTableArgs {
    #[arg(long, value_enum)]
    pub dgp: Dgp,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,0.95")]
    pub rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,1.5,1.25,1")]
    pub alpha: Vec<f64>,
    #[command(flatten)]
    pub estimators: EstimatorArgs,
    #[arg(long, value_enum, default_value_t = Nuisance::Truth)]
    pub nuisance: Nuisance,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct RateCheckArgs {
    #[arg(long, value_enum, default_value_t = Dgp::Dgp1)]
    pub dgp: Dgp,
    #[arg(long, value_delimiter = ',', default_value = "200,400,800,1600")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 400)]
    pub reps: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Only snn has a bandwidth schedule.
    #[arg(long, value_enum, default_value_t = Estimator::Snn)]
    pub estimator: Estimator,
    /// Constant c in h = c n^(-1/(2p+1)).
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 2)]
    pub kernel_order: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    #[command(flatten)]
    pub estimators: EstimatorArgs,
    /// Outcome slopes; estimated by Robinson's method when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Option<Vec<f64>>,
    /// Selection coefficients; estimated by Klein-Spady when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// 0/1 column splitting the two groups.
    #[arg(long)]
    pub group: String,
    #[command(flatten)]
    pub estimators: EstimatorArgs,
    #[arg(long, value_enum, default_value_t = WeightingArg::Group0)]
    pub weighting: WeightingArg,
    /// Bootstrap replications.
    #[arg(long = "bootstrap", default_value_t = 200)]
    pub b: usize,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct KernelCheckArgs {
    #[arg(long, default_value_t = 2)]
    pub kernel_order: usize,
    #[arg(long, default_value_t = 2001)]
    pub nodes: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct IdentCheckArgs {
    #[arg(long, value_enum)]
    pub dgp: Dgp,
    #[arg(long)]
    pub alpha: f64,
    /// Evaluation points; an even grid on [0.01, 0.99] plus points near 1 when absent.
    #[arg(long, value_delimiter = ',')]
    pub q: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}
