mod args;

use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use snn_core::decompose::{decompose_with_se, DecomposeConfig, Weighting, QUANTITIES};
use snn_core::dgp::{identification_ratio, simulate, DgpSpec};
use snn_core::io::{format_f64, load_csv, write_csv_to, CsvSchema, Loaded};
use snn_core::montecarlo::{rate_check, run_table, EstimatorConfig, TablePlan};
use snn_core::numerics::{kernel_l2, kernel_moment, KernelSpec, QuadratureGrid};
use snn_core::snn::snn_intercept;
use snn_core::{baselines, nuisance, Dataset, Error};

use args::{Cli, Command, Estimator, Format, WeightingArg};

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::from(e))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::McTable(a) => cmd_mc_table(a),
        Command::RateCheck(a) => cmd_rate_check(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Decompose(a) => cmd_decompose(a),
        Command::KernelCheck(a) => cmd_kernel_check(a),
        Command::IdentCheck(a) => cmd_ident_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn schema_of(s: &args::SchemaArgs, group: Option<&str>) -> CsvSchema {
    CsvSchema {
        outcome_column: s.outcome.clone(),
        selection_column: s.selection.clone(),
        x_columns: s.x.clone(),
        z_columns: s.z.clone(),
        group_column: group.map(str::to_string),
    }
}

fn configs(e: &args::EstimatorArgs) -> Result<Vec<EstimatorConfig>, Failure> {
    let configs = e.configs();
    for c in &configs {
        c.validate()?;
    }
    Ok(configs)
}

/// Plain table as CSV, JSON records, or a markdown table.
fn render(header: &[&str], rows: &[Vec<String>], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut s = header.join(",") + "\n";
            for r in rows {
                s += &r.join(",");
                s.push('\n');
            }
            s
        }
        Format::Markdown => {
            let mut s = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
            for r in rows {
                s += &format!("| {} |\n", r.join(" | "));
            }
            s
        }
        Format::Json => {
            let records: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let obj = header
                        .iter()
                        .zip(r)
                        .map(|(h, v)| {
                            let value = match v.parse::<f64>() {
                                Ok(x) if x.is_finite() => serde_json::json!(x),
                                Ok(_) => serde_json::Value::Null,
                                Err(_) => serde_json::json!(v),
                            };
                            (h.to_string(), value)
                        })
                        .collect();
                    serde_json::Value::Object(obj)
                })
                .collect();
            serde_json::to_string_pretty(&records).expect("json") + "\n"
        }
    }
}

fn cmd_simulate(a: args::SimulateArgs) -> Outcome {
    let spec = DgpSpec::new(a.dgp.into(), a.n, a.rho, a.alpha, a.seed);
    let draw = simulate(&spec)?;
    let schema = CsvSchema::simulated(spec.k, spec.l);
    let extra: Vec<(&str, &[f64])> = if a.latent {
        vec![("u", &draw.u), ("v", &draw.v), ("index", &draw.index)]
    } else {
        Vec::new()
    };
    match &a.out {
        Some(path) => write_csv_to(std::fs::File::create(path)?, &draw.dataset, &schema, &extra)?,
        None => write_csv_to(std::io::stdout().lock(), &draw.dataset, &schema, &extra)?,
    }
    Ok(())
}

fn cmd_mc_table(a: args::McTableArgs) -> Outcome {
    let mut plan = TablePlan::standard(a.dgp.into(), a.n, configs(&a.estimators)?, a.reps, a.run.seed);
    plan.rhos = a.rho;
    plan.alphas = a.alpha;
    plan.nuisance = a.nuisance.into();
    let report = run_table(&plan, a.run.workers)?;
    let text = match a.run.format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
        Format::Markdown => report.to_markdown(),
    };
    emit(a.run.out.as_deref(), &text)
}

fn cmd_rate_check(a: args::RateCheckArgs) -> Outcome {
    if a.estimator != Estimator::Snn {
        return Err(Failure::Usage("rate-check only supports --estimator snn".into()));
    }
    if !(a.c > 0.0 && a.c.is_finite()) {
        return Err(Failure::Usage(format!("--c {} must be positive", a.c)));
    }
    let template = DgpSpec::new(a.dgp.into(), a.ns[0], a.rho, a.alpha, a.run.seed);
    let slope = rate_check(&a.ns, &template, a.kernel_order, a.c, a.reps, a.run.seed, a.run.workers)?;
    let p = a.kernel_order as f64;
    let target = -p / (2.0 * p + 1.0);
    let ns = a.ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ");
    let rows = vec![vec![ns, a.c.to_string(), format!("{slope:.6}"), format!("{target:.6}")]];
    emit(a.run.out.as_deref(), &render(&["ns", "c", "slope", "target"], &rows, a.run.format))
}

fn nuisance_values(data: &Dataset, beta: Option<Vec<f64>>, gamma: Option<Vec<f64>>) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    Ok(match (beta, gamma) {
        (Some(b), Some(g)) => (b, g),
        (None, None) => {
            let est = nuisance::estimate(data, nuisance::SILVERMAN_C)?;
            (est.beta, est.gamma)
        }
        (None, Some(g)) => {
            let h = nuisance::silverman_bandwidth(&data.index(&g)?, nuisance::SILVERMAN_C);
            (nuisance::robinson_beta(data, &g, h)?, g)
        }
        (Some(_), None) => {
            return Err(Failure::Usage("--beta needs --gamma".into()));
        }
    })
}

fn cmd_estimate(a: args::EstimateArgs) -> Outcome {
    let schema = schema_of(&a.schema, None);
    let data = match load_csv(&a.schema.data, &schema)? {
        Loaded::Single(d) => d,
        Loaded::Pair(..) => unreachable!("no group column"),
    };
    let configs = configs(&a.estimators)?;
    let needs_index = configs
        .iter()
        .any(|c| !matches!(c, EstimatorConfig::Ols | EstimatorConfig::Heckman));
    let (beta, gamma) = if needs_index {
        nuisance_values(&data, a.beta, a.gamma)?
    } else {
        (Vec::new(), Vec::new())
    };
    let mut rows = Vec::new();
    for c in &configs {
        let row = match c {
            EstimatorConfig::Snn { kernel_order, rule } => {
                let e = snn_intercept(&data, &beta, &gamma, &KernelSpec::of_order(*kernel_order)?, *rule)?;
                vec![format_f64(e.theta), format_f64(e.std_error), format_f64(e.bandwidth), e.effective_n.to_string()]
            }
            EstimatorConfig::Ols => {
                let f = baselines::ols_selected(&data)?;
                vec![format_f64(f.theta), format_f64(f.std_errors[0]), String::new(), data.n_selected().to_string()]
            }
            EstimatorConfig::Heckman => {
                let f = baselines::heckman_two_step(&data)?;
                vec![format_f64(f.theta), String::new(), String::new(), data.n_selected().to_string()]
            }
            EstimatorConfig::H90(r) => {
                let e = baselines::h90_intercept(&data, &beta, &gamma, *r)?;
                vec![format_f64(e.theta), format_f64(e.std_error), format_f64(e.bandwidth), e.effective_n.to_string()]
            }
            EstimatorConfig::As98(r) => {
                let e = baselines::as98_intercept(&data, &beta, &gamma, *r)?;
                vec![format_f64(e.theta), format_f64(e.std_error), format_f64(e.bandwidth), e.effective_n.to_string()]
            }
        };
        rows.push(std::iter::once(c.label()).chain(row).collect());
    }
    let header = ["estimator", "theta", "std_error", "bandwidth", "effective_n"];
    emit(a.out.as_deref(), &render(&header, &rows, a.format))
}

fn cmd_decompose(a: args::DecomposeArgs) -> Outcome {
    let schema = schema_of(&a.schema, Some(&a.group));
    let (d0, d1) = match load_csv(&a.schema.data, &schema)? {
        Loaded::Pair(d0, d1) => (d0, d1),
        Loaded::Single(_) => unreachable!("group column given"),
    };
    let configs = configs(&a.estimators)?;
    let mut text = String::new();
    let mut reports = Vec::new();
    for c in &configs {
        let mut config = DecomposeConfig::new(*c);
        config.weighting = match a.weighting {
            WeightingArg::Group0 => Weighting::Group0Weights,
            WeightingArg::Group1 => Weighting::Group1Weights,
        };
        let report = decompose_with_se(&d0, &d1, &config, a.b, a.run.seed, a.run.workers)?;
        match a.run.format {
            Format::Markdown => {
                text += &format!("## {}\n\n{}\n", c.label(), report.to_table());
            }
            Format::Csv => {
                if text.is_empty() {
                    text += "estimator,quantity,value,se\n";
                }
                let se = report.bootstrap_se.as_ref().map(|b| b.se.clone()).unwrap_or_default();
                for (i, (name, v)) in QUANTITIES.iter().zip(report.values()).enumerate() {
                    let s = se.get(i).map_or(String::new(), |&s| format_f64(s));
                    text += &format!("{},{name},{},{s}\n", c.label(), format_f64(v));
                }
            }
            Format::Json => reports.push(serde_json::json!({ "estimator": c.label(), "report": report })),
        }
    }
    if a.run.format == Format::Json {
        text = serde_json::to_string_pretty(&reports).expect("json") + "\n";
    }
    emit(a.run.out.as_deref(), &text)
}

fn cmd_kernel_check(a: args::KernelCheckArgs) -> Outcome {
    let kernel = KernelSpec::of_order(a.kernel_order)?;
    let grid = QuadratureGrid::simpson(a.nodes)?;
    let mut rows: Vec<Vec<String>> = (0..=a.kernel_order as u32)
        .map(|j| vec![format!("moment_{j}"), format_f64(kernel_moment(&kernel, j, &grid))])
        .collect();
    rows.push(vec!["l2".into(), format_f64(kernel_l2(&kernel, &grid))]);
    println!("{}", render(&["quantity", "value"], &rows, a.format).trim_end());
    Ok(())
}

fn cmd_ident_check(a: args::IdentCheckArgs) -> Outcome {
    let qs = a.q.clone().unwrap_or_else(|| {
        let mut qs: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
        qs.extend([0.999, 1.0 - 1e-4, 1.0 - 1e-5, 1.0 - 1e-6, 1.0 - 1e-7]);
        qs
    });
    let mut rows = Vec::new();
    for q in qs {
        let r = match identification_ratio(a.dgp.into(), a.alpha, q) {
            Ok(r) => format_f64(r),
            Err(Error::OutOfRange) => "inf".into(),
            Err(e) => return Err(e.into()),
        };
        rows.push(vec![format!("{q}"), r]);
    }
    println!("{}", render(&["q", "ratio"], &rows, a.format).trim_end());
    Ok(())
}
