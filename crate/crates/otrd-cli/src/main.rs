//! Command-line interface for the otrd solvers.
//!
//! Exit codes: 0 success, 1 input error, 2 solver non-convergence.

mod spec;

use clap::{Parser, Subcommand, ValueEnum};
use otrd::blahut_arimoto::{ba_capacity, rd_sweep_ba};
use otrd::capacity_ot::capacity_via_ot;
use otrd::exact_ot::emd;
use otrd::measures::{squared_error_matrix, DiscreteDistribution};
use otrd::quantizer::{extremal_emd_quantizer, kmeans_1d_exact, lloyd_max_restarts, Quantizer};
use otrd::sinkhorn::sinkhorn_eps_sweep;
use otrd::sinkhorn_rd::rd_sweep_sinkhorn;
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

// Solver settings; resolved values are embedded in every JSON output.
const BA_TOL: f64 = 1e-10;
const BA_MAX_ITER: usize = 200_000;
const SRD_OUTER_TOL: f64 = 1e-9;
const SRD_OUTER_MAX_ITER: usize = 5_000;
const SRD_INNER_TOL: f64 = 1e-10;
const SRD_INNER_MAX_ITER: usize = 200_000;
const LLOYD_TOL: f64 = 1e-12;
const LLOYD_MAX_ITER: usize = 10_000;
const SINKHORN_TOL: f64 = 1e-9;
const SINKHORN_MAX_ITER: usize = 200_000;
const CAP_OT_OUTER_TOL: f64 = 1e-6;
const CAP_OT_OUTER_MAX_ITER: usize = 500;
const CAP_OT_INNER_TOL: f64 = 1e-9;
const CAP_OT_INNER_MAX_ITER: usize = 200_000;

#[derive(Parser)]
#[command(name = "otrd", version, about = "Rate-distortion, optimal transport, and quantizer solvers for discrete sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rate-distortion curve of a discrete source over a λ grid.
    Rd {
        /// Built-in fixture name or path to a problem TOML file.
        spec: String,
        #[arg(long, value_enum, default_value_t = RdMethod::Both)]
        method: RdMethod,
        /// Log-spaced multiplier grid, min:max:count.
        #[arg(long, default_value = "0.01:100:20")]
        lambdas: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Optimal M-level scalar quantizers of a discrete source.
    Quantize {
        spec: String,
        /// Codebook sizes: a single integer or an inclusive range a..b.
        #[arg(long, default_value = "1..8")]
        levels: String,
        #[arg(long, value_enum, default_value_t = QuantMethod::All)]
        method: QuantMethod,
        /// Seeded restarts for the Lloyd-based methods.
        #[arg(long, default_value_t = 20)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Channel capacity; the OT route is experimental.
    Capacity {
        spec: String,
        #[arg(long, value_enum, default_value_t = CapMethod::Ba)]
        method: CapMethod,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Optimal transport between two sources under squared-error cost.
    Ot {
        /// First marginal: fixture name or source TOML file.
        mu: String,
        /// Second marginal: fixture name or source TOML file.
        nu: String,
        /// Regularization ε, or "exact" for unregularized transport.
        #[arg(long, default_value = "exact")]
        eps: String,
        /// Comma-separated ε values; runs a warm-started descending sweep.
        #[arg(long)]
        eps_sweep: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum RdMethod {
    Ba,
    Sinkhorn,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum QuantMethod {
    Lloyd,
    Emd,
    Exact,
    All,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CapMethod {
    Ba,
    Ot,
    Both,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// A rendered report plus whether every solver run in it converged.
struct Report {
    text: String,
    all_converged: bool,
}

enum CliError {
    /// Bad flags, unparsable spec file, or invalid problem data.
    Input(String),
}

impl From<otrd::Error> for CliError {
    fn from(e: otrd::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<String> for CliError {
    fn from(e: String) -> Self {
        CliError::Input(e)
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help / --version are successes, everything else is an
            // input error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (report, out) = match run(cli.command) {
        Ok(pair) => pair,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    if let Some(path) = out {
        if let Err(e) = std::fs::write(&path, &report.text) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
    } else {
        print!("{}", report.text);
    }
    if report.all_converged {
        ExitCode::from(0)
    } else {
        eprintln!("warning: at least one solver did not converge");
        ExitCode::from(2)
    }
}

fn run(command: Command) -> Result<(Report, Option<PathBuf>), CliError> {
    match command {
        Command::Rd {
            spec,
            method,
            lambdas,
            out,
            format,
        } => Ok((cmd_rd(&spec, method, &lambdas, format)?, out)),
        Command::Quantize {
            spec,
            levels,
            method,
            restarts,
            seed,
            out,
            format,
        } => Ok((cmd_quantize(&spec, &levels, method, restarts, seed, format)?, out)),
        Command::Capacity {
            spec,
            method,
            out,
            format,
        } => Ok((cmd_capacity(&spec, method, format)?, out)),
        Command::Ot {
            mu,
            nu,
            eps,
            eps_sweep,
            out,
            format,
        } => Ok((cmd_ot(&mu, &nu, &eps, eps_sweep.as_deref(), format)?, out)),
    }
}

/// Parses a log-spaced grid spec "min:max:count".
fn parse_lambda_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("--lambdas: expected min:max:count, got '{s}'"));
    }
    let min: f64 = parts[0]
        .parse()
        .map_err(|_| format!("--lambdas: bad min '{}'", parts[0]))?;
    let max: f64 = parts[1]
        .parse()
        .map_err(|_| format!("--lambdas: bad max '{}'", parts[1]))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| format!("--lambdas: bad count '{}'", parts[2]))?;
    if !(min > 0.0) || !(max >= min) || count == 0 {
        return Err(format!(
            "--lambdas: need 0 < min ≤ max and count ≥ 1, got '{s}'"
        ));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let (l0, l1) = (min.log10(), max.log10());
    Ok((0..count)
        .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (count - 1) as f64))
        .collect())
}

/// Parses a codebook-size spec: "5" or "1..8" (inclusive).
fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    let parse_one = |t: &str| -> Result<usize, String> {
        let v: usize = t
            .parse()
            .map_err(|_| format!("--levels: bad integer '{t}'"))?;
        if v == 0 {
            return Err("--levels: levels must be ≥ 1".to_string());
        }
        Ok(v)
    };
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_one(a)?, parse_one(b)?);
        if a > b {
            return Err(format!("--levels: empty range '{s}'"));
        }
        Ok((a..=b).collect())
    } else {
        Ok(vec![parse_one(s)?])
    }
}

fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn cmd_rd(spec_arg: &str, method: RdMethod, grid: &str, format: Format) -> Result<Report, CliError> {
    let (source, _, distortion) = spec::expect_source(spec_arg, spec::resolve(spec_arg)?)?;
    let lambdas = parse_lambda_grid(grid)?;

    struct Row {
        lambda: f64,
        method: &'static str,
        rate_nats: f64,
        distortion: f64,
        converged: bool,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut all_converged = true;

    let ba = if method != RdMethod::Sinkhorn {
        let (_, results) = rd_sweep_ba(&source, &distortion, &lambdas, BA_TOL, BA_MAX_ITER)?;
        for r in &results {
            all_converged &= r.converged;
            rows.push(Row {
                lambda: r.point.lambda,
                method: "ba",
                rate_nats: r.point.rate_nats,
                distortion: r.point.distortion,
                converged: r.converged,
            });
        }
        Some(results)
    } else {
        None
    };
    let srd = if method != RdMethod::Ba {
        let (_, results) = rd_sweep_sinkhorn(
            &source,
            &distortion,
            &lambdas,
            SRD_OUTER_TOL,
            SRD_OUTER_MAX_ITER,
            SRD_INNER_TOL,
            SRD_INNER_MAX_ITER,
        )?;
        for r in &results {
            all_converged &= r.converged;
            rows.push(Row {
                lambda: r.point.lambda,
                method: "sinkhorn",
                rate_nats: r.point.rate_nats,
                distortion: r.point.distortion,
                converged: r.converged,
            });
        }
        Some(results)
    } else {
        None
    };
    rows.sort_by(|x, y| x.lambda.total_cmp(&y.lambda).then(x.method.cmp(y.method)));

    // Per-λ cross-solver deviations, only when both curves were computed.
    let comparison: Option<Vec<(f64, f64, f64)>> = match (&ba, &srd) {
        (Some(ba), Some(srd)) => Some(
            ba.iter()
                .zip(srd)
                .map(|(b, s)| {
                    (
                        b.point.lambda,
                        (b.point.rate_nats - s.point.rate_nats).abs(),
                        (b.point.distortion - s.point.distortion).abs(),
                    )
                })
                .collect(),
        ),
        _ => None,
    };

    let text = match format {
        Format::Csv => {
            let mut t = String::from("lambda,rate_nats,rate_bits,distortion,method,converged\n");
            for r in &rows {
                t.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.lambda,
                    r.rate_nats,
                    nats_to_bits(r.rate_nats),
                    r.distortion,
                    r.method,
                    r.converged
                ));
            }
            if let Some(cmp) = &comparison {
                let max_dr = cmp.iter().map(|c| c.1).fold(0.0, f64::max);
                let max_dd = cmp.iter().map(|c| c.2).fold(0.0, f64::max);
                t.push_str("\nlambda,abs_dr_nats,abs_dd\n");
                for (l, dr, dd) in cmp {
                    t.push_str(&format!("{l},{dr},{dd}\n"));
                }
                t.push_str(&format!("max,{max_dr},{max_dd}\n"));
            }
            t
        }
        Format::Json => {
            let points: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "lambda": r.lambda,
                        "method": r.method,
                        "rate_nats": r.rate_nats,
                        "rate_bits": nats_to_bits(r.rate_nats),
                        "distortion": r.distortion,
                        "converged": r.converged,
                    })
                })
                .collect();
            let comparison = comparison.map(|cmp| {
                json!({
                    "per_lambda": cmp
                        .iter()
                        .map(|(l, dr, dd)| json!({"lambda": l, "abs_dr_nats": dr, "abs_dd": dd}))
                        .collect::<Vec<_>>(),
                    "max_abs_dr_nats": cmp.iter().map(|c| c.1).fold(0.0, f64::max),
                    "max_abs_dd": cmp.iter().map(|c| c.2).fold(0.0, f64::max),
                })
            });
            let doc = json!({
                "tool": "otrd",
                "version": VERSION,
                "command": "rd",
                "params": {
                    "spec": spec_arg,
                    "method": method_name_rd(method),
                    "lambdas": lambdas,
                    "ba_tol": BA_TOL,
                    "ba_max_iter": BA_MAX_ITER,
                    "srd_outer_tol": SRD_OUTER_TOL,
                    "srd_outer_max_iter": SRD_OUTER_MAX_ITER,
                    "srd_inner_tol": SRD_INNER_TOL,
                    "srd_inner_max_iter": SRD_INNER_MAX_ITER,
                },
                "points": points,
                "comparison": comparison,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable"))
        }
    };
    Ok(Report {
        text,
        all_converged,
    })
}

fn method_name_rd(m: RdMethod) -> &'static str {
    match m {
        RdMethod::Ba => "ba",
        RdMethod::Sinkhorn => "sinkhorn",
        RdMethod::Both => "both",
    }
}

fn cmd_quantize(
    spec_arg: &str,
    levels: &str,
    method: QuantMethod,
    restarts: usize,
    seed: u64,
    format: Format,
) -> Result<Report, CliError> {
    let (source, _, _) = spec::expect_source(spec_arg, spec::resolve(spec_arg)?)?;
    if source.atoms().is_none() {
        return Err(CliError::Input(format!(
            "{spec_arg}: quantization needs real-valued atoms"
        )));
    }
    let levels = parse_levels(levels)?;

    let methods: Vec<&'static str> = match method {
        QuantMethod::Lloyd => vec!["lloyd"],
        QuantMethod::Emd => vec!["emd"],
        QuantMethod::Exact => vec!["exact"],
        QuantMethod::All => vec!["lloyd", "emd", "exact"],
    };
    struct Row {
        levels: usize,
        method: &'static str,
        q: Quantizer,
    }
    let mut rows: Vec<Row> = Vec::new();
    for &m in &levels {
        for &name in &methods {
            let q = match name {
                "lloyd" => lloyd_max_restarts(&source, m, restarts, seed, LLOYD_TOL, LLOYD_MAX_ITER)?,
                "emd" => extremal_emd_quantizer(&source, m, restarts, seed, LLOYD_TOL, LLOYD_MAX_ITER)?,
                _ => kmeans_1d_exact(&source, m)?,
            };
            rows.push(Row {
                levels: m,
                method: name,
                q,
            });
        }
    }

    let text = match format {
        Format::Csv => {
            let mut t = String::from("levels,method,distortion\n");
            for r in &rows {
                t.push_str(&format!("{},{},{}\n", r.levels, r.method, r.q.distortion));
            }
            t
        }
        Format::Json => {
            let points: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "levels": r.levels,
                        "method": r.method,
                        "distortion": r.q.distortion,
                        "codebook": r.q.codebook,
                        "converged": true,
                    })
                })
                .collect();
            let doc = json!({
                "tool": "otrd",
                "version": VERSION,
                "command": "quantize",
                "params": {
                    "spec": spec_arg,
                    "levels": levels,
                    "method": match method {
                        QuantMethod::Lloyd => "lloyd",
                        QuantMethod::Emd => "emd",
                        QuantMethod::Exact => "exact",
                        QuantMethod::All => "all",
                    },
                    "restarts": restarts,
                    "seed": seed,
                    "tol": LLOYD_TOL,
                    "max_iter": LLOYD_MAX_ITER,
                },
                "points": points,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable"))
        }
    };
    Ok(Report {
        text,
        all_converged: true,
    })
}

fn cmd_capacity(spec_arg: &str, method: CapMethod, format: Format) -> Result<Report, CliError> {
    let channel = spec::expect_channel(spec_arg, spec::resolve(spec_arg)?)?;
    let mut all_converged = true;

    let ba = if method != CapMethod::Ot {
        let r = ba_capacity(&channel, BA_TOL, BA_MAX_ITER)?;
        all_converged &= r.converged;
        Some(r)
    } else {
        None
    };
    let ot = if method != CapMethod::Ba {
        let r = capacity_via_ot(
            &channel,
            CAP_OT_OUTER_TOL,
            CAP_OT_OUTER_MAX_ITER,
            CAP_OT_INNER_TOL,
            CAP_OT_INNER_MAX_ITER,
        )?;
        all_converged &= r.converged;
        Some(r)
    } else {
        None
    };

    let text = match format {
        Format::Csv => {
            let mut t = String::from(
                "method,capacity_nats,capacity_bits,converged,experimental,discrepancy_vs_ba\n",
            );
            if let Some(r) = &ba {
                t.push_str(&format!(
                    "ba,{},{},{},false,\n",
                    r.capacity_nats,
                    nats_to_bits(r.capacity_nats),
                    r.converged
                ));
            }
            if let Some(r) = &ot {
                t.push_str(&format!(
                    "ot,{},{},{},true,{}\n",
                    r.value_nats,
                    nats_to_bits(r.value_nats),
                    r.converged,
                    r.discrepancy
                ));
            }
            t
        }
        Format::Json => {
            let mut results: Vec<serde_json::Value> = Vec::new();
            if let Some(r) = &ba {
                results.push(json!({
                    "method": "ba",
                    "experimental": false,
                    "capacity_nats": r.capacity_nats,
                    "capacity_bits": nats_to_bits(r.capacity_nats),
                    "input_dist": r.input_dist.weights(),
                    "bound_gap": r.gap,
                    "iterations": r.iterations,
                    "converged": r.converged,
                }));
            }
            if let Some(r) = &ot {
                results.push(json!({
                    "method": "ot",
                    "experimental": true,
                    "capacity_nats": r.value_nats,
                    "capacity_bits": nats_to_bits(r.value_nats),
                    "input_dist": r.input_dist.weights(),
                    "output_dist": r.output_dist.weights(),
                    "ba_reference": r.ba_reference,
                    "discrepancy_vs_ba": r.discrepancy,
                    "iterations": r.outer_iterations,
                    "converged": r.converged,
                }));
            }
            let doc = json!({
                "tool": "otrd",
                "version": VERSION,
                "command": "capacity",
                "params": {
                    "spec": spec_arg,
                    "method": match method {
                        CapMethod::Ba => "ba",
                        CapMethod::Ot => "ot",
                        CapMethod::Both => "both",
                    },
                    "ba_tol": BA_TOL,
                    "ba_max_iter": BA_MAX_ITER,
                    "ot_outer_tol": CAP_OT_OUTER_TOL,
                    "ot_outer_max_iter": CAP_OT_OUTER_MAX_ITER,
                    "ot_inner_tol": CAP_OT_INNER_TOL,
                    "ot_inner_max_iter": CAP_OT_INNER_MAX_ITER,
                },
                "results": results,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable"))
        }
    };
    Ok(Report {
        text,
        all_converged,
    })
}

fn ot_marginal(arg: &str) -> Result<DiscreteDistribution, CliError> {
    let (source, _, _) = spec::expect_source(arg, spec::resolve(arg)?)?;
    if source.atoms().is_none() {
        return Err(CliError::Input(format!(
            "{arg}: transport needs real-valued atoms"
        )));
    }
    Ok(source)
}

fn cmd_ot(
    mu_arg: &str,
    nu_arg: &str,
    eps: &str,
    eps_sweep: Option<&str>,
    format: Format,
) -> Result<Report, CliError> {
    let mu = ot_marginal(mu_arg)?;
    let nu = ot_marginal(nu_arg)?;
    let cost = squared_error_matrix(
        mu.atoms().expect("checked above"),
        nu.atoms().expect("checked above"),
    )?;

    // Each row is (eps-label, cost, kl, objective, converged); the exact
    // solve has no regularization term, so kl/objective stay empty.
    struct Row {
        eps: String,
        cost: f64,
        kl: Option<f64>,
        objective: Option<f64>,
        converged: bool,
    }
    let mut rows: Vec<Row> = Vec::new();
    let mut all_converged = true;
    if let Some(list) = eps_sweep {
        let mut eps_list: Vec<f64> = Vec::new();
        for part in list.split(',') {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| format!("--eps-sweep: bad value '{part}'"))?;
            if !(v > 0.0) {
                return Err(CliError::Input(format!(
                    "--eps-sweep: eps must be positive, got '{part}'"
                )));
            }
            eps_list.push(v);
        }
        eps_list.sort_by(|a, b| b.total_cmp(a));
        if eps_list.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Input("--eps-sweep: duplicate eps value".to_string()));
        }
        let results = sinkhorn_eps_sweep(&mu, &nu, &cost, &eps_list, SINKHORN_TOL, SINKHORN_MAX_ITER)?;
        for (e, r) in eps_list.iter().zip(&results) {
            all_converged &= r.converged;
            rows.push(Row {
                eps: format!("{e}"),
                cost: r.transport_cost,
                kl: Some(r.kl_term),
                objective: Some(r.objective),
                converged: r.converged,
            });
        }
    } else if eps == "exact" {
        let r = emd(&mu, &nu, &cost)?;
        rows.push(Row {
            eps: "exact".to_string(),
            cost: r.cost,
            kl: None,
            objective: None,
            converged: true,
        });
    } else {
        let e: f64 = eps
            .parse()
            .map_err(|_| format!("--eps: expected a positive real or \"exact\", got '{eps}'"))?;
        if !(e > 0.0) {
            return Err(CliError::Input(format!(
                "--eps: eps must be positive, got '{eps}'"
            )));
        }
        let r = otrd::sinkhorn::sinkhorn(&mu, &nu, &cost, e, SINKHORN_TOL, SINKHORN_MAX_ITER)?;
        all_converged &= r.converged;
        rows.push(Row {
            eps: format!("{e}"),
            cost: r.transport_cost,
            kl: Some(r.kl_term),
            objective: Some(r.objective),
            converged: r.converged,
        });
    }

    let text = match format {
        Format::Csv => {
            let mut t = String::from("eps,cost,kl,objective\n");
            for r in &rows {
                let kl = r.kl.map(|v| format!("{v}")).unwrap_or_default();
                let obj = r.objective.map(|v| format!("{v}")).unwrap_or_default();
                t.push_str(&format!("{},{},{},{}\n", r.eps, r.cost, kl, obj));
            }
            t
        }
        Format::Json => {
            let points: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "eps": r.eps,
                        "cost": r.cost,
                        "kl": r.kl,
                        "objective": r.objective,
                        "converged": r.converged,
                    })
                })
                .collect();
            let doc = json!({
                "tool": "otrd",
                "version": VERSION,
                "command": "ot",
                "params": {
                    "mu": mu_arg,
                    "nu": nu_arg,
                    "eps": eps,
                    "eps_sweep": eps_sweep,
                    "tol": SINKHORN_TOL,
                    "max_iter": SINKHORN_MAX_ITER,
                },
                "points": points,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("serializable"))
        }
    };
    Ok(Report {
        text,
        all_converged,
    })
}
