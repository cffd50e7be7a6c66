//! `hjlab`: command-line front end for the homogenization lab.
//!
//! Exit codes: 0 when every check in the run passed, 1 when a check failed or
//! a computation errored, 2 for configuration errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hjlab_core::action::{compute_metric, Curve, MetricQuery};
use hjlab_core::burago::{burago_1d, burago_nd, verify_decomposition};
use hjlab_core::constructions::{build_doubling_path, build_halving_path};
use hjlab_core::effective::{hopf_lax_effective, HopfLaxOptions};
use hjlab_core::harness::{self, render_report, Experiment, Format, Report, RunConfig};
use hjlab_core::model::{legendre_round_trip, Lagrangian};
use hjlab_core::pde::{solve_control_grid, solve_scheme, unit_grid, SchemeOptions};
use hjlab_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "hjlab", version, about = "Homogenization lab for periodic time-dependent Hamilton-Jacobi equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    family: Option<String>,
    /// Model parameter, `NAME=VALUE`; repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Curve segments per unit time.
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    multistarts: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Effective Lagrangian CSV to use instead of building the table.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum RouteArg {
    Control,
    Scheme,
    Effective,
}

#[derive(Subcommand)]
enum Command {
    /// Numeric against closed-form conjugation on random samples.
    Legendre {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// m(t0, t; x, y) by multistart descent.
    Metric {
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, alias = "t1")]
        t: f64,
        #[arg(long, alias = "to", num_args = 1.., allow_negative_numbers = true)]
        y: Vec<f64>,
        /// Start point; the origin by default.
        #[arg(long, alias = "from", num_args = 1.., allow_negative_numbers = true)]
        x: Vec<f64>,
        /// Total curve segments; overrides --density.
        #[arg(long)]
        segments: Option<usize>,
        /// CSV of the minimizer, one `t, x...` row per knot.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Burago decomposition of a path CSV or of a lifted minimizer, or the full suite with `--suite`.
    Burago {
        #[arg(long)]
        suite: bool,
        /// CSV of `s, x0, ..` rows to decompose as given.
        #[arg(long, conflicts_with_all = ["suite", "t", "no_lift"])]
        path: Option<PathBuf>,
        #[arg(long, required_unless_present_any = ["suite", "path"])]
        t: Option<f64>,
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        y: Vec<f64>,
        /// Decompose the path itself instead of its space-time lift (1D only).
        #[arg(long)]
        no_lift: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Doubling construction for m(2t, 0, 2y), or the sub-additivity sweep with `--sweep`.
    Double {
        #[arg(long)]
        sweep: bool,
        #[arg(long, required_unless_present = "sweep")]
        t: Option<f64>,
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        y: Vec<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Halving construction for m(t, 0, y), or the super-additivity sweep with `--sweep`.
    Halve {
        #[arg(long)]
        sweep: bool,
        #[arg(long, required_unless_present = "sweep")]
        t: Option<f64>,
        #[arg(long, num_args = 1.., allow_negative_numbers = true)]
        y: Vec<f64>,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Effective Lagrangian and Hamiltonian tables with their checks.
    Effective {
        /// Also write `lagrangian.csv` and `hamiltonian.csv` into this directory.
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long)]
        levels: Option<usize>,
        #[arg(long)]
        q_points: Option<usize>,
        #[arg(long)]
        q_radius: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// u^eps (or the effective solution) on an evenly spaced grid of [0, 1).
    Solve {
        #[arg(long, value_enum, default_value = "control")]
        route: RouteArg,
        #[arg(long, alias = "epsilon", default_value_t = 0.25)]
        eps: f64,
        /// Time horizon; defaults to the configuration's.
        #[arg(long, alias = "horizon")]
        t: Option<f64>,
        #[arg(long)]
        x_points: Option<usize>,
        /// Scheme grid step; `eps / 256` by default.
        #[arg(long, alias = "grid-dx")]
        dx: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Convergence-rate experiment over the configured epsilons.
    Rate {
        #[arg(long, num_args = 1..)]
        eps: Vec<f64>,
        #[arg(long)]
        x_points: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Model checks, periodicity, additivity sweeps, Burago suite and the rate experiment.
    PaperCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v: f64 = v.parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.to_string(), v))
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => Failure::Config(msg),
            Error::Parse { .. } => Failure::Config(e.to_string()),
            Error::Aborted { ref partial, .. } => Failure::Run(format!("{e}\npartial results: {partial}")),
            other => Failure::Run(other.to_string()),
        }
    }
}

type Outcome = Result<bool, Failure>;

fn load(common: &Common, experiment: Experiment) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    cfg.experiment = experiment;
    if let Some(f) = &common.family {
        if *f != cfg.model.family {
            cfg.model.params.clear();
        }
        cfg.model.family = f.clone();
    }
    for (k, v) in &common.params {
        cfg.model.params.insert(k.clone(), *v);
    }
    if let Some(d) = common.dimension {
        cfg.model.dimension = d;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(d) = common.density {
        cfg.resolution.density = d;
    }
    if let Some(m) = common.multistarts {
        cfg.resolution.multistarts = m;
    }
    if let Some(o) = &common.output {
        cfg.output = Some(o.clone());
    }
    if let Some(t) = &common.table {
        cfg.table = Some(t.clone());
    }
    if let Some(f) = common.format {
        cfg.format = match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(text: &str, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e).into()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json(value: &serde_json::Value, cfg: &RunConfig) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Run(e.to_string()))?;
    text.push('\n');
    write_out(&text, cfg.output.as_deref())
}

fn point(v: &[f64], n: usize, name: &str) -> Result<Vec<f64>, Failure> {
    match v.len() {
        0 if name == "x" => Ok(vec![0.0; n]),
        1 => Ok(vec![v[0]; n]),
        k if k == n => Ok(v.to_vec()),
        k => Err(Failure::Config(format!("--{name} has {k} components, the model has dimension {n}"))),
    }
}

fn experiment(cfg: &RunConfig) -> Outcome {
    finish(&harness::run(cfg)?, cfg)
}

fn finish(report: &Report, cfg: &RunConfig) -> Outcome {
    for c in &report.checks {
        eprintln!("{} {} value {} tolerance {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    write_out(&render_report(report, cfg.format)?, cfg.output.as_deref())?;
    Ok(report.passed())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Legendre { samples, tol, common } => {
            let cfg = load(&common, Experiment::PaperCheck)?;
            let check = legendre_round_trip(&cfg.hamiltonian()?, samples, tol, cfg.seed)?;
            write_json(&json!(check), &cfg)?;
            Ok(check.pass)
        }
        Command::Metric { t0, t, y, x, segments, trace, common } => {
            let cfg = load(&common, Experiment::PaperCheck)?;
            let l = cfg.lagrangian()?;
            let n = l.dim();
            let mut q = MetricQuery::new(t0, t, &point(&x, n, "x")?, &point(&y, n, "y")?)
                .with_density(cfg.resolution.density)
                .with_multistarts(cfg.resolution.multistarts)
                .with_seed(cfg.seed);
            if let Some(k) = segments {
                q = q.with_segments(k);
            }
            let r = compute_metric(&l, &q)?;
            if let Some(p) = trace {
                r.minimizer.write_csv(&p)?;
            }
            write_json(
                &json!({
                    "value": r.value,
                    "residual": r.first_order_residual,
                    "starts_tried": r.starts_tried,
                    "best_start_index": r.best_start_index,
                    "iterations": r.iterations,
                    "curve": r.minimizer.rows(),
                }),
                &cfg,
            )?;
            Ok(true)
        }
        Command::Burago { suite, path, t, y, no_lift, common } => {
            let cfg = load(&common, Experiment::BuragoSuite)?;
            if suite {
                return experiment(&cfg);
            }
            if let Some(p) = path {
                let xi = Curve::read_csv(&p)?;
                let (dec, tol) = if xi.dim() == 1 {
                    (burago_1d(&xi, cfg.tolerances.burago_1d)?, cfg.tolerances.burago_1d)
                } else {
                    (burago_nd(&xi, cfg.tolerances.burago_nd, cfg.burago.budget)?, cfg.tolerances.burago_nd)
                };
                let cert = verify_decomposition(&xi, &dec, tol);
                write_json(&json!({ "decomposition": dec, "certificate": cert }), &cfg)?;
                return Ok(cert.pass);
            }
            let l = cfg.lagrangian()?;
            let n = l.dim();
            let t = t.expect("clap enforces --t");
            let q = MetricQuery::new(0.0, t, &vec![0.0; n], &point(&y, n, "y")?)
                .with_density(cfg.resolution.density)
                .with_multistarts(cfg.resolution.multistarts)
                .with_seed(cfg.seed);
            let eta = compute_metric(&l, &q)?.minimizer;
            let (xi, dec, tol) = if no_lift {
                if n != 1 {
                    return Err(Failure::Config("--no-lift needs a one-dimensional model".into()));
                }
                let tol = cfg.tolerances.burago_1d;
                (eta.clone(), burago_1d(&eta, tol)?, tol)
            } else {
                let lift = eta.space_time_lift();
                let tol = cfg.tolerances.burago_nd;
                let dec = burago_nd(&lift, tol, cfg.burago.budget)?;
                (lift, dec, tol)
            };
            let cert = verify_decomposition(&xi, &dec, tol);
            write_json(&json!({ "decomposition": dec, "certificate": cert, "curve": xi }), &cfg)?;
            Ok(cert.pass)
        }
        Command::Double { sweep, t, y, trace, common } => {
            let cfg = load(&common, Experiment::Subadd)?;
            if sweep {
                return experiment(&cfg);
            }
            let l = cfg.lagrangian()?;
            let n = l.dim();
            let y = point(&y, n, "y")?;
            let t = t.expect("clap enforces --t");
            let q = MetricQuery::new(0.0, t, &vec![0.0; n], &y)
                .with_density(cfg.resolution.density)
                .with_multistarts(cfg.resolution.multistarts)
                .with_seed(cfg.seed);
            let eta = compute_metric(&l, &q)?;
            let (mu, rep) = build_doubling_path(&l, &eta.minimizer, &y)?;
            if let Some(p) = trace {
                mu.write_csv(&p)?;
            }
            let ok = rep.junction_gap <= cfg.tolerances.junction && rep.endpoint_gap <= cfg.tolerances.junction;
            write_json(&json!({ "m_t": eta.value, "report": rep, "mu": mu }), &cfg)?;
            Ok(ok)
        }
        Command::Halve { sweep, t, y, trace, common } => {
            let cfg = load(&common, Experiment::Superadd)?;
            if sweep {
                return experiment(&cfg);
            }
            let l = cfg.lagrangian()?;
            let n = l.dim();
            let y = point(&y, n, "y")?;
            let t = t.expect("clap enforces --t");
            let y2: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
            let q = MetricQuery::new(0.0, 2.0 * t, &vec![0.0; n], &y2)
                .with_density(cfg.resolution.density)
                .with_multistarts(cfg.resolution.multistarts)
                .with_seed(cfg.seed);
            let eta = compute_metric(&l, &q)?;
            let dec = burago_nd(&eta.minimizer.space_time_lift(), cfg.tolerances.burago_nd, cfg.burago.budget)?;
            let h = build_halving_path(&l, &eta.minimizer, &y, &dec)?;
            if let Some(p) = trace {
                h.zeta.write_csv(&p)?;
            }
            let ok = h.junction_gap <= cfg.tolerances.junction && h.endpoint_gap <= cfg.tolerances.junction;
            write_json(
                &json!({
                    "m_2t": eta.value,
                    "decomposition": dec,
                    "schedule": h.schedule,
                    "upper_bound": h.upper_bound,
                    "interval_action": h.interval_action,
                    "overhead": h.overhead(),
                    "window": h.window,
                    "junction_gap": h.junction_gap,
                    "endpoint_gap": h.endpoint_gap,
                    "zeta": h.zeta,
                }),
                &cfg,
            )?;
            Ok(ok)
        }
        Command::Effective { tables, levels, q_points, q_radius, common } => {
            let mut cfg = load(&common, Experiment::EffectiveTables)?;
            if let Some(v) = levels {
                cfg.resolution.levels = v;
            }
            if let Some(v) = q_points {
                cfg.resolution.q_points = v;
            }
            if let Some(v) = q_radius {
                cfg.resolution.q_radius = v;
            }
            cfg.validate()?;
            let report = harness::run(&cfg)?;
            if let (Some(dir), Some(sec)) = (tables, &report.sections.effective) {
                std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                sec.lagrangian.write_csv(&dir.join("lagrangian.csv"))?;
                sec.hamiltonian.write_csv(&dir.join("hamiltonian.csv"))?;
            }
            finish(&report, &cfg)
        }
        Command::Solve { route, eps, t, x_points, dx, common } => {
            let cfg = load(&common, Experiment::PaperCheck)?;
            let t = t.unwrap_or(cfg.horizon);
            let xs = unit_grid(x_points.unwrap_or(cfg.resolution.x_points));
            let g = cfg.datum;
            let values: Vec<f64> = match route {
                RouteArg::Control => solve_control_grid(&cfg.lagrangian()?, &g, eps, &xs, t, &cfg.control())?
                    .into_iter()
                    .map(|v| v.value)
                    .collect(),
                RouteArg::Scheme => {
                    let sol = solve_scheme(&cfg.hamiltonian()?, &g, eps, t, dx.unwrap_or(eps / 256.0), &SchemeOptions::default())?;
                    for w in &sol.warnings {
                        eprintln!("warning: {w}");
                    }
                    xs.iter().map(|x| sol.interpolate_final(x[0])).collect()
                }
                RouteArg::Effective => {
                    let tab = cfg.effective_table(&cfg.lagrangian()?)?;
                    xs.iter()
                        .map(|x| hopf_lax_effective(&tab, &|y| g.eval(y), x, t, &HopfLaxOptions::default()).map(|u| u.value))
                        .collect::<hjlab_core::Result<_>>()?
                }
            };
            let route_name = match route {
                RouteArg::Control => "control",
                RouteArg::Scheme => "scheme",
                RouteArg::Effective => "effective",
            };
            match cfg.format {
                Format::Json => write_json(
                    &json!({ "route": route_name, "epsilon": eps, "t": t, "x": xs.iter().map(|x| x[0]).collect::<Vec<_>>(), "u": values }),
                    &cfg,
                )?,
                Format::Csv => {
                    let mut text = String::from("x,u\n");
                    for (x, u) in xs.iter().zip(&values) {
                        text.push_str(&format!("{},{u}\n", x[0]));
                    }
                    write_out(&text, cfg.output.as_deref())?;
                }
            }
            Ok(true)
        }
        Command::Rate { eps, x_points, common } => {
            let mut cfg = load(&common, Experiment::Rate)?;
            if !eps.is_empty() {
                cfg.epsilons = eps;
            }
            if let Some(n) = x_points {
                cfg.resolution.x_points = n;
            }
            cfg.validate()?;
            experiment(&cfg)
        }
        Command::PaperCheck { common } => experiment(&load(&common, Experiment::PaperCheck)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
    }
}
