mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dig_core::catalog::Catalog;
use dig_core::dynamics::{growth_rate_checked, method_by_name, GrowthEvaluator};
use dig_core::explorer::{self, Axis, FigureOptions};
use dig_core::io::{load_environment, resolve_model};
use dig_core::model::ModelParameters;
use dig_core::stochastic::{simulate_lyapunov, stochastic_limits, DEFAULT_SEED};
use dig_core::{asymptotics, Error, Result};
use serde::Serialize;

use output::{curve_table, emit_table, grid_table, print_json};

#[derive(Parser, Debug)]
#[command(name = "dig", version, about = "Growth rates of periodically forced patch populations")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Output format where both make sense.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file or built-in name and report its structure.
    Validate { model: String },
    /// List built-in models, integrators and figures.
    Catalog,
    /// Growth rate Λ(m, T) with the Perron data of the monodromy matrix.
    Lambda(LambdaArgs),
    /// Limits of Λ in m and T, χ, and m*.
    Limits {
        model: String,
        #[arg(long)]
        m: Option<f64>,
    },
    /// Λ on an (m, T) grid.
    Sweep(GridArgs),
    /// Zero set of Λ traced on an (m, T) grid.
    Critical {
        #[command(flatten)]
        grid: GridArgs,
        /// Bisection target for |Λ| at each vertex.
        #[arg(long, default_value_t = explorer::contour::DEFAULT_TOL)]
        tol: f64,
    },
    /// Whether dispersal can produce growth from sinks.
    Classify { model: String },
    /// Monte-Carlo Lyapunov exponent in a Markov-switched environment.
    Simulate(SimulateArgs),
    /// Write the data behind a figure as CSV files.
    Reproduce {
        figure: String,
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
        /// Points per axis for grids.
        #[arg(long, default_value_t = 128)]
        resolution: usize,
    },
}

#[derive(Args, Debug)]
struct LambdaArgs {
    model: String,
    #[arg(long)]
    m: f64,
    #[arg(long = "T", value_name = "T")]
    period: f64,
    #[arg(long)]
    check_integral: bool,
    #[arg(long)]
    check_h: bool,
    /// Monodromy integrator (`exponential-product` or `rk4`).
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args, Debug)]
struct GridArgs {
    model: String,
    /// lo:hi:n, log-spaced.
    #[arg(long, value_parser = parse_axis, default_value = "0.01:100:128")]
    m_range: Axis,
    /// lo:hi:n, log-spaced.
    #[arg(long = "T-range", value_name = "T_RANGE", value_parser = parse_axis, default_value = "0.01:1000:128")]
    t_range: Axis,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    env: PathBuf,
    #[arg(long)]
    m: f64,
    #[arg(long = "T", value_name = "T")]
    period: f64,
    #[arg(long)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected lo:hi:n".into());
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}"));
    let n = parts[2]
        .trim()
        .parse::<usize>()
        .map_err(|e| format!("`{}`: {e}", parts[2]))?;
    let axis = Axis::log(num(parts[0])?, num(parts[1])?, n);
    axis.check().map_err(|e| e.to_string())?;
    Ok(axis)
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    exit_code: u8,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

fn report_error(kind: &str, message: String, code: u8) -> ExitCode {
    let body = ErrorReport {
        error: ErrorBody {
            kind,
            message,
            exit_code: code,
        },
    };
    eprintln!(
        "{}",
        serde_json::to_string(&body).unwrap_or_else(|_| "{\"error\":{}}".into())
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report_error("UsageError", e.to_string().trim().to_string(), 2);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            return report_error("UsageError", "--jobs must be at least 1".into(), 2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report_error("InternalError", e.to_string(), 1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_validation() { 2 } else { 1 };
            report_error(e.kind(), e.to_string(), code)
        }
    }
}

fn json_only(cli: &Cli, what: &str) -> Result<()> {
    if cli.format == Some(Format::Csv) {
        return Err(Error::InvalidParameter(format!("`{what}` has no CSV form")));
    }
    Ok(())
}

#[derive(Serialize)]
struct Written<'a> {
    out: &'a Path,
    rows: usize,
    #[serde(flatten)]
    extra: serde_json::Value,
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { model } => {
            json_only(cli, "validate")?;
            print_json(&resolve_model(model)?.validate()?)
        }
        Command::Catalog => catalog(cli),
        Command::Lambda(args) => {
            json_only(cli, "lambda")?;
            let model = resolve_model(&args.model)?;
            let params = ModelParameters::new(args.m, args.period)?;
            let result = match &args.method {
                Some(name) => {
                    let ev = GrowthEvaluator::with_method(&model, method_by_name(name)?)?;
                    if args.check_integral || args.check_h {
                        return Err(Error::InvalidParameter(
                            "cross-checks use the default integrator; drop --method".into(),
                        ));
                    }
                    ev.growth_rate(&params)?
                }
                None => growth_rate_checked(&model, &params, args.check_integral, args.check_h)?,
            };
            print_json(&result)
        }
        Command::Limits { model, m } => {
            json_only(cli, "limits")?;
            let model = resolve_model(model)?;
            print_json(&asymptotics::limit_panel(&model, *m)?)
        }
        Command::Sweep(args) => {
            let model = resolve_model(&args.model)?;
            let grid = explorer::sweep(&model, args.m_range, args.t_range)?;
            if cli.format == Some(Format::Json) {
                return print_json(&grid);
            }
            let table = grid_table(&grid);
            emit_table(&table, args.out.as_deref())?;
            if let Some(out) = &args.out {
                print_json(&Written {
                    out,
                    rows: table.rows.len(),
                    extra: serde_json::json!({
                        "ok_cells": grid.ok_cells(),
                        "chi": grid.chi,
                        "max_lambda": grid.max_lambda().map(|b| b.0),
                    }),
                })?;
            }
            Ok(())
        }
        Command::Critical { grid, tol } => {
            let model = resolve_model(&grid.model)?;
            let curve = explorer::critical_curve(&model, grid.m_range, grid.t_range, *tol)?;
            if cli.format == Some(Format::Json) {
                return print_json(&curve);
            }
            let table = curve_table(&curve);
            emit_table(&table, grid.out.as_deref())?;
            if let Some(out) = &grid.out {
                print_json(&Written {
                    out,
                    rows: table.rows.len(),
                    extra: serde_json::json!({
                        "branches": curve.branches.len(),
                        "empirical": curve.empirical,
                        "excluded_cells": curve.excluded_cells,
                    }),
                })?;
            }
            Ok(())
        }
        Command::Classify { model } => {
            json_only(cli, "classify")?;
            print_json(&explorer::classify_dig(&resolve_model(model)?)?)
        }
        Command::Simulate(args) => {
            json_only(cli, "simulate")?;
            let env = load_environment(&args.env)?;
            let estimate = simulate_lyapunov(&env, args.m, args.period, args.horizon, args.seed)?;
            let limits = stochastic_limits(&env, args.m)?;
            #[derive(Serialize)]
            struct Simulated<T: Serialize, L: Serialize> {
                #[serde(flatten)]
                estimate: T,
                limits: L,
            }
            print_json(&Simulated { estimate, limits })
        }
        Command::Reproduce {
            figure,
            out_dir,
            resolution,
        } => reproduce(cli, figure, out_dir.as_deref(), *resolution),
    }
}

fn catalog(cli: &Cli) -> Result<()> {
    #[derive(Serialize)]
    struct Entry {
        name: &'static str,
        signature: &'static str,
        description: &'static str,
    }
    let cat = Catalog::standard();
    let models: Vec<Entry> = cat
        .factories()
        .map(|f| Entry {
            name: f.name(),
            signature: f.signature(),
            description: f.description(),
        })
        .collect();
    if cli.format == Some(Format::Csv) {
        use explorer::Value;
        let table = explorer::Table {
            name: "catalog".into(),
            headers: ["name", "signature", "description"].map(String::from).to_vec(),
            rows: models
                .iter()
                .map(|e| {
                    vec![
                        Value::Text(e.name.into()),
                        Value::Text(e.signature.into()),
                        Value::Text(e.description.into()),
                    ]
                })
                .collect(),
        };
        return emit_table(&table, None);
    }
    let methods: Vec<&'static str> = dig_core::dynamics::methods().iter().map(|m| m.name()).collect();
    let figures: Vec<serde_json::Value> = explorer::figure_registry()
        .iter()
        .map(|r| {
            serde_json::json!({
                "id": r.id(),
                "aliases": r.aliases(),
                "description": r.description(),
            })
        })
        .collect();
    print_json(&serde_json::json!({
        "models": models,
        "methods": methods,
        "figures": figures,
    }))
}

fn reproduce(cli: &Cli, figure: &str, out_dir: Option<&Path>, resolution: usize) -> Result<()> {
    if cli.format == Some(Format::Json) {
        let tables = explorer::reproduce(figure, &FigureOptions { resolution })?;
        return print_json(&tables);
    }
    let tables = explorer::reproduce(figure, &FigureOptions { resolution })?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(figure));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for t in &tables {
        let path = dir.join(format!("{}.csv", t.name));
        emit_table(t, Some(&path))?;
        files.push(serde_json::json!({
            "table": t.name,
            "path": path,
            "rows": t.rows.len(),
        }));
    }
    print_json(&serde_json::json!({ "figure": figure, "files": files }))
}
