use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use async_admm::analysis::{analyze, parameter_bounds, rho_min, AnalysisInputs, DiagnosticConstants, ParameterBounds};
use async_admm::config::{Assignments, RunConfig};
use async_admm::io::read_trace;
use async_admm::runner::{centralized_objective, execute, load_problem, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "async-admm", version, about = "Asynchronous ADMM simulator and trace diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured problem and write trace, results and diagnostics.
    Run(ConfigArgs),
    /// Print the penalty and proximal-weight lower bounds as JSON.
    Bounds(BoundsArgs),
    /// Diagnose an existing trace.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set rho=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut a = match &self.config {
            Some(path) => Assignments::read(path)?,
            None => Assignments::default(),
        };
        for s in &self.set {
            a.set(s)?;
        }
        Ok(a.into_config()?)
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    m1: f64,
    #[arg(long)]
    m2: f64,
    #[arg(long)]
    c: f64,
    #[arg(long, default_value_t = 1)]
    omega: usize,
    /// Penalty at which to evaluate the proximal bound; defaults to the
    /// penalty bound itself.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Serialize)]
struct BoundsOutput {
    constants: DiagnosticConstants,
    #[serde(flatten)]
    bounds: ParameterBounds,
    message: String,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// JSONL trace file.
    trace: PathBuf,
    /// Config of the run, needed for KKT residuals and the objective gap.
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value_t = 1e-3)]
    kkt_tol: f64,
    /// Compare the final objective with the centralized optimum.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    m1: Option<f64>,
    #[arg(long)]
    m2: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn print_json<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn cmd_run(args: &ConfigArgs) -> Result<i32> {
    let cfg = args.load()?;
    let done = execute(&cfg)?;
    print_json(&done.summary);
    if let Some(m) = &done.summary.message {
        eprintln!("error: {m}");
    }
    Ok(done.summary.exit_code)
}

fn cmd_bounds(args: &BoundsArgs) -> Result<i32> {
    let constants = DiagnosticConstants {
        gamma: args.gamma,
        m1: args.m1,
        m2: args.m2,
        c: args.c,
        omega: args.omega,
    };
    constants.validate()?;
    let rho = args.rho.unwrap_or_else(|| rho_min(&constants));
    let bounds = parameter_bounds(&constants, rho)?;
    let message = if bounds.alpha_zero_admissible {
        "α=0 admissible".to_string()
    } else {
        format!("α must be at least {}", bounds.alpha_min)
    };
    print_json(&BoundsOutput {
        constants,
        bounds,
        message,
    });
    Ok(0)
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    let trace = read_trace(&args.trace)?;
    let has_config = args.config.config.is_some() || !args.config.set.is_empty();
    if args.baseline && !has_config {
        bail!("--baseline needs the run config");
    }
    let loaded = if has_config {
        let cfg = args.config.load()?;
        let loaded = load_problem(&cfg)?;
        let baseline = if args.baseline {
            Some(centralized_objective(&cfg, &loaded)?)
        } else {
            None
        };
        Some((loaded, baseline))
    } else {
        None
    };
    let lambda_constants = args.c.zip(args.m1);
    let theory_constants = match (args.gamma, args.m1, args.m2, args.c) {
        (Some(g), Some(m1), Some(m2), Some(c)) => Some((g, m1, m2, c)),
        _ => None,
    };
    let report = analyze(
        &trace,
        &AnalysisInputs {
            problem: loaded.as_ref().map(|(l, _)| &l.problem),
            kkt_tol: args.kkt_tol,
            lambda_constants,
            theory_constants,
            centralized_objective: loaded.as_ref().and_then(|(_, b)| *b),
        },
    )
    .map_err(|e| anyhow!("{}: {e}", args.trace.display()))?;
    match &args.output {
        Some(path) => {
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            std::fs::write(path, text + "\n").map_err(|e| anyhow!("{}: {e}", path.display()))?;
        }
        None => print_json(&report),
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
