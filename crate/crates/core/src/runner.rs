//! Loading a configured problem, running it and writing the artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{analyze, AnalysisError, AnalysisInputs, AnalysisReport};
use crate::config::{ConfigError, Mode, ProblemSpec, RunConfig};
use crate::engine::{run, EngineError, RunOutcome, RunStatus, TimeAccounting};
use crate::io::{read_case, read_partition, write_results, write_trace, IoError};
use crate::opf::{
    build_regional_subproblems, centralized_reference_solve, initial_point, BuildError, OpfProblem,
    PowerFlowError, ReferenceError, StartMode,
};
use crate::problem::{
    make_nonconvex_toy_with_target, make_toy_consensus, toy_consensus_optimum, PartitionedProblem,
    ProblemError, NONCONVEX_TOY_BOX,
};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const RESULTS_FILE: &str = "results.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CAP: i32 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("warm start: {0}")]
    WarmStart(#[from] PowerFlowError),
    #[error("centralized reference: {0}")]
    Reference(#[from] ReferenceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
}

pub struct LoadedProblem {
    pub problem: PartitionedProblem,
    pub x0: Vec<DVector<f64>>,
    pub opf: Option<OpfProblem>,
}

/// Minimizer of `(x² − 1)² + (x − t)²` over the toy box.
pub fn nonconvex_toy_minimizer(target: f64) -> f64 {
    let (lo, hi) = NONCONVEX_TOY_BOX;
    let f = |x: f64| (x * x - 1.0).powi(2) + (x - target).powi(2);
    let steps = 40_000;
    let h = (hi - lo) / steps as f64;
    let mut best = lo;
    for i in 0..=steps {
        let x = lo + i as f64 * h;
        if f(x) < f(best) {
            best = x;
        }
    }
    let mut x = best;
    for _ in 0..50 {
        let g = 4.0 * x * (x * x - 1.0) + 2.0 * (x - target);
        let hess = 12.0 * x * x - 4.0 + 2.0;
        if hess <= 0.0 {
            break;
        }
        let next = (x - g / hess).clamp(lo, hi);
        if (next - x).abs() < 1e-16 {
            break;
        }
        x = next;
    }
    if f(x) <= f(best) {
        x
    } else {
        best
    }
}

pub fn load_problem(cfg: &RunConfig) -> Result<LoadedProblem, RunError> {
    match &cfg.problem {
        ProblemSpec::Toy { targets } => {
            let problem = make_toy_consensus(targets)?;
            let x0 = match cfg.start {
                StartMode::Flat => problem.flat_start(),
                StartMode::Warm => {
                    let (mean, _) = toy_consensus_optimum(targets);
                    vec![DVector::from_element(1, 1.1 * mean); targets.len()]
                }
            };
            Ok(LoadedProblem { problem, x0, opf: None })
        }
        ProblemSpec::Nonconvex { target } => {
            let problem = make_nonconvex_toy_with_target(*target);
            let x0 = match cfg.start {
                StartMode::Flat => problem.flat_start(),
                StartMode::Warm => {
                    let (lo, hi) = NONCONVEX_TOY_BOX;
                    let x = (1.1 * nonconvex_toy_minimizer(*target)).clamp(lo, hi);
                    vec![DVector::from_element(1, x); 2]
                }
            };
            Ok(LoadedProblem { problem, x0, opf: None })
        }
        ProblemSpec::Opf { case, partition } => {
            let case = read_case(case)?;
            let part = read_partition(partition, &case)?;
            let opf = build_regional_subproblems(&case, &part, cfg.beta_minus, cfg.beta_plus)?;
            let x0 = initial_point(&opf, cfg.start)?;
            Ok(LoadedProblem {
                problem: opf.problem.clone(),
                x0,
                opf: Some(opf),
            })
        }
    }
}

/// Centralized optimum used for the objective gap.
pub fn centralized_objective(cfg: &RunConfig, loaded: &LoadedProblem) -> Result<f64, RunError> {
    Ok(match &cfg.problem {
        ProblemSpec::Toy { targets } => toy_consensus_optimum(targets).1,
        ProblemSpec::Nonconvex { target } => {
            let x = nonconvex_toy_minimizer(*target);
            (x * x - 1.0).powi(2) + (x - target).powi(2)
        }
        ProblemSpec::Opf { .. } => {
            let opf = loaded.opf.as_ref().expect("OPF runs keep their case");
            centralized_reference_solve(&opf.case, &cfg.solver, cfg.start)?.objective
        }
    })
}

pub fn exit_code(status: &RunStatus) -> i32 {
    match status {
        RunStatus::Converged => EXIT_CONVERGED,
        RunStatus::IterationCap | RunStatus::TimeCap => EXIT_CAP,
        RunStatus::SolverFailure { .. } => EXIT_ERROR,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub trace: PathBuf,
    pub results: PathBuf,
    pub diagnostics: PathBuf,
    pub summary: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: String,
    pub message: Option<String>,
    pub exit_code: i32,
    pub mode: Mode,
    pub iterations: u64,
    pub updates: u64,
    pub max_residue: f64,
    pub constraint_mismatch: f64,
    pub objective: f64,
    pub timing: TimeAccounting,
    pub artifacts: Artifacts,
}

pub struct Execution {
    pub outcome: RunOutcome,
    pub report: AnalysisReport,
    pub summary: RunSummary,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|source| RunError::Output {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs `cfg` and writes the trace, results CSV, diagnostics and summary
/// into the output directory.
pub fn execute(cfg: &RunConfig) -> Result<Execution, RunError> {
    let loaded = load_problem(cfg)?;
    let outcome = run(&loaded.problem, &loaded.x0, &cfg.params, &cfg.delays, &cfg.stop, &cfg.solver)?;
    let baseline = if cfg.baseline {
        Some(centralized_objective(cfg, &loaded)?)
    } else {
        None
    };
    let report = analyze(
        &outcome.trace,
        &AnalysisInputs {
            problem: Some(&loaded.problem),
            kkt_tol: cfg.kkt_tol,
            lambda_constants: cfg.lambda_constants,
            theory_constants: cfg.theory_constants,
            centralized_objective: baseline,
        },
    )?;

    fs::create_dir_all(&cfg.output).map_err(|source| RunError::Output {
        path: cfg.output.clone(),
        source,
    })?;
    let artifacts = Artifacts {
        trace: cfg.output.join(TRACE_FILE),
        results: cfg.output.join(RESULTS_FILE),
        diagnostics: cfg.output.join(DIAGNOSTICS_FILE),
        summary: cfg.output.join(SUMMARY_FILE),
    };
    write_trace(&outcome.trace, &artifacts.trace)?;
    write_results(&outcome.rows, &artifacts.results)?;
    write_json(&report, &artifacts.diagnostics)?;

    let message = match &outcome.status {
        RunStatus::SolverFailure { message, .. } => Some(message.clone()),
        _ => None,
    };
    let summary = RunSummary {
        status: outcome.status.label().to_string(),
        message,
        exit_code: exit_code(&outcome.status),
        mode: cfg.mode,
        iterations: outcome.rows.last().map_or(0, |r| r.iter),
        updates: outcome.timing.workers.iter().map(|w| w.updates).sum(),
        max_residue: outcome.max_residue,
        constraint_mismatch: outcome.constraint_mismatch,
        objective: outcome.objective,
        timing: outcome.timing.clone(),
        artifacts,
    };
    write_json(&summary, &summary.artifacts.summary)?;
    Ok(Execution {
        outcome,
        report,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonconvex_minimizer_is_stationary() {
        let x = nonconvex_toy_minimizer(0.5);
        let g = 4.0 * x * (x * x - 1.0) + 2.0 * (x - 0.5);
        assert!(g.abs() < 1e-12);
        assert!(x > 0.8 && x < 1.0);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&RunStatus::Converged), 0);
        assert_eq!(exit_code(&RunStatus::TimeCap), 2);
        assert_eq!(exit_code(&RunStatus::IterationCap), 2);
        let failure = RunStatus::SolverFailure {
            worker: 0,
            message: String::new(),
        };
        assert_eq!(exit_code(&failure), 1);
    }
}
