//! Post-hoc checks on execution traces: the global iteration counter, the
//! delay bound ω, KKT residuals, the z-staleness and multiplier-change
//! inequalities, parameter bounds and objective gaps.

pub mod bounds;
pub mod checks;
pub mod global;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EventTrace;
use crate::kernel::ZStore;
use crate::problem::PartitionedProblem;

pub use bounds::{
    alpha_min, boundary_constant, parameter_bounds, rho_min, DiagnosticConstants, ParameterBounds,
};
pub use checks::{
    check_kkt, check_lambda_bound, check_lemma2, objective_gap, GapReport, KktReport,
    LambdaBoundReport, LambdaIteration, Lemma2Report, LAMBDA_BOUND_SLACK,
};
pub use global::{
    assign_global_iterations, check_rules, measure_omega, omega_from_delays,
    omega_from_membership, GlobalIterationAssignment, OmegaReport, RuleCheck, UpdateSlot,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("malformed trace at event {event}: {message}")]
    Malformed { event: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("invalid constants: {0}")]
    Constants(String),
}

/// What to check beyond the trace-only diagnostics.
#[derive(Clone, Copy, Default)]
pub struct AnalysisInputs<'a> {
    /// Enables the KKT check on the final worker states.
    pub problem: Option<&'a PartitionedProblem>,
    pub kkt_tol: f64,
    /// `(C, M₁)` for the multiplier-change bound.
    pub lambda_constants: Option<(f64, f64)>,
    /// `(γ, M₁, M₂, C)`; ω is taken from the trace.
    pub theory_constants: Option<(f64, f64, f64, f64)>,
    pub centralized_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterSummary {
    pub slots: usize,
    pub updates: usize,
    pub boundaries: Vec<usize>,
    pub active_per_slot: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub workers: usize,
    pub events: usize,
    pub status: Option<String>,
    pub counter: CounterSummary,
    pub rules: RuleCheck,
    pub omega: OmegaReport,
    pub lemma2: Lemma2Report,
    pub lambda_bound: Option<LambdaBoundReport>,
    pub kkt: Option<KktReport>,
    pub bounds: Option<ParameterBounds>,
    pub gap: Option<GapReport>,
}

/// Final objective of the trace's worker states.
pub fn final_objective(trace: &EventTrace, problem: &PartitionedProblem) -> Option<f64> {
    let footer = trace.footer.as_ref()?;
    let xs = final_vectors(footer.final_states.iter().map(|s| &s.x));
    problem.total_objective(&xs).ok()
}

fn final_vectors<'a>(it: impl Iterator<Item = &'a Vec<f64>>) -> Vec<DVector<f64>> {
    it.map(|v| DVector::from_column_slice(v)).collect()
}

pub fn analyze(trace: &EventTrace, inputs: &AnalysisInputs<'_>) -> Result<AnalysisReport, AnalysisError> {
    let assignment = assign_global_iterations(trace)?;
    let rules = check_rules(trace, &assignment)?;
    let omega = measure_omega(&assignment);
    let lemma2 = check_lemma2(trace, &assignment, &omega)?;
    let lambda_bound = inputs
        .lambda_constants
        .map(|(c, m1)| check_lambda_bound(trace, &assignment, c, m1));

    let kkt = match (inputs.problem, &trace.footer) {
        (Some(problem), Some(footer)) => {
            let xs = final_vectors(footer.final_states.iter().map(|s| &s.x));
            let lambdas = final_vectors(footer.final_states.iter().map(|s| &s.lambda));
            let mus = final_vectors(footer.final_states.iter().map(|s| &s.mu));
            let z = ZStore::from_blocks(final_vectors(footer.z.iter()));
            Some(check_kkt(problem, &xs, &z, &lambdas, &mus, inputs.kkt_tol)?)
        }
        _ => None,
    };
    let bounds = match inputs.theory_constants {
        Some((gamma, m1, m2, c)) => Some(parameter_bounds(
            &DiagnosticConstants {
                gamma,
                m1,
                m2,
                c,
                omega: omega.omega,
            },
            trace.header.rho,
        )?),
        None => None,
    };
    let gap = match (inputs.centralized_objective, inputs.problem) {
        (Some(cent), Some(problem)) => final_objective(trace, problem).map(|d| objective_gap(d, cent)),
        _ => None,
    };
    Ok(AnalysisReport {
        workers: trace.header.workers,
        events: trace.events.len(),
        status: trace.footer.as_ref().map(|f| f.status.clone()),
        counter: CounterSummary {
            slots: assignment.num_slots(),
            updates: assignment.updates.len(),
            boundaries: assignment.boundaries.clone(),
            active_per_slot: assignment.membership.iter().map(|s| s.len()).collect(),
        },
        rules,
        omega,
        lemma2,
        lambda_bound,
        kkt,
        bounds,
        gap,
    })
}
