//! AC optimal power flow backend.

pub mod build;
pub mod case;
pub mod fixtures;
pub mod partition;
pub mod power_flow;

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{
    build_regional_subproblems, BoundaryLayout, BuildError, NetworkPoint, OpfProblem, RegionLayout,
    DEFAULT_BETA_MINUS, DEFAULT_BETA_PLUS,
};
pub use case::{Branch, Bus, BusType, CaseError, CostCoefficients, Generator, OpfCase};
pub use partition::{Partition, PartitionError};
pub use power_flow::{power_flow_residual, solve_newton, PowerFlowError, PowerFlowSolution};

use crate::solver::{solve_local, SolveError, SolverConfig};

/// Initial point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartMode {
    /// Midpoint of every variable's bounds.
    Flat,
    /// A power-flow solution (OPF) or the perturbed optimum (toys).
    Warm,
}

#[derive(Debug, Clone, Error)]
pub enum ReferenceError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub objective: f64,
    pub x: DVector<f64>,
    pub point: NetworkPoint,
    pub constraint_violation: f64,
}

impl CentralizedSolution {
    pub fn voltage(&self) -> &[Complex<f64>] {
        &self.point.voltage
    }
}

/// Initial region vectors for a compiled case.
pub fn initial_point(opf: &OpfProblem, start: StartMode) -> Result<Vec<DVector<f64>>, PowerFlowError> {
    match start {
        StartMode::Flat => Ok(opf.problem.flat_start()),
        StartMode::Warm => Ok(opf.warm_start(&solve_newton(&opf.case, 1e-10, 50)?)),
    }
}

/// Solves the undecomposed OPF with the local solver.
pub fn centralized_reference_solve(
    case: &OpfCase,
    config: &SolverConfig,
    start: StartMode,
) -> Result<CentralizedSolution, ReferenceError> {
    let single = Partition::single_region(case);
    let opf = build_regional_subproblems(case, &single, DEFAULT_BETA_MINUS, DEFAULT_BETA_PLUS)?;
    let x0 = initial_point(&opf, start)?.remove(0);
    let out = solve_local(opf.problem.region(0), None, &x0, config, None)?;
    let xs = vec![out.x.clone()];
    Ok(CentralizedSolution {
        objective: opf.objective(&xs),
        point: opf.assemble(&xs),
        constraint_violation: out.diagnostics.constraint_violation,
        x: out.x,
    })
}
