//! Penalty and proximal-weight lower bounds, and the constant `C` of the
//! boundary maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::problem::PartitionedProblem;

/// User-supplied constants of the convergence theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticConstants {
    pub gamma: f64,
    pub m1: f64,
    pub m2: f64,
    pub c: f64,
    pub omega: usize,
}

impl DiagnosticConstants {
    /// All constants positive and `M₂ ≥ 1`.
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |name: &str, v: f64| AnalysisError::Constants(format!("{name} must be positive, got {v}"));
        for (name, v) in [("gamma", self.gamma), ("M1", self.m1), ("M2", self.m2), ("C", self.c)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(bad(name, v));
            }
        }
        if self.m2 < 1.0 {
            return Err(AnalysisError::Constants(format!("M2 must be at least 1, got {}", self.m2)));
        }
        if self.omega == 0 {
            return Err(AnalysisError::Constants("omega must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub rho: f64,
    pub rho_min: f64,
    pub alpha_min: f64,
    pub rho_admissible: bool,
    pub alpha_zero_admissible: bool,
}

pub fn rho_min(c: &DiagnosticConstants) -> f64 {
    let a = c.gamma + c.c * c.m1 * c.m1;
    let m2sq = c.m2 * c.m2;
    a * m2sq + (a * a * m2sq * m2sq + 4.0 * c.c * c.m1 * c.m1 * m2sq).sqrt()
}

pub fn alpha_min(c: &DiagnosticConstants, rho: f64) -> f64 {
    let w = (c.omega - 1) as f64;
    (2.0 * rho * c.m2.powi(4) + 1.0) * w * w / 2.0 - rho
}

pub fn parameter_bounds(c: &DiagnosticConstants, rho: f64) -> Result<ParameterBounds, AnalysisError> {
    c.validate()?;
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(AnalysisError::Constants(format!("rho must be positive, got {rho}")));
    }
    let rho_min = rho_min(c);
    let alpha_min = alpha_min(c, rho);
    Ok(ParameterBounds {
        rho,
        rho_min,
        alpha_min,
        rho_admissible: rho > rho_min,
        alpha_zero_admissible: alpha_min <= 0.0,
    })
}

/// `max_k σ_max(B_kᵀB_k)` with `B_k = (A_k A_kᵀ)⁻¹ A_k`; `None` when some
/// `A_k A_kᵀ` is singular.
pub fn boundary_constant(problem: &PartitionedProblem) -> Option<f64> {
    let mut c: f64 = 0.0;
    for region in problem.regions() {
        let a = &region.boundary_map;
        if a.nrows() == 0 {
            continue;
        }
        let gram: DMatrix<f64> = a * a.transpose();
        let b = gram.cholesky()?.solve(a);
        let btb = b.transpose() * &b;
        let top = btb.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        c = c.max(top);
    }
    Some(c)
}
