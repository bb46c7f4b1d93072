//! KKT residuals, the z-staleness inequality, the multiplier-change bound
//! and the objective gap.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::global::{view_of, z_snapshots, GlobalIterationAssignment, OmegaReport};
use super::AnalysisError;
use crate::engine::{Event, EventTrace};
use crate::kernel::ZStore;
use crate::problem::PartitionedProblem;
use crate::solver::projected_gradient_norm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub stationarity: f64,
    pub multiplier_consistency: f64,
    pub primal: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Residuals in the ∞-norm. Stationarity is the projected gradient of
/// `f_k + λ_kᵀA_k x_k + μ_kᵀh_k(x_k)` over the box; `mus` may be empty for
/// regions without equality constraints.
pub fn check_kkt(
    problem: &PartitionedProblem,
    xs: &[DVector<f64>],
    z: &ZStore,
    lambdas: &[DVector<f64>],
    mus: &[DVector<f64>],
    tol: f64,
) -> Result<KktReport, AnalysisError> {
    let n = problem.num_regions();
    if xs.len() != n || lambdas.len() != n || z.blocks().len() != problem.edges().len() {
        return Err(AnalysisError::Shape("solution does not match the problem".into()));
    }
    let mut stationarity: f64 = 0.0;
    let mut primal: f64 = 0.0;
    for k in 0..n {
        let r = problem.region(k);
        let (x, lambda) = (&xs[k], &lambdas[k]);
        if x.len() != r.dim_x || lambda.len() != r.boundary_rows() {
            return Err(AnalysisError::Shape(format!("region {k} has mismatched vectors")));
        }
        let mut g = r.objective.gradient(x) + r.boundary_map.tr_mul(lambda);
        if let Some(c) = &r.constraints {
            let mu = mus.get(k).filter(|m| m.len() == c.len()).ok_or_else(|| {
                AnalysisError::Shape(format!("region {k} needs {} equality multipliers", c.len()))
            })?;
            g += c.jacobian(x).tr_mul(mu);
            primal = primal.max(r.constraint_violation(x));
        }
        stationarity = stationarity.max(projected_gradient_norm(x, &g, &r.lower, &r.upper));
        let ax = &r.boundary_map * x;
        primal = primal.max((ax - z.view(problem, k)).amax());
    }
    let mut multiplier_consistency: f64 = 0.0;
    for e in problem.edges() {
        let a = lambdas[e.k].rows_range(e.block_k.clone());
        let b = lambdas[e.l].rows_range(e.block_l.clone());
        multiplier_consistency = multiplier_consistency.max((a + b).amax());
    }
    let pass = stationarity <= tol && multiplier_consistency <= tol && primal <= tol;
    Ok(KktReport {
        stationarity,
        multiplier_consistency,
        primal,
        tol,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lemma2Report {
    pub omega: usize,
    pub lhs: f64,
    /// `Σ_φ ‖z^{φ+1} − z^φ‖²` over the stacked z.
    pub displacement: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Same test with the factor `(ω − 1)²`.
    pub tight_rhs: f64,
    pub tight_holds: bool,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn check_lemma2(
    trace: &EventTrace,
    a: &GlobalIterationAssignment,
    omega: &OmegaReport,
) -> Result<Lemma2Report, AnalysisError> {
    let snaps = z_snapshots(trace, a);
    if snaps.len() != a.num_slots() + 1 {
        return Err(AnalysisError::Shape("missing z snapshots".into()));
    }
    let mut lhs = 0.0;
    for u in &a.updates {
        let used = view_of(trace, &snaps[u.start_slot + 1], u.worker);
        let now = view_of(trace, &snaps[u.output_index()], u.worker);
        lhs += dist_sq(&used, &now);
    }
    let mut displacement = 0.0;
    for phi in 1..snaps.len() - 1 {
        for (next, prev) in snaps[phi + 1].iter().zip(&snaps[phi]) {
            displacement += 2.0 * dist_sq(next, prev);
        }
    }
    let w = (omega.omega - 1) as f64;
    let rhs = 2.0 * w * w * displacement;
    let tight_rhs = w * w * displacement;
    let test = |bound: f64| if omega.omega == 1 { lhs == 0.0 } else { lhs <= bound };
    Ok(Lemma2Report {
        omega: omega.omega,
        lhs,
        displacement,
        rhs,
        holds: test(rhs),
        tight_rhs,
        tight_holds: test(tight_rhs),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaIteration {
    pub iteration: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaBoundReport {
    pub c: f64,
    pub m1: f64,
    pub iterations: Vec<LambdaIteration>,
    pub violations: Vec<usize>,
}

/// Relative slack for rounding in `‖Δλ‖² ≤ C M₁² ‖Δx‖²`.
pub const LAMBDA_BOUND_SLACK: f64 = 1e-9;

/// Per global iteration, the multiplier change against the primal change of
/// the workers updating in it. A worker's first update is skipped: `λ⁰ = 0`
/// does not come from an x-update.
pub fn check_lambda_bound(
    trace: &EventTrace,
    a: &GlobalIterationAssignment,
    c: f64,
    m1: f64,
) -> LambdaBoundReport {
    let mut prev: Vec<Option<(&[f64], &[f64])>> = vec![None; a.workers];
    let mut per_slot = vec![(0.0, 0.0, false); a.num_slots()];
    let mut updates: Vec<_> = a.updates.iter().collect();
    updates.sort_by_key(|u| u.end_event);
    for u in updates {
        let Event::ComputeEnd { x, lambda, .. } = &trace.events[u.end_event] else {
            continue;
        };
        if let Some((px, pl)) = prev[u.worker] {
            let s = &mut per_slot[u.finish_slot];
            s.0 += dist_sq(lambda, pl);
            s.1 += c * m1 * m1 * dist_sq(x, px);
            s.2 = true;
        }
        prev[u.worker] = Some((x.as_slice(), lambda.as_slice()));
    }
    let iterations: Vec<LambdaIteration> = per_slot
        .iter()
        .enumerate()
        .filter(|(_, s)| s.2)
        .map(|(nu, &(lhs, rhs, _))| LambdaIteration {
            iteration: nu,
            lhs,
            rhs,
            holds: lhs <= rhs * (1.0 + LAMBDA_BOUND_SLACK) + f64::MIN_POSITIVE,
        })
        .collect();
    let violations = iterations.iter().filter(|i| !i.holds).map(|i| i.iteration).collect();
    LambdaBoundReport {
        c,
        m1,
        iterations,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub distributed: f64,
    pub centralized: f64,
    /// `100·|f_dist − f_cent| / |f_cent|`; absent when `f_cent = 0`.
    pub percent: Option<f64>,
    pub absolute: f64,
}

pub fn objective_gap(distributed: f64, centralized: f64) -> GapReport {
    let absolute = (distributed - centralized).abs();
    GapReport {
        distributed,
        centralized,
        percent: (centralized != 0.0).then(|| 100.0 * absolute / centralized.abs()),
        absolute,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_toy_consensus;

    #[test]
    fn gap_examples() {
        assert_eq!(objective_gap(3.0, 3.0).percent, Some(0.0));
        let g = objective_gap(100.05, 100.0);
        assert!((g.percent.unwrap() - 0.05).abs() < 1e-12);
        let z = objective_gap(0.25, 0.0);
        assert_eq!(z.percent, None);
        assert_eq!(z.absolute, 0.25);
    }

    #[test]
    fn toy_optimum_is_kkt_and_lambda_perturbation_is_exact() {
        let p = make_toy_consensus(&[0.0, 2.0]).unwrap();
        let xs = vec![DVector::from_element(1, 1.0); 2];
        let z = ZStore::from_blocks(vec![DVector::from_element(1, 1.0)]);
        // ∇f_1(1) = 2, ∇f_2(1) = -2, so λ_1 = -2 and λ_2 = 2.
        let mut lambdas = vec![DVector::from_element(1, -2.0), DVector::from_element(1, 2.0)];
        let r = check_kkt(&p, &xs, &z, &lambdas, &[], 1e-8).unwrap();
        assert!(r.pass);
        assert_eq!((r.stationarity, r.multiplier_consistency, r.primal), (0.0, 0.0, 0.0));
        lambdas[0][0] += 0.125;
        let r = check_kkt(&p, &xs, &z, &lambdas, &[], 1e-8).unwrap();
        assert_eq!(r.multiplier_consistency, 0.125);
        assert!(!r.pass);
    }
}
