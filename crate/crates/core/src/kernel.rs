//! Algebra of one ADMM step: x-subproblem, multiplier update, closed-form
//! z-update with proximal term, Augmented Lagrangian, residue and λ projection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{PartitionedProblem, RegionSpec};
use crate::solver::{solve_local, AugTerm, SolveError, SolveOutput, SolverConfig, WarmStart};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), KernelError> {
    if expected != found {
        return Err(KernelError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// Uniform per-coordinate box for the multiplier projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBox {
    pub lower: f64,
    pub upper: f64,
}

impl Default for LambdaBox {
    fn default() -> Self {
        Self {
            lower: -1e6,
            upper: 1e6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmParams {
    pub rho: f64,
    pub alpha: f64,
    pub lambda_box: LambdaBox,
    pub p: f64,
}

impl AdmmParams {
    pub fn new(rho: f64, alpha: f64, p: f64) -> Self {
        Self {
            rho,
            alpha,
            lambda_box: LambdaBox::default(),
            p,
        }
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "rho must be positive and finite, got {}",
                self.rho
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "alpha must be nonnegative and finite, got {}",
                self.alpha
            )));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(KernelError::InvalidParams(format!(
                "p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.lambda_box.lower <= self.lambda_box.upper) {
            return Err(KernelError::InvalidParams(format!(
                "lambda box lower {} exceeds upper {}",
                self.lambda_box.lower, self.lambda_box.upper
            )));
        }
        Ok(())
    }
}

/// One region's iterate. `z` is the region's view of the shared z-blocks at
/// the time of its last x-update.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub region_index: usize,
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub z: DVector<f64>,
    pub local_iter: u64,
    pub last_update_global_iter: u64,
    pub warm: Option<WarmStart>,
}

impl WorkerState {
    /// `λ = 0`, `z` taken from the consistent store.
    pub fn initial(problem: &PartitionedProblem, k: usize, x0: DVector<f64>, z: &ZStore) -> Self {
        let rows = problem.region(k).boundary_rows();
        Self {
            region_index: k,
            x: x0,
            lambda: DVector::zeros(rows),
            z: z.view(problem, k),
            local_iter: 0,
            last_update_global_iter: 0,
            warm: None,
        }
    }
}

/// z stored once per edge; region views are assembled on demand, so the two
/// copies of every block are identical by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ZStore {
    blocks: Vec<DVector<f64>>,
}

impl ZStore {
    pub fn zeros(problem: &PartitionedProblem) -> Self {
        Self {
            blocks: problem
                .edges()
                .iter()
                .map(|e| DVector::zeros(e.dim()))
                .collect(),
        }
    }

    pub fn from_blocks(blocks: Vec<DVector<f64>>) -> Self {
        Self { blocks }
    }

    /// z⁰ as the per-edge average of the two sides' `A x⁰`.
    pub fn averaged(problem: &PartitionedProblem, xs: &[DVector<f64>]) -> Self {
        let blocks = problem
            .edges()
            .iter()
            .map(|edge| {
                let ax_k = problem.region(edge.k).boundary_map.rows_range(edge.block_k.clone())
                    * &xs[edge.k];
                let ax_l = problem.region(edge.l).boundary_map.rows_range(edge.block_l.clone())
                    * &xs[edge.l];
                (ax_k + ax_l) * 0.5
            })
            .collect();
        Self { blocks }
    }

    pub fn block(&self, e: usize) -> &DVector<f64> {
        &self.blocks[e]
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    pub fn set_block(&mut self, e: usize, value: DVector<f64>) {
        self.blocks[e] = value;
    }

    /// `z_k`, laid out like the rows of `A_k`.
    pub fn view(&self, problem: &PartitionedProblem, k: usize) -> DVector<f64> {
        let mut out = DVector::zeros(problem.region(k).boundary_rows());
        for nb in problem.neighbors(k) {
            out.rows_range_mut(nb.rows.clone())
                .copy_from(&self.blocks[nb.edge]);
        }
        out
    }

    /// Squared norm of the stacked region views, so every block counts twice.
    pub fn stacked_norm_squared(&self) -> f64 {
        2.0 * self.blocks.iter().map(|b| b.norm_squared()).sum::<f64>()
    }
}

/// Inputs of the closed-form z-update, ordered from the edge's low side.
#[derive(Debug, Clone, Copy)]
pub struct ZUpdateInputs<'a> {
    pub lambda_kl: &'a DVector<f64>,
    pub lambda_lk: &'a DVector<f64>,
    pub ax_k: &'a DVector<f64>,
    pub ax_l: &'a DVector<f64>,
    pub z_prev: &'a DVector<f64>,
}

impl ZUpdateInputs<'_> {
    fn check(&self) -> Result<(), KernelError> {
        let n = self.z_prev.len();
        check_len("lambda_kl", n, self.lambda_kl.len())?;
        check_len("lambda_lk", n, self.lambda_lk.len())?;
        check_len("ax_k", n, self.ax_k.len())?;
        check_len("ax_l", n, self.ax_l.len())
    }
}

/// x-subproblem result plus the solver state to warm start the next one.
#[derive(Debug, Clone)]
pub struct XUpdate {
    pub x: DVector<f64>,
    pub solve: SolveOutput,
}

/// `argmin f_k(x) + λᵀA_k x + (ρ/2)‖A_k x − z_k‖²` over `X_k`, started from
/// the worker's current x.
pub fn x_update(
    region: &RegionSpec,
    state: &WorkerState,
    params: &AdmmParams,
    solver: &SolverConfig,
) -> Result<XUpdate, SolveError> {
    let term = AugTerm {
        a: &region.boundary_map,
        lambda: &state.lambda,
        z: &state.z,
        rho: params.rho,
    };
    let solve = solve_local(region, Some(&term), &state.x, solver, state.warm.as_ref())?;
    Ok(XUpdate {
        x: solve.x.clone(),
        solve,
    })
}

/// `Π(λ + ρ(A x_new − z_snapshot))`.
pub fn lambda_update(
    lambda: &DVector<f64>,
    ax_new: &DVector<f64>,
    z_snapshot: &DVector<f64>,
    params: &AdmmParams,
) -> Result<DVector<f64>, KernelError> {
    check_len("ax_new", lambda.len(), ax_new.len())?;
    check_len("z_snapshot", lambda.len(), z_snapshot.len())?;
    let raw = lambda + (ax_new - z_snapshot) * params.rho;
    Ok(project_lambda(&raw, &params.lambda_box))
}

/// `(λ_kl + λ_lk + ρA_k x_k + ρA_l x_l + α z_prev) / (2ρ + α)`.
pub fn z_update(inputs: &ZUpdateInputs<'_>, params: &AdmmParams) -> Result<DVector<f64>, KernelError> {
    inputs.check()?;
    let rho = params.rho;
    let alpha = params.alpha;
    let denom = 2.0 * rho + alpha;
    Ok(DVector::from_iterator(
        inputs.z_prev.len(),
        (0..inputs.z_prev.len()).map(|i| {
            (inputs.lambda_kl[i]
                + inputs.lambda_lk[i]
                + rho * inputs.ax_k[i]
                + rho * inputs.ax_l[i]
                + alpha * inputs.z_prev[i])
                / denom
        }),
    ))
}

/// Optimality residual of the z-subproblem at `z`:
/// `λ_kl + λ_lk + ρ(A_k x_k − z) + ρ(A_l x_l − z) − α(z − z_prev)`.
pub fn z_stationarity_residual(
    inputs: &ZUpdateInputs<'_>,
    z: &DVector<f64>,
    params: &AdmmParams,
) -> Result<DVector<f64>, KernelError> {
    inputs.check()?;
    check_len("z", inputs.z_prev.len(), z.len())?;
    let rho = params.rho;
    Ok(inputs.lambda_kl + inputs.lambda_lk + (inputs.ax_k - z) * rho + (inputs.ax_l - z) * rho
        - (z - inputs.z_prev) * params.alpha)
}

/// `‖(A x − z, z − z_prev)‖_∞` from precomputed parts.
pub fn residue_from_parts(
    ax: &DVector<f64>,
    z: &DVector<f64>,
    z_prev: &DVector<f64>,
) -> Result<f64, KernelError> {
    check_len("z", ax.len(), z.len())?;
    check_len("z_prev", ax.len(), z_prev.len())?;
    let primal = (ax - z).amax();
    let dual = (z - z_prev).amax();
    Ok(primal.max(dual))
}

/// Residue Γ_k of a worker against the z block from its previous iteration.
pub fn residue(
    region: &RegionSpec,
    state: &WorkerState,
    z_prev: &DVector<f64>,
) -> Result<f64, KernelError> {
    check_len("x", region.dim_x, state.x.len())?;
    let ax = &region.boundary_map * &state.x;
    residue_from_parts(&ax, &state.z, z_prev)
}

/// Value of the Augmented Lagrangian, or the first infeasible region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LagrangianValue {
    Finite(f64),
    Infeasible { region: usize },
}

pub fn augmented_lagrangian(
    problem: &PartitionedProblem,
    xs: &[DVector<f64>],
    z: &ZStore,
    lambdas: &[DVector<f64>],
    params: &AdmmParams,
    feasibility_tol: f64,
) -> Result<LagrangianValue, KernelError> {
    let k_total = problem.num_regions();
    check_len("x_all", k_total, xs.len())?;
    check_len("lambda_all", k_total, lambdas.len())?;
    let mut total = 0.0;
    for (k, region) in problem.regions().iter().enumerate() {
        check_len("x", region.dim_x, xs[k].len())?;
        check_len("lambda", region.boundary_rows(), lambdas[k].len())?;
        if !region.is_feasible(&xs[k], feasibility_tol) {
            return Ok(LagrangianValue::Infeasible { region: k });
        }
        let r = &region.boundary_map * &xs[k] - z.view(problem, k);
        total += region.objective.value(&xs[k])
            + lambdas[k].dot(&r)
            + 0.5 * params.rho * r.norm_squared();
    }
    Ok(LagrangianValue::Finite(total))
}

pub fn project_lambda(lambda: &DVector<f64>, bounds: &LambdaBox) -> DVector<f64> {
    lambda.map(|v| v.max(bounds.lower).min(bounds.upper))
}

/// `⌈p·n⌉`, never below one.
pub fn arrival_threshold(p: f64, neighbors: usize) -> usize {
    let raw = (p * neighbors as f64 - 1e-12).ceil();
    (raw.max(1.0) as usize).min(neighbors.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{make_nonconvex_toy, make_toy_consensus, SeparableQuadratic};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn params(rho: f64, alpha: f64) -> AdmmParams {
        AdmmParams::new(rho, alpha, 1.0)
    }

    fn scalar_state(x: f64, lambda: f64, z: f64) -> WorkerState {
        WorkerState {
            region_index: 0,
            x: v(&[x]),
            lambda: v(&[lambda]),
            z: v(&[z]),
            local_iter: 0,
            last_update_global_iter: 0,
            warm: None,
        }
    }

    fn tight_solver() -> SolverConfig {
        SolverConfig {
            grad_tol: 1e-12,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn x_update_quadratic_closed_form() {
        let region = RegionSpec {
            objective: Arc::new(SeparableQuadratic {
                weights: v(&[1.0]),
                targets: v(&[0.0]),
            }),
            ..make_toy_consensus(&[0.0, 1.0]).unwrap().region(0).clone()
        };
        let state = scalar_state(0.0, 0.0, 4.0);
        let out = x_update(&region, &state, &params(2.0, 0.0), &tight_solver()).unwrap();
        assert!((out.x[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn x_update_keeps_stationary_point() {
        let problem = make_toy_consensus(&[3.0, 1.0]).unwrap();
        let state = scalar_state(3.0, 0.0, 3.0);
        let out = x_update(problem.region(0), &state, &params(4.0, 0.0), &tight_solver()).unwrap();
        assert_eq!(out.x[0], 3.0);
    }

    #[test]
    fn x_update_nonconvex_matches_grid() {
        let problem = make_nonconvex_toy();
        let rho = 10.0;
        let z = 0.9;
        let obj = |x: f64| (x * x - 1.0).powi(2) + 0.5 * rho * (x - z).powi(2);
        let grid = (0..=400_000)
            .map(|i| -2.0 + i as f64 * 1e-5)
            .min_by(|a, b| obj(*a).partial_cmp(&obj(*b)).unwrap())
            .unwrap();
        let state = scalar_state(0.9, 0.0, z);
        let out = x_update(problem.region(0), &state, &params(rho, 0.0), &tight_solver()).unwrap();
        assert!((out.x[0] - grid).abs() < 1e-4, "{} vs {grid}", out.x[0]);
    }

    #[test]
    fn lambda_update_examples() {
        let p = params(2.0, 0.0);
        let same = lambda_update(&v(&[0.3]), &v(&[1.0]), &v(&[1.0]), &p).unwrap();
        assert_eq!(same[0], 0.3);
        let step = lambda_update(&v(&[0.2]), &v(&[1.5]), &v(&[1.0]), &p).unwrap();
        assert!((step[0] - 1.2).abs() < 1e-15);
        let mut boxed = params(10.0, 0.0);
        boxed.lambda_box = LambdaBox {
            lower: -1.0,
            upper: 1.0,
        };
        let clamped = lambda_update(&v(&[0.0]), &v(&[0.5]), &v(&[0.0]), &boxed).unwrap();
        assert_eq!(clamped[0], 1.0);
        assert!(lambda_update(&v(&[0.0]), &v(&[0.5, 1.0]), &v(&[0.0]), &p).is_err());
    }

    #[test]
    fn z_update_examples() {
        let zero = v(&[0.0]);
        let mid = z_update(
            &ZUpdateInputs {
                lambda_kl: &zero,
                lambda_lk: &zero,
                ax_k: &v(&[1.0]),
                ax_l: &v(&[3.0]),
                z_prev: &zero,
            },
            &params(3.7, 0.0),
        )
        .unwrap();
        assert_eq!(mid[0], 2.0);

        let all_zero = z_update(
            &ZUpdateInputs {
                lambda_kl: &zero,
                lambda_lk: &zero,
                ax_k: &zero,
                ax_l: &zero,
                z_prev: &zero,
            },
            &params(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(all_zero[0], 0.0);

        let inputs = ZUpdateInputs {
            lambda_kl: &v(&[0.5]),
            lambda_lk: &v(&[-0.1]),
            ax_k: &v(&[2.0]),
            ax_l: &v(&[4.0]),
            z_prev: &v(&[1.0]),
        };
        let got = z_update(&inputs, &params(1.0, 1.0)).unwrap();
        assert!((got[0] - 7.4 / 3.0).abs() < 1e-15);

        // Independent oracle: bisection on the central-difference slope of the
        // z-subproblem objective.
        let l = |z: f64| {
            -(0.5 - 0.1) * z + 0.5 * (2.0 - z).powi(2) + 0.5 * (4.0 - z).powi(2)
                + 0.5 * (z - 1.0).powi(2)
        };
        let slope = |z: f64| (l(z + 1e-3) - l(z - 1e-3)) / 2e-3;
        let (mut a, mut b) = (-10.0_f64, 10.0_f64);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if slope(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert!((0.5 * (a + b) - got[0]).abs() < 1e-9);
        let res = z_stationarity_residual(&inputs, &got, &params(1.0, 1.0)).unwrap();
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn residue_examples() {
        let r = residue_from_parts(&v(&[0.1, -0.3]), &v(&[0.0, 0.0]), &v(&[0.05, 0.0])).unwrap();
        assert!((r - 0.3).abs() < 1e-15);
        let problem = make_toy_consensus(&[0.0, 2.0]).unwrap();
        let state = scalar_state(1.0, 0.0, 1.0);
        assert_eq!(residue(problem.region(0), &state, &v(&[1.0])).unwrap(), 0.0);
        let scaled =
            residue_from_parts(&v(&[1.0, -3.0]), &v(&[0.0, 0.0]), &v(&[0.5, 0.0])).unwrap();
        assert!((scaled - 10.0 * r).abs() < 1e-14);
        assert!(residue_from_parts(&v(&[1.0]), &v(&[1.0, 2.0]), &v(&[1.0])).is_err());
    }

    #[test]
    fn augmented_lagrangian_examples() {
        let problem = make_toy_consensus(&[0.0, 2.0]).unwrap();
        let xs = vec![v(&[1.0]), v(&[1.0])];
        let z = ZStore::from_blocks(vec![v(&[1.0])]);
        let lambdas = vec![v(&[0.0]), v(&[0.0])];
        let val = augmented_lagrangian(&problem, &xs, &z, &lambdas, &params(5.0, 0.0), 1e-9).unwrap();
        assert_eq!(val, LagrangianValue::Finite(2.0));

        let lambdas = vec![v(&[0.7]), v(&[-0.2])];
        let rho = 5.0;
        let at = |zv: f64| match augmented_lagrangian(
            &problem,
            &xs,
            &ZStore::from_blocks(vec![v(&[zv])]),
            &lambdas,
            &params(rho, 0.0),
            1e-9,
        )
        .unwrap()
        {
            LagrangianValue::Finite(f) => f,
            LagrangianValue::Infeasible { .. } => panic!("feasible"),
        };
        let h = 1e-5;
        let fd = (at(1.0 + h) - at(1.0 - h)) / (2.0 * h);
        // dL/dz = -(λ_0 + λ_1) - ρ Σ (A x_k - z); residuals vanish at z = 1.
        assert!((fd + 0.5).abs() < 1e-8, "{fd}");
    }

    #[test]
    fn augmented_lagrangian_flags_infeasible() {
        let problem = make_nonconvex_toy();
        let xs = vec![v(&[3.0]), v(&[0.0])];
        let z = ZStore::zeros(&problem);
        let lambdas = vec![v(&[0.0]), v(&[0.0])];
        let val = augmented_lagrangian(&problem, &xs, &z, &lambdas, &params(1.0, 0.0), 1e-9).unwrap();
        assert_eq!(val, LagrangianValue::Infeasible { region: 0 });
    }

    #[test]
    fn project_lambda_examples() {
        let b = LambdaBox {
            lower: -1.0,
            upper: 1.0,
        };
        assert_eq!(project_lambda(&v(&[0.5, -0.2]), &b), v(&[0.5, -0.2]));
        assert_eq!(project_lambda(&v(&[5.0]), &b), v(&[1.0]));
    }

    #[test]
    fn arrival_threshold_examples() {
        assert_eq!(arrival_threshold(1.0, 3), 3);
        assert_eq!(arrival_threshold(0.1, 3), 1);
        assert_eq!(arrival_threshold(0.5, 4), 2);
        assert_eq!(arrival_threshold(0.1, 0), 1);
    }

    #[test]
    fn params_validation() {
        assert!(params(1.0, 0.0).validate().is_ok());
        assert!(params(0.0, 0.0).validate().is_err());
        assert!(params(1.0, -1.0).validate().is_err());
        assert!(AdmmParams::new(1.0, 0.0, 0.0).validate().is_err());
        assert!(AdmmParams::new(1.0, 0.0, 1.5).validate().is_err());
    }

    #[test]
    fn z_views_share_blocks() {
        let problem = make_toy_consensus(&[0.0, 1.0, 2.0]).unwrap();
        let z = ZStore::from_blocks(vec![v(&[4.0]), v(&[5.0])]);
        assert_eq!(z.view(&problem, 1), v(&[4.0, 5.0]));
        assert_eq!(z.view(&problem, 0), v(&[4.0]));
        assert_eq!(z.view(&problem, 2), v(&[5.0]));
        assert_eq!(z.stacked_norm_squared(), 2.0 * (16.0 + 25.0));
    }

    #[test]
    fn averaged_z_start() {
        let problem = make_toy_consensus(&[0.0, 2.0]).unwrap();
        assert_eq!(problem.region(0).boundary_map, DMatrix::from_element(1, 1, 1.0));
        let z = ZStore::averaged(&problem, &[v(&[1.0]), v(&[3.0])]);
        assert_eq!(z.block(0)[0], 2.0);
    }
}
