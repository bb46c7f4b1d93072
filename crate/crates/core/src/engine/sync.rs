use nalgebra::DVector;

use super::{check_inputs, edge_update, local_step, rows_of, EngineError, StoppingRule};
use crate::kernel::{residue_from_parts, AdmmParams, WorkerState, ZStore};
use crate::problem::PartitionedProblem;
use crate::solver::SolverConfig;

/// Iterate after one synchronous sweep.
#[derive(Debug, Clone)]
pub struct SyncIterate {
    pub xs: Vec<DVector<f64>>,
    pub lambdas: Vec<DVector<f64>>,
    /// z used by this sweep's x-updates.
    pub z: ZStore,
    pub max_residue: f64,
    pub constraint_mismatch: f64,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SyncRun {
    pub iterates: Vec<SyncIterate>,
    pub converged: bool,
    pub states: Vec<WorkerState>,
    pub z: ZStore,
}

/// Plain z → x → λ sweeps over all workers. The first sweep uses z⁰ (the
/// edge average of `A x⁰`) directly.
pub fn run_sync_reference(
    problem: &PartitionedProblem,
    x0: &[DVector<f64>],
    params: &AdmmParams,
    stop: &StoppingRule,
    solver: &SolverConfig,
) -> Result<SyncRun, EngineError> {
    check_inputs(problem, x0, params, stop, solver)?;
    let n = problem.num_regions();
    let mut z = ZStore::averaged(problem, x0);
    let mut states: Vec<WorkerState> = (0..n)
        .map(|k| WorkerState::initial(problem, k, x0[k].clone(), &z))
        .collect();
    let mut axs: Vec<DVector<f64>> = (0..n)
        .map(|k| &problem.region(k).boundary_map * &x0[k])
        .collect();
    let mut iterates = Vec::new();
    let mut converged = false;

    for iter in 1..=stop.max_iters {
        if iter > 1 {
            let mut next = z.clone();
            for (e, edge) in problem.edges().iter().enumerate() {
                let rk = &edge.block_k;
                let rl = &edge.block_l;
                let side_k = (rows_of(&axs[edge.k], rk), rows_of(&states[edge.k].lambda, rk));
                let side_l = (rows_of(&axs[edge.l], rl), rows_of(&states[edge.l].lambda, rl));
                let block = edge_update(
                    problem,
                    e,
                    (&side_k.0, &side_k.1),
                    (&side_l.0, &side_l.1),
                    z.block(e),
                    params,
                )?;
                next.set_block(e, block);
            }
            z = next;
        }
        let mut gamma: f64 = 0.0;
        let mut mismatch: f64 = 0.0;
        for k in 0..n {
            let snap_prev = states[k].z.clone();
            states[k].z = z.view(problem, k);
            let step = local_step(problem, &states[k], params, solver).map_err(|source| {
                EngineError::LocalSolve {
                    worker: k,
                    iter,
                    source,
                }
            })?;
            let g = residue_from_parts(&step.ax, &states[k].z, &snap_prev)?;
            gamma = gamma.max(g);
            mismatch = mismatch.max(problem.region(k).constraint_violation(&step.x));
            let s = &mut states[k];
            s.x = step.x;
            s.lambda = step.lambda;
            s.warm = Some(step.warm);
            s.local_iter = iter;
            axs[k] = step.ax;
        }
        let objective = (0..n)
            .map(|k| problem.region(k).objective.value(&states[k].x))
            .sum();
        iterates.push(SyncIterate {
            xs: states.iter().map(|s| s.x.clone()).collect(),
            lambdas: states.iter().map(|s| s.lambda.clone()).collect(),
            z: z.clone(),
            max_residue: gamma,
            constraint_mismatch: mismatch,
            objective,
        });
        if iter >= StoppingRule::min_updates(problem) && stop.holds(gamma, mismatch) {
            converged = true;
            break;
        }
    }
    Ok(SyncRun {
        iterates,
        converged,
        states,
        z,
    })
}
