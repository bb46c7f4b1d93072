//! Deterministic discrete-event execution of asynchronous ADMM over a
//! virtual clock, plus the straight-line synchronous reference.

pub mod delay;
pub mod sync;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{
    arrival_threshold, lambda_update, residue_from_parts, x_update, z_update, AdmmParams,
    KernelError, WorkerState, ZStore, ZUpdateInputs,
};
use crate::problem::PartitionedProblem;
use crate::solver::{SolveError, SolverConfig, WarmStart};

pub use delay::{DelayDist, DelayError, DelayModel, DelaySampler};
pub use sync::{run_sync_reference, SyncIterate, SyncRun};
pub use trace::{
    payload_digest, EdgeInfo, Event, EventTrace, FinalState, MessageRecord, TraceFooter,
    TraceHeader, TRACE_FORMAT, TRACE_VERSION,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Params(#[from] KernelError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("invalid solver configuration: {0}")]
    Solver(SolveError),
    #[error("invalid stopping rule: {0}")]
    Stopping(String),
    #[error("initial point has {found} regions, problem has {expected}")]
    InitialPoint { expected: usize, found: usize },
    #[error("local solve of region {worker} failed at iteration {iter}: {source}")]
    LocalSolve {
        worker: usize,
        iter: u64,
        source: SolveError,
    },
}

/// Global stopping test plus caps. Iteration caps count average local
/// iterations per worker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub tol: f64,
    pub max_iters: u64,
    pub max_time_ms: Option<f64>,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            max_iters: 1000,
            max_time_ms: None,
        }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.tol > 0.0) {
            return Err(EngineError::Stopping("tolerance must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(EngineError::Stopping("max_iters must be positive".into()));
        }
        if let Some(t) = self.max_time_ms {
            if !(t > 0.0) {
                return Err(EngineError::Stopping("max_time_ms must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn holds(&self, max_residue: f64, mismatch: f64) -> bool {
        max_residue <= self.tol && mismatch <= self.tol
    }

    /// Local iterations every worker needs before the test applies: the dual
    /// part of the residue is only informative after a z change.
    pub fn min_updates(problem: &PartitionedProblem) -> u64 {
        if problem.edges().is_empty() {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    IterationCap,
    TimeCap,
    SolverFailure { worker: usize, message: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::IterationCap => "iteration_cap",
            RunStatus::TimeCap => "time_cap",
            RunStatus::SolverFailure { .. } => "solver_failure",
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self, RunStatus::Converged)
    }
}

/// One row of the per-iteration results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub iter: u64,
    pub time_ms: f64,
    pub max_residue: f64,
    pub objective: f64,
    pub constraint_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerTime {
    pub worker: usize,
    pub updates: u64,
    pub compute_ms: f64,
    pub wait_ms: f64,
    pub wait_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAccounting {
    pub virtual_ms: f64,
    pub wall_ms: f64,
    pub workers: Vec<WorkerTime>,
    pub average_wait_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub trace: EventTrace,
    pub rows: Vec<ResultRow>,
    pub states: Vec<WorkerState>,
    pub z: ZStore,
    /// Final iterate when converged, otherwise the best one seen.
    pub solution: Vec<DVector<f64>>,
    pub max_residue: f64,
    pub constraint_mismatch: f64,
    pub objective: f64,
    pub timing: TimeAccounting,
}

/// Whether an idle worker with `neighbors` neighbors, `fresh` of which have
/// unconsumed messages, may start its next update. Isolated workers are
/// always ready.
pub fn ready_to_update(p: f64, neighbors: usize, fresh: usize) -> bool {
    neighbors == 0 || fresh >= arrival_threshold(p, neighbors)
}

/// Result of one local x- and λ-update before it is applied.
#[derive(Debug, Clone)]
pub(crate) struct LocalStep {
    pub x: DVector<f64>,
    pub lambda: DVector<f64>,
    pub ax: DVector<f64>,
    pub warm: WarmStart,
}

pub(crate) fn local_step(
    problem: &PartitionedProblem,
    state: &WorkerState,
    params: &AdmmParams,
    solver: &SolverConfig,
) -> Result<LocalStep, SolveError> {
    let region = problem.region(state.region_index);
    let update = x_update(region, state, params, solver)?;
    let ax = &region.boundary_map * &update.x;
    let lambda = lambda_update(&state.lambda, &ax, &state.z, params)
        .map_err(|_| SolveError::DimensionMismatch {
            expected: state.lambda.len(),
            found: ax.len(),
        })?;
    Ok(LocalStep {
        x: update.x,
        lambda,
        ax,
        warm: update.solve.warm,
    })
}

/// z-update of edge `e` from both sides' boundary rows.
pub(crate) fn edge_update(
    problem: &PartitionedProblem,
    e: usize,
    side_k: (&DVector<f64>, &DVector<f64>),
    side_l: (&DVector<f64>, &DVector<f64>),
    z_prev: &DVector<f64>,
    params: &AdmmParams,
) -> Result<DVector<f64>, KernelError> {
    let _ = problem.edge(e);
    z_update(
        &ZUpdateInputs {
            lambda_kl: side_k.1,
            lambda_lk: side_l.1,
            ax_k: side_k.0,
            ax_l: side_l.0,
            z_prev,
        },
        params,
    )
}

pub(crate) fn rows_of(v: &DVector<f64>, rows: &std::ops::Range<usize>) -> DVector<f64> {
    v.rows_range(rows.clone()).into_owned()
}

pub(crate) fn trace_header(
    problem: &PartitionedProblem,
    params: &AdmmParams,
    seed: u64,
    x0: &[DVector<f64>],
    z0: &ZStore,
) -> TraceHeader {
    TraceHeader {
        format: TRACE_FORMAT.to_string(),
        version: TRACE_VERSION,
        workers: problem.num_regions(),
        rho: params.rho,
        alpha: params.alpha,
        p: params.p,
        seed,
        edges: problem
            .edges()
            .iter()
            .map(|e| EdgeInfo {
                k: e.k,
                l: e.l,
                dim: e.dim(),
            })
            .collect(),
        blocks: (0..problem.num_regions())
            .map(|k| {
                problem
                    .neighbors(k)
                    .iter()
                    .map(|nb| (nb.edge, nb.rows.start, nb.rows.end))
                    .collect()
            })
            .collect(),
        x0: x0.iter().map(|x| x.as_slice().to_vec()).collect(),
        z0: z0.blocks().iter().map(|b| b.as_slice().to_vec()).collect(),
    }
}

pub(crate) fn check_inputs(
    problem: &PartitionedProblem,
    x0: &[DVector<f64>],
    params: &AdmmParams,
    stop: &StoppingRule,
    solver: &SolverConfig,
) -> Result<(), EngineError> {
    params.validate()?;
    stop.validate()?;
    solver.validate().map_err(EngineError::Solver)?;
    if x0.len() != problem.num_regions() {
        return Err(EngineError::InitialPoint {
            expected: problem.num_regions(),
            found: x0.len(),
        });
    }
    for (k, x) in x0.iter().enumerate() {
        if x.len() != problem.region(k).dim_x {
            return Err(EngineError::Params(KernelError::DimensionMismatch {
                what: "x0",
                expected: problem.region(k).dim_x,
                found: x.len(),
            }));
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Message {
    id: u64,
    from: usize,
    edge: usize,
    iter: u64,
    ax: DVector<f64>,
    lambda: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Pending {
    ComputeDone(usize),
    Arrival(u64),
}

struct Worker {
    state: WorkerState,
    busy: bool,
    step: Option<LocalStep>,
    started_ns: u64,
    snap_prev: DVector<f64>,
    /// Unconsumed messages per neighbor slot (in `neighbors(k)` order).
    inbox: Vec<VecDeque<Message>>,
    ax: DVector<f64>,
    gamma: f64,
    mismatch: f64,
    compute_ns: u64,
}

struct Sim<'a> {
    problem: &'a PartitionedProblem,
    params: AdmmParams,
    solver: SolverConfig,
    sampler: DelaySampler,
    fifo: bool,
    workers: Vec<Worker>,
    z: ZStore,
    stamps: Vec<(u64, u64)>,
    queue: BinaryHeap<Reverse<(u64, u64, Pending)>>,
    seq: u64,
    in_flight: Vec<Option<(usize, u64, Message)>>,
    link_clock: Vec<Vec<u64>>,
    events: Vec<Event>,
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: u64, what: Pending) {
        self.seq += 1;
        self.queue.push(Reverse((t, self.seq, what)));
    }

    fn start_compute(&mut self, k: usize, now: u64) -> Result<(), EngineError> {
        let problem = self.problem;
        let w = &mut self.workers[k];
        w.state.z = self.z.view(problem, k);
        let iter = w.state.local_iter + 1;
        self.events.push(Event::ComputeStart {
            worker: k,
            iter,
            t_ns: now,
            digest: payload_digest([w.state.z.as_slice()]),
        });
        let step = local_step(problem, &w.state, &self.params, &self.solver).map_err(|source| {
            EngineError::LocalSolve {
                worker: k,
                iter,
                source,
            }
        })?;
        w.step = Some(step);
        w.busy = true;
        w.started_ns = now;
        let delay = self.sampler.compute_ns(k);
        self.push(now + delay, Pending::ComputeDone(k));
        Ok(())
    }

    fn finish_compute(&mut self, k: usize, now: u64) {
        let problem = self.problem;
        let region = problem.region(k);
        let w = &mut self.workers[k];
        let step = w.step.take().expect("compute in flight");
        w.busy = false;
        w.compute_ns += now - w.started_ns;
        w.state.local_iter += 1;
        let iter = w.state.local_iter;
        w.gamma = residue_from_parts(&step.ax, &w.state.z, &w.snap_prev).unwrap_or(f64::INFINITY);
        w.snap_prev = w.state.z.clone();
        w.mismatch = region.constraint_violation(&step.x);
        w.state.x = step.x;
        w.state.lambda = step.lambda;
        w.state.warm = Some(step.warm);
        w.ax = step.ax;
        self.events.push(Event::ComputeEnd {
            worker: k,
            iter,
            t_ns: now,
            x: w.state.x.as_slice().to_vec(),
            lambda: w.state.lambda.as_slice().to_vec(),
            digest: payload_digest([w.state.x.as_slice(), w.state.lambda.as_slice()]),
        });
        for nb in problem.neighbors(k) {
            let l = nb.neighbor;
            let w = &self.workers[k];
            let ax = rows_of(&w.ax, &nb.rows);
            let lambda = rows_of(&w.state.lambda, &nb.rows);
            let delay = self.sampler.link_ns(k, l);
            let arrives = (now + delay).max(self.link_clock[k][l]);
            self.link_clock[k][l] = arrives;
            let id = self.in_flight.len() as u64;
            let digest = payload_digest([ax.as_slice(), lambda.as_slice()]);
            self.events.push(Event::Send {
                worker: k,
                iter,
                t_ns: now,
                msg: MessageRecord {
                    id,
                    to: l,
                    edge: nb.edge,
                    sent_ns: now,
                    arrives_ns: arrives,
                    ax: ax.as_slice().to_vec(),
                    lambda: lambda.as_slice().to_vec(),
                },
                digest,
            });
            let msg = Message {
                id,
                from: k,
                edge: nb.edge,
                iter,
                ax,
                lambda,
            };
            self.in_flight.push(Some((l, arrives, msg)));
            self.push(arrives, Pending::Arrival(id));
        }
    }

    fn deliver(&mut self, id: u64, now: u64) -> usize {
        let (to, _, msg) = self.in_flight[id as usize].take().expect("message delivered once");
        let slot = self
            .problem
            .neighbors(to)
            .iter()
            .position(|nb| nb.neighbor == msg.from)
            .expect("sender is a neighbor");
        self.events.push(Event::Receive {
            worker: to,
            iter: self.workers[to].state.local_iter,
            t_ns: now,
            msg_id: msg.id,
            from: msg.from,
            digest: payload_digest([msg.ax.as_slice(), msg.lambda.as_slice()]),
        });
        let inbox = &mut self.workers[to].inbox[slot];
        if !self.fifo {
            inbox.clear();
        }
        inbox.push_back(msg);
        to
    }

    fn ready(&self, k: usize) -> bool {
        let w = &self.workers[k];
        if w.busy {
            return false;
        }
        let fresh = w.inbox.iter().filter(|q| !q.is_empty()).count();
        ready_to_update(self.params.p, w.inbox.len(), fresh)
    }

    /// Consumes arrived messages, updates the matching z blocks and starts the
    /// next x-update.
    fn advance(&mut self, k: usize, now: u64) -> Result<(), EngineError> {
        let problem = self.problem;
        for (slot, nb) in problem.neighbors(k).iter().enumerate() {
            let Some(msg) = self.workers[k].inbox[slot].pop_front() else {
                continue;
            };
            let w = &self.workers[k];
            let own = (rows_of(&w.ax, &nb.rows), rows_of(&w.state.lambda, &nb.rows));
            let other = (msg.ax, msg.lambda);
            let edge = problem.edge(msg.edge);
            let own_iter = w.state.local_iter;
            let (stamp, low, high) = if edge.k == k {
                ((own_iter, msg.iter), (&own.0, &own.1), (&other.0, &other.1))
            } else {
                ((msg.iter, own_iter), (&other.0, &other.1), (&own.0, &own.1))
            };
            if self.stamps[msg.edge] == stamp {
                continue;
            }
            let z = edge_update(problem, msg.edge, low, high, self.z.block(msg.edge), &self.params)?;
            self.events.push(Event::ZUpdate {
                worker: k,
                iter: own_iter,
                t_ns: now,
                edge: msg.edge,
                stamp,
                z: z.as_slice().to_vec(),
                digest: payload_digest([z.as_slice()]),
            });
            self.z.set_block(msg.edge, z);
            self.stamps[msg.edge] = stamp;
        }
        self.start_compute(k, now)
    }

    fn global_residue(&self) -> (f64, f64) {
        let gamma = self.workers.iter().map(|w| w.gamma).fold(0.0, f64::max);
        let mismatch = self.workers.iter().map(|w| w.mismatch).fold(0.0, f64::max);
        (gamma, mismatch)
    }

    fn objective(&self) -> f64 {
        self.workers
            .iter()
            .enumerate()
            .map(|(k, w)| self.problem.region(k).objective.value(&w.state.x))
            .sum()
    }

    fn xs(&self) -> Vec<DVector<f64>> {
        self.workers.iter().map(|w| w.state.x.clone()).collect()
    }
}

/// Runs the asynchronous algorithm from `x0` (z⁰ is the edge average of
/// `A x⁰`, λ⁰ = 0). With `p = 1` every worker consumes exactly one message
/// per neighbor per iteration, in send order, which reproduces lockstep
/// synchronous ADMM whatever the delays.
pub fn run(
    problem: &PartitionedProblem,
    x0: &[DVector<f64>],
    params: &AdmmParams,
    delays: &DelayModel,
    stop: &StoppingRule,
    solver: &SolverConfig,
) -> Result<RunOutcome, EngineError> {
    check_inputs(problem, x0, params, stop, solver)?;
    delays.validate()?;
    let wall = Instant::now();
    let n = problem.num_regions();
    let z = ZStore::averaged(problem, x0);
    let header = trace_header(problem, params, delays.seed, x0, &z);
    let workers = (0..n)
        .map(|k| {
            let state = WorkerState::initial(problem, k, x0[k].clone(), &z);
            let ax = &problem.region(k).boundary_map * &state.x;
            Worker {
                snap_prev: state.z.clone(),
                state,
                busy: false,
                step: None,
                started_ns: 0,
                inbox: vec![VecDeque::new(); problem.neighbors(k).len()],
                ax,
                gamma: f64::INFINITY,
                mismatch: f64::INFINITY,
                compute_ns: 0,
            }
        })
        .collect();
    let mut sim = Sim {
        problem,
        params: *params,
        solver: *solver,
        sampler: DelaySampler::new(delays, n),
        fifo: params.p >= 1.0,
        workers,
        stamps: vec![(0, 0); problem.edges().len()],
        z,
        queue: BinaryHeap::new(),
        seq: 0,
        in_flight: Vec::new(),
        link_clock: vec![vec![0; n]; n],
        events: Vec::new(),
    };

    let cap_ns = stop.max_time_ms.map(|ms| (ms * 1e6).round() as u64);
    let update_cap = stop.max_iters.saturating_mul(n as u64);
    let mut rows = Vec::new();
    let mut best: Option<(f64, Vec<DVector<f64>>)> = None;
    let mut completed: u64 = 0;
    let mut last_min_iter = 0;
    let mut now = 0;
    let mut status = None;
    let min_updates = StoppingRule::min_updates(problem);

    for k in 0..n {
        if let Err(e) = sim.start_compute(k, 0) {
            status = Some(failure(e));
            break;
        }
    }
    while status.is_none() {
        let Some(Reverse((t, _, what))) = sim.queue.pop() else {
            status = Some(RunStatus::IterationCap);
            break;
        };
        if cap_ns.is_some_and(|cap| t > cap) {
            status = Some(RunStatus::TimeCap);
            break;
        }
        now = t;
        let woken = match what {
            Pending::ComputeDone(k) => {
                sim.finish_compute(k, now);
                completed += 1;
                let min_iter = sim.workers.iter().map(|w| w.state.local_iter).min().unwrap_or(0);
                let (gamma, mismatch) = sim.global_residue();
                if min_iter > last_min_iter {
                    last_min_iter = min_iter;
                    rows.push(ResultRow {
                        iter: min_iter,
                        time_ms: now as f64 / 1e6,
                        max_residue: gamma,
                        objective: sim.objective(),
                        constraint_mismatch: mismatch,
                    });
                }
                if min_iter >= min_updates {
                    let score = gamma.max(mismatch);
                    if best.as_ref().map_or(true, |(s, _)| score < *s) {
                        best = Some((score, sim.xs()));
                    }
                    if stop.holds(gamma, mismatch) {
                        status = Some(RunStatus::Converged);
                        break;
                    }
                }
                if completed >= update_cap {
                    status = Some(RunStatus::IterationCap);
                    break;
                }
                k
            }
            Pending::Arrival(id) => sim.deliver(id, now),
        };
        if sim.ready(woken) {
            if let Err(e) = sim.advance(woken, now) {
                status = Some(failure(e));
            }
        }
    }
    let status = status.expect("loop ends with a status");
    log::info!(
        "run finished: {} after {} updates, virtual time {:.3} ms",
        status.label(),
        completed,
        now as f64 / 1e6
    );

    let (gamma, mismatch) = sim.global_residue();
    let objective = sim.objective();
    let solution = match (&status, best) {
        (RunStatus::Converged, _) | (_, None) => sim.xs(),
        (_, Some((_, xs))) => xs,
    };
    let timing = time_accounting(&sim, now, wall.elapsed().as_secs_f64() * 1e3);
    let states: Vec<WorkerState> = sim.workers.iter().map(|w| w.state.clone()).collect();
    let footer = TraceFooter {
        events: sim.events.len(),
        status: status.label().to_string(),
        end_ns: now,
        final_states: states.iter().map(final_state).collect(),
        z: sim.z.blocks().iter().map(|b| b.as_slice().to_vec()).collect(),
    };
    Ok(RunOutcome {
        status,
        trace: EventTrace {
            header,
            events: sim.events,
            footer: Some(footer),
        },
        rows,
        states,
        z: sim.z,
        solution,
        max_residue: gamma,
        constraint_mismatch: mismatch,
        objective,
        timing,
    })
}

fn failure(e: EngineError) -> RunStatus {
    match e {
        EngineError::LocalSolve { worker, .. } => RunStatus::SolverFailure {
            worker,
            message: e.to_string(),
        },
        other => RunStatus::SolverFailure {
            worker: usize::MAX,
            message: other.to_string(),
        },
    }
}

pub(crate) fn final_state(s: &WorkerState) -> FinalState {
    FinalState {
        worker: s.region_index,
        local_iter: s.local_iter,
        x: s.x.as_slice().to_vec(),
        lambda: s.lambda.as_slice().to_vec(),
        mu: s.warm.as_ref().map(|w| w.multipliers.clone()).unwrap_or_default(),
    }
}

fn time_accounting(sim: &Sim<'_>, end_ns: u64, wall_ms: f64) -> TimeAccounting {
    let end_ms = end_ns as f64 / 1e6;
    let workers: Vec<WorkerTime> = sim
        .workers
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let mut compute = w.compute_ns;
            if w.busy {
                compute += end_ns.saturating_sub(w.started_ns);
            }
            let compute_ms = compute as f64 / 1e6;
            let wait_ms = (end_ms - compute_ms).max(0.0);
            WorkerTime {
                worker: k,
                updates: w.state.local_iter,
                compute_ms,
                wait_ms,
                wait_fraction: if end_ms > 0.0 { wait_ms / end_ms } else { 0.0 },
            }
        })
        .collect();
    let average_wait_fraction = if workers.is_empty() {
        0.0
    } else {
        workers.iter().map(|w| w.wait_fraction).sum::<f64>() / workers.len() as f64
    };
    TimeAccounting {
        virtual_ms: end_ms,
        wall_ms,
        workers,
        average_wait_fraction,
    }
}
