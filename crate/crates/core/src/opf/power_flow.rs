//! AC power-flow equations and a polar Newton-Raphson solver.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use super::build::NetworkPoint;
use super::case::{BusType, CaseError, OpfCase};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("Newton power flow did not converge in {iterations} iterations (mismatch {mismatch:.3e})")]
    NotConverged { iterations: usize, mismatch: f64 },
    #[error("singular power-flow Jacobian at iteration {0}")]
    Singular(usize),
}

/// Per-bus mismatch `(P_i + jQ_i) − S_i^load − V_i (Y V)_i^*` in p.u.:
/// real parts for every bus followed by imaginary parts.
pub fn power_flow_residual(
    case: &OpfCase,
    voltage: &[Complex<f64>],
    p: &[f64],
    q: &[f64],
) -> DVector<f64> {
    let n = case.buses.len();
    let y = case.ybus();
    let v = DVector::from_column_slice(voltage);
    let current = &y * &v;
    let mut out = DVector::zeros(2 * n);
    for i in 0..n {
        let s = v[i] * current[i].conj();
        let load = Complex::new(case.buses[i].pd, case.buses[i].qd) / case.base_mva;
        let mismatch = Complex::new(p[i], q[i]) - load - s;
        out[i] = mismatch.re;
        out[n + i] = mismatch.im;
    }
    out
}

/// Solved operating point; generator outputs in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PowerFlowSolution {
    pub fn to_network_point(&self) -> NetworkPoint {
        NetworkPoint {
            voltage: self
                .vm
                .iter()
                .zip(&self.va)
                .map(|(&m, &a)| Complex::from_polar(m, a))
                .collect(),
            pg: self.pg.clone(),
            qg: self.qg.clone(),
        }
    }
}

/// Newton-Raphson from a flat start. The reference angle is 0; PV and
/// reference magnitudes come from the first generator's setpoint; generator
/// active outputs are taken from the case, with the reference bus absorbing
/// the balance.
pub fn solve_newton(case: &OpfCase, tol: f64, max_iters: usize) -> Result<PowerFlowSolution, PowerFlowError> {
    case.validate()?;
    let n = case.buses.len();
    let base = case.base_mva;
    let y = case.ybus();
    let gens_by_bus = case.generators_by_bus();
    let kind: Vec<BusType> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| match b.kind {
            BusType::Pv if gens_by_bus[i].is_empty() => BusType::Pq,
            k => k,
        })
        .collect();
    let mut vm: Vec<f64> = (0..n)
        .map(|i| match kind[i] {
            BusType::Pq => 1.0,
            _ => gens_by_bus[i]
                .first()
                .map(|&g| case.generators[g].vg)
                .unwrap_or(case.buses[i].vm),
        })
        .collect();
    let mut va = vec![0.0; n];
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for i in 0..n {
        let pg: f64 = gens_by_bus[i].iter().map(|&g| case.generators[g].pg).sum();
        let qg: f64 = gens_by_bus[i].iter().map(|&g| case.generators[g].qg).sum();
        p_spec[i] = (pg - case.buses[i].pd) / base;
        q_spec[i] = (qg - case.buses[i].qd) / base;
    }
    let pvpq: Vec<usize> = (0..n).filter(|&i| kind[i] != BusType::Ref).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kind[i] == BusType::Pq).collect();
    let dim = pvpq.len() + pq.len();

    let power = |vm: &[f64], va: &[f64]| {
        let v = DVector::from_iterator(n, (0..n).map(|i| Complex::from_polar(vm[i], va[i])));
        let current = &y * &v;
        let s = DVector::from_iterator(n, (0..n).map(|i| v[i] * current[i].conj()));
        (v, current, s)
    };
    let mismatch_of = |s: &DVector<Complex<f64>>| {
        let mut f = DVector::zeros(dim);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - p_spec[i];
        }
        for (r, &i) in pq.iter().enumerate() {
            f[pvpq.len() + r] = s[i].im - q_spec[i];
        }
        f
    };

    let mut iterations = 0;
    let (mut v, mut current, mut s) = power(&vm, &va);
    let mut f = mismatch_of(&s);
    while f.amax() > tol {
        if iterations >= max_iters {
            return Err(PowerFlowError::NotConverged {
                iterations,
                mismatch: f.amax(),
            });
        }
        iterations += 1;
        let vnorm = DVector::from_iterator(n, v.iter().map(|x| x / x.norm()));
        let diag_v = DMatrix::from_diagonal(&v);
        let diag_i = DMatrix::from_diagonal(&current);
        let diag_vn = DMatrix::from_diagonal(&vnorm);
        let ds_dvm = &diag_v * (&y * &diag_vn).map(|c| c.conj()) + diag_i.map(|c| c.conj()) * &diag_vn;
        let ds_dva = (&diag_v * (&diag_i - &y * &diag_v).map(|c| c.conj())) * Complex::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(dim, dim);
        for (r, &i) in pvpq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(r, c)] = ds_dva[(i, j)].re;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(r, pvpq.len() + c)] = ds_dvm[(i, j)].re;
            }
        }
        for (r, &i) in pq.iter().enumerate() {
            for (c, &j) in pvpq.iter().enumerate() {
                jac[(pvpq.len() + r, c)] = ds_dva[(i, j)].im;
            }
            for (c, &j) in pq.iter().enumerate() {
                jac[(pvpq.len() + r, pvpq.len() + c)] = ds_dvm[(i, j)].im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-&f))
            .ok_or(PowerFlowError::Singular(iterations))?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] += dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] += dx[pvpq.len() + r];
        }
        (v, current, s) = power(&vm, &va);
        f = mismatch_of(&s);
    }

    let mut pg: Vec<f64> = case.generators.iter().map(|g| g.pg / base).collect();
    let mut qg: Vec<f64> = case.generators.iter().map(|g| g.qg / base).collect();
    for i in 0..n {
        let Some((&first, rest)) = gens_by_bus[i].split_first() else {
            continue;
        };
        let load_p = case.buses[i].pd / base;
        let load_q = case.buses[i].qd / base;
        let others_p: f64 = rest.iter().map(|&g| pg[g]).sum();
        let others_q: f64 = rest.iter().map(|&g| qg[g]).sum();
        if kind[i] == BusType::Ref {
            pg[first] = s[i].re + load_p - others_p;
        }
        if kind[i] != BusType::Pq {
            qg[first] = s[i].im + load_q - others_q;
        }
    }
    Ok(PowerFlowSolution {
        vm,
        va,
        pg,
        qg,
        iterations,
        mismatch: f.amax(),
    })
}
