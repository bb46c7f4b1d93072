//! Local solver for the x-subproblem: an augmented-Lagrangian outer loop on
//! the equality constraints with a projected Newton inner loop on the box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{clamp_box, RegionSpec};

const ARMIJO: f64 = 1e-4;
const STEP_MIN: f64 = 1e-20;
const FD_STEP: f64 = 1e-6;
const EIG_FLOOR: f64 = 1e-10;
const ACTIVE_EPS: f64 = 1e-3;
const PENALTY_MAX: f64 = 1e12;
const ROUNDING: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub constraint_tol: f64,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub inner_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            grad_tol: 1e-6,
            constraint_tol: 1e-6,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            inner_max_iters: 500,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidConfig(msg.to_string()));
        if self.max_iters == 0 || self.inner_max_iters == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.grad_tol > 0.0 && self.constraint_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.penalty_init > 0.0) {
            return bad("penalty_init must be positive");
        }
        if !(self.penalty_growth > 1.0) {
            return bad("penalty_growth must exceed 1");
        }
        Ok(())
    }
}

/// The ADMM term `λᵀA x + (ρ/2)‖A x − z‖²` added to the local objective.
#[derive(Debug, Clone, Copy)]
pub struct AugTerm<'a> {
    pub a: &'a DMatrix<f64>,
    pub lambda: &'a DVector<f64>,
    pub z: &'a DVector<f64>,
    pub rho: f64,
}

impl AugTerm<'_> {
    fn value_and_weight(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = self.a * x - self.z;
        let value = self.lambda.dot(&(self.a * x)) + 0.5 * self.rho * r.norm_squared();
        (value, self.lambda + r * self.rho)
    }
}

/// Multipliers and penalty carried between consecutive solves of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmStart {
    pub multipliers: Vec<f64>,
    pub penalty: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveDiagnostics {
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub constraint_violation: f64,
    pub projected_gradient: f64,
    /// Merit value at the start and end of each outer iteration.
    pub merit_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: DVector<f64>,
    pub warm: WarmStart,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error(
        "local solver did not converge after {iterations} outer iterations \
         (constraint violation {constraint_violation:.3e}, projected gradient {projected_gradient:.3e})"
    )]
    NotConverged {
        best: DVector<f64>,
        constraint_violation: f64,
        projected_gradient: f64,
        iterations: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("objective or constraints returned a non-finite value")]
    NonFinite,
}

/// `‖x − Π(x − g)‖_∞`.
pub fn projected_gradient_norm(
    x: &DVector<f64>,
    g: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let stepped = (x[i] - g[i]).max(lo[i]).min(hi[i]);
        m = m.max((x[i] - stepped).abs());
    }
    m
}

struct Merit<'a> {
    region: &'a RegionSpec,
    extra: Option<&'a AugTerm<'a>>,
    mu: DVector<f64>,
    penalty: f64,
}

impl Merit<'_> {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.region.objective.value(x);
        if let Some(t) = self.extra {
            v += t.value_and_weight(x).0;
        }
        if let Some(c) = &self.region.constraints {
            let h = c.values(x);
            v += self.mu.dot(&h) + 0.5 * self.penalty * h.norm_squared();
        }
        v
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.region.objective.gradient(x);
        if let Some(t) = self.extra {
            g += t.a.tr_mul(&t.value_and_weight(x).1);
        }
        if let Some(c) = &self.region.constraints {
            let h = c.values(x);
            let w = &self.mu + h * self.penalty;
            g += c.jacobian(x).tr_mul(&w);
        }
        g
    }

    /// Largest of the gradient terms that cancel at a stationary point, used
    /// to make the stationarity tolerance relative.
    fn gradient_scale(&self, x: &DVector<f64>) -> f64 {
        let mut s = self.region.objective.gradient(x).amax();
        if let Some(t) = self.extra {
            s = s.max(t.a.tr_mul(&t.value_and_weight(x).1).amax());
        }
        if let Some(c) = &self.region.constraints {
            let w = &self.mu + c.values(x) * self.penalty;
            s = s.max(c.jacobian(x).tr_mul(&w).amax());
        }
        s.max(1.0)
    }
}

struct InnerResult {
    x: DVector<f64>,
    value: f64,
    pg: f64,
    iters: usize,
}

/// Symmetric central-difference Hessian of the merit.
fn fd_hessian(merit: &Merit<'_>, x: &DVector<f64>) -> DMatrix<f64> {
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let step = FD_STEP * x[j].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let col = (merit.gradient(&xp) - merit.gradient(&xm)) / (2.0 * step);
        h.set_column(j, &col);
    }
    (&h + h.transpose()) * 0.5
}

/// Newton direction on the free coordinates with eigenvalues floored to keep
/// the model convex; ε-active coordinates get a diagonally scaled step.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>, free: &[usize]) -> DVector<f64> {
    let n = g.len();
    let scale = h.diagonal().amax().max(1.0);
    let floor = EIG_FLOOR * scale;
    let mut d = DVector::zeros(n);
    for i in 0..n {
        d[i] = -g[i] / h[(i, i)].max(floor);
    }
    if free.is_empty() {
        return d;
    }
    let m = free.len();
    let sub = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
    let eig = sub.symmetric_eigen();
    let gf = DVector::from_fn(m, |a, _| g[free[a]]);
    let coeffs = eig.eigenvectors.tr_mul(&gf);
    let scaled = DVector::from_fn(m, |a, _| coeffs[a] / eig.eigenvalues[a].abs().max(floor));
    let df = -(&eig.eigenvectors * scaled);
    for (a, &i) in free.iter().enumerate() {
        d[i] = df[a];
    }
    d
}

/// Two-metric projected Newton with a projected Armijo arc search
/// (Bertsekas, 1982). Iterates never increase the merit.
fn minimize_box(
    merit: &Merit<'_>,
    x0: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<InnerResult, SolveError> {
    let mut x = clamp_box(x0, lo, hi);
    let mut f = merit.value(&x);
    let mut g = merit.gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    let mut pg = projected_gradient_norm(&x, &g, lo, hi);
    let mut iters = 0;
    while iters < max_iters && pg > tol {
        iters += 1;
        let eps = pg.min(ACTIVE_EPS);
        let free: Vec<usize> = (0..x.len())
            .filter(|&i| {
                let at_lo = x[i] - lo[i] <= eps && g[i] > 0.0;
                let at_hi = hi[i] - x[i] <= eps && g[i] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();
        let hess = fd_hessian(merit, &x);
        let mut d = newton_direction(&hess, &g, &free);
        if g.dot(&d) >= 0.0 {
            d = -&g;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t >= STEP_MIN {
            let trial = clamp_box(&(&x + &d * t), lo, hi);
            let moved = &trial - &x;
            if moved.amax() == 0.0 {
                break;
            }
            let ft = merit.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * g.dot(&moved) {
                accepted = Some((trial, ft));
                break;
            }
            // Near a stationary point the merit change drowns in rounding;
            // a full step is then judged by the projected gradient instead.
            if t == 1.0 && ft.is_finite() && ft - f <= ROUNDING * f.abs().max(1.0) {
                let gt = merit.gradient(&trial);
                if projected_gradient_norm(&trial, &gt, lo, hi) < pg {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };
        let g_new = merit.gradient(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        x = x_new;
        f = f_new;
        g = g_new;
        pg = projected_gradient_norm(&x, &g, lo, hi);
    }
    Ok(InnerResult {
        x,
        value: f,
        pg,
        iters,
    })
}

/// Solves `min f(x) + extra(x)` over the region's box and equality
/// constraints, starting from `x_start` (clamped into the box).
pub fn solve_local(
    region: &RegionSpec,
    extra: Option<&AugTerm<'_>>,
    x_start: &DVector<f64>,
    config: &SolverConfig,
    warm: Option<&WarmStart>,
) -> Result<SolveOutput, SolveError> {
    config.validate()?;
    if x_start.len() != region.dim_x {
        return Err(SolveError::DimensionMismatch {
            expected: region.dim_x,
            found: x_start.len(),
        });
    }
    let m = region.num_constraints();
    let (mu0, c0) = match warm {
        Some(w) if w.multipliers.len() == m && w.penalty > 0.0 => {
            (DVector::from_column_slice(&w.multipliers), w.penalty)
        }
        _ => (DVector::zeros(m), config.penalty_init),
    };
    let mut merit = Merit {
        region,
        extra,
        mu: mu0,
        penalty: c0,
    };
    let lo = &region.lower;
    let hi = &region.upper;
    let mut x = region.clamp_to_box(x_start);
    let mut diagnostics = SolveDiagnostics::default();

    // Already stationary for the Lagrangian at the carried multipliers.
    let h0 = region.constraint_values(&x);
    let g0 = {
        let saved = merit.penalty;
        merit.penalty = 0.0;
        let g = merit.gradient(&x);
        merit.penalty = saved;
        g
    };
    let pg0 = projected_gradient_norm(&x, &g0, lo, hi);
    let hv0 = h0.amax();
    diagnostics.constraint_violation = hv0;
    diagnostics.projected_gradient = pg0;
    if hv0 <= config.constraint_tol && pg0 <= config.grad_tol * merit.gradient_scale(&x) {
        return Ok(SolveOutput {
            x,
            warm: WarmStart {
                multipliers: merit.mu.as_slice().to_vec(),
                penalty: merit.penalty,
            },
            diagnostics,
        });
    }

    let mut prev_violation = hv0;
    for outer in 1..=config.max_iters {
        let start_merit = merit.value(&x);
        let tol = config.grad_tol * merit.gradient_scale(&x);
        let inner = minimize_box(&merit, &x, lo, hi, tol, config.inner_max_iters)?;
        x = inner.x;
        diagnostics.merit_history.push((start_merit, inner.value));
        diagnostics.outer_iters = outer;
        diagnostics.inner_iters += inner.iters;
        let h = region.constraint_values(&x);
        let violation = h.amax();
        log::trace!(
            "outer {outer}: penalty {:e}, violation {violation:e}, projected gradient {:e}, {} inner steps",
            merit.penalty,
            inner.pg,
            inner.iters
        );
        if m > 0 {
            // ∇Φ at (μ, c) equals ∇L at the updated multipliers.
            merit.mu += &h * merit.penalty;
        }
        diagnostics.constraint_violation = violation;
        diagnostics.projected_gradient = inner.pg;
        if violation <= config.constraint_tol && inner.pg <= config.grad_tol * merit.gradient_scale(&x) {
            return Ok(SolveOutput {
                x,
                warm: WarmStart {
                    multipliers: merit.mu.as_slice().to_vec(),
                    penalty: merit.penalty,
                },
                diagnostics,
            });
        }
        if m == 0 && inner.iters < config.inner_max_iters {
            // Stalled line search on an unconstrained problem: more outer
            // iterations cannot help.
            break;
        }
        if violation > config.constraint_tol && violation > 0.25 * prev_violation {
            merit.penalty = (merit.penalty * config.penalty_growth).min(PENALTY_MAX);
        }
        prev_violation = violation;
    }
    Err(SolveError::NotConverged {
        best: x,
        constraint_violation: diagnostics.constraint_violation,
        projected_gradient: diagnostics.projected_gradient,
        iterations: diagnostics.outer_iters,
    })
}
