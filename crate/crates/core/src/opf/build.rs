//! Compiles a case plus partition into a [`PartitionedProblem`] in rectangular
//! voltage coordinates.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use super::case::{CaseError, OpfCase};
use super::partition::{Partition, PartitionError};
use super::power_flow::PowerFlowSolution;
use crate::problem::{
    CouplingEdge, PartitionedProblem, ProblemError, RegionSpec, SmoothConstraints,
    SmoothObjective,
};

pub const DEFAULT_BETA_MINUS: f64 = 2.0;
pub const DEFAULT_BETA_PLUS: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("boundary scaling must be positive and finite (beta_minus={0}, beta_plus={1})")]
    BadBeta(f64, f64),
}

/// Where one region keeps its variables.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLayout {
    /// Owned bus positions in case order.
    pub own_buses: Vec<usize>,
    /// Foreign tie-line endpoints duplicated into this region.
    pub copies: Vec<usize>,
    /// Generator positions located at owned buses.
    pub generators: Vec<usize>,
    /// `(e, f)` variable positions of every owned or copied bus.
    pub voltage: BTreeMap<usize, (usize, usize)>,
    /// Magnitude slack `w = e² + f²` of each owned bus.
    pub magnitude: BTreeMap<usize, usize>,
    /// `(P, Q)` variable positions of each listed generator.
    pub dispatch: BTreeMap<usize, (usize, usize)>,
    pub dim: usize,
}

/// Tie lines per coupling edge, in the row order used by both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLayout {
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub edge_tie_lines: Vec<Vec<usize>>,
}

/// A compiled OPF instance.
#[derive(Debug, Clone)]
pub struct OpfProblem {
    pub case: OpfCase,
    pub partition: Partition,
    pub problem: PartitionedProblem,
    pub layouts: Vec<RegionLayout>,
    pub boundary: BoundaryLayout,
}

/// Reassembled network point in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPoint {
    pub voltage: Vec<Complex<f64>>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

struct CostObjective {
    /// `(P variable, a·base², b·base, c)` per generator.
    terms: Vec<(usize, f64, f64, f64)>,
}

impl SmoothObjective for CostObjective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .map(|&(i, a, b, c)| a * x[i] * x[i] + b * x[i] + c)
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        for &(i, a, b, _) in &self.terms {
            g[i] += 2.0 * a * x[i] + b;
        }
        g
    }
}

struct BusBalance {
    e: usize,
    f: usize,
    w: usize,
    pd: f64,
    qd: f64,
    gens: Vec<(usize, usize)>,
    /// `(e_j, f_j, G_ij, B_ij)` over the admittance row, diagonal included.
    terms: Vec<(usize, usize, f64, f64)>,
}

struct BalanceConstraints {
    rows: Vec<BusBalance>,
}

impl BusBalance {
    fn currents(&self, x: &DVector<f64>) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for &(ej, fj, g, bb) in &self.terms {
            a += g * x[ej] - bb * x[fj];
            b += g * x[fj] + bb * x[ej];
        }
        (a, b)
    }
}

impl SmoothConstraints for BalanceConstraints {
    fn len(&self) -> usize {
        3 * self.rows.len()
    }

    fn values(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for (r, row) in self.rows.iter().enumerate() {
            let (a, b) = row.currents(x);
            let (ei, fi) = (x[row.e], x[row.f]);
            let p = ei * a + fi * b;
            let q = fi * a - ei * b;
            let pg: f64 = row.gens.iter().map(|&(pi, _)| x[pi]).sum();
            let qg: f64 = row.gens.iter().map(|&(_, qi)| x[qi]).sum();
            out[3 * r] = pg - row.pd - p;
            out[3 * r + 1] = qg - row.qd - q;
            out[3 * r + 2] = ei * ei + fi * fi - x[row.w];
        }
        out
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.len(), x.len());
        for (r, row) in self.rows.iter().enumerate() {
            let (a, b) = row.currents(x);
            let (ei, fi) = (x[row.e], x[row.f]);
            let (rp, rq, rv) = (3 * r, 3 * r + 1, 3 * r + 2);
            for &(ej, fj, g, bb) in &row.terms {
                jac[(rp, ej)] -= ei * g + fi * bb;
                jac[(rp, fj)] -= -ei * bb + fi * g;
                jac[(rq, ej)] -= fi * g - ei * bb;
                jac[(rq, fj)] -= -fi * bb - ei * g;
            }
            jac[(rp, row.e)] -= a;
            jac[(rp, row.f)] -= b;
            jac[(rq, row.e)] += b;
            jac[(rq, row.f)] -= a;
            for &(pi, qi) in &row.gens {
                jac[(rp, pi)] += 1.0;
                jac[(rq, qi)] += 1.0;
            }
            jac[(rv, row.e)] = 2.0 * ei;
            jac[(rv, row.f)] = 2.0 * fi;
            jac[(rv, row.w)] = -1.0;
        }
        jac
    }
}

/// Builds one region per partition part. Each region enforces power balance
/// and the magnitude identity at its own buses; tie-line flows use the
/// duplicated foreign voltages. Boundary rows per tie line `(i, j)` are
/// `β⁻(V_i − V_j)` and `β⁺(V_i + V_j)`, real then imaginary parts.
pub fn build_regional_subproblems(
    case: &OpfCase,
    partition: &Partition,
    beta_minus: f64,
    beta_plus: f64,
) -> Result<OpfProblem, BuildError> {
    if !(beta_minus > 0.0 && beta_plus > 0.0 && beta_minus.is_finite() && beta_plus.is_finite()) {
        return Err(BuildError::BadBeta(beta_minus, beta_plus));
    }
    if beta_minus <= beta_plus {
        log::warn!(
            "beta_minus ({beta_minus}) should exceed beta_plus ({beta_plus}) for the difference rows to dominate"
        );
    }
    case.validate()?;
    let partition = Partition::new(case, partition.regions().to_vec())?;
    let index = case.bus_index();
    let region_of_pos: Vec<usize> = case
        .buses
        .iter()
        .map(|b| partition.region_of(b.id).expect("validated partition"))
        .collect();
    let k_total = partition.num_regions();
    let ybus = case.ybus();
    let gens_by_bus = case.generators_by_bus();
    let reference = case.reference_bus().expect("validated case");
    let base = case.base_mva;

    let tie_lines = partition.tie_lines(case);
    let mut by_pair: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for &t in &tie_lines {
        let br = &case.branches[t];
        let ri = region_of_pos[index[&br.from]];
        let rj = region_of_pos[index[&br.to]];
        by_pair.entry((ri.min(rj), ri.max(rj))).or_default().push(t);
    }

    let mut layouts = Vec::with_capacity(k_total);
    let mut regions = Vec::with_capacity(k_total);
    for k in 0..k_total {
        let own: Vec<usize> = (0..case.buses.len()).filter(|&i| region_of_pos[i] == k).collect();
        let mut copies: Vec<usize> = Vec::new();
        for &t in &tie_lines {
            let br = &case.branches[t];
            let (i, j) = (index[&br.from], index[&br.to]);
            for (mine, other) in [(i, j), (j, i)] {
                if region_of_pos[mine] == k && !copies.contains(&other) {
                    copies.push(other);
                }
            }
        }
        copies.sort_unstable();
        let generators: Vec<usize> = own.iter().flat_map(|&i| gens_by_bus[i].iter().copied()).collect();

        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut voltage = BTreeMap::new();
        let mut magnitude = BTreeMap::new();
        let mut dispatch = BTreeMap::new();
        let mut push = |lo: f64, hi: f64| {
            lower.push(lo);
            upper.push(hi);
            lower.len() - 1
        };
        let voltage_box = |i: usize| {
            let b = &case.buses[i];
            let f_hi = if i == reference { 0.0 } else { b.vmax };
            let mid = 0.5 * (b.vmin + b.vmax);
            ((0.5 * mid, 1.5 * mid), (-f_hi, f_hi))
        };
        for &i in &own {
            let ((elo, ehi), (flo, fhi)) = voltage_box(i);
            let e = push(elo, ehi);
            let f = push(flo, fhi);
            let b = &case.buses[i];
            let w = push(b.vmin * b.vmin, b.vmax * b.vmax);
            voltage.insert(i, (e, f));
            magnitude.insert(i, w);
        }
        for &g in &generators {
            let gen = &case.generators[g];
            let p = push(gen.pmin / base, gen.pmax / base);
            let q = push(gen.qmin / base, gen.qmax / base);
            dispatch.insert(g, (p, q));
        }
        for &i in &copies {
            let ((elo, ehi), (flo, fhi)) = voltage_box(i);
            let e = push(elo, ehi);
            let f = push(flo, fhi);
            voltage.insert(i, (e, f));
        }
        let dim = lower.len();

        let rows = own
            .iter()
            .map(|&i| {
                let (e, f) = voltage[&i];
                let terms = (0..case.buses.len())
                    .filter(|&j| ybus[(i, j)] != Complex::new(0.0, 0.0))
                    .map(|j| {
                        let (ej, fj) = voltage[&j];
                        (ej, fj, ybus[(i, j)].re, ybus[(i, j)].im)
                    })
                    .collect();
                BusBalance {
                    e,
                    f,
                    w: magnitude[&i],
                    pd: case.buses[i].pd / base,
                    qd: case.buses[i].qd / base,
                    gens: gens_by_bus[i].iter().map(|g| dispatch[g]).collect(),
                    terms,
                }
            })
            .collect();
        let objective = CostObjective {
            terms: generators
                .iter()
                .map(|&g| {
                    let c = case.generators[g].cost;
                    (dispatch[&g].0, c.a * base * base, c.b * base, c.c)
                })
                .collect(),
        };

        let rows_total: usize = by_pair
            .iter()
            .filter(|((a, b), _)| *a == k || *b == k)
            .map(|(_, lines)| 4 * lines.len())
            .sum();
        let mut a = DMatrix::zeros(rows_total, dim);
        let mut row = 0;
        for ((ra, rb), lines) in &by_pair {
            if *ra != k && *rb != k {
                continue;
            }
            for &t in lines {
                let br = &case.branches[t];
                let (ei, fi) = voltage[&index[&br.from]];
                let (ej, fj) = voltage[&index[&br.to]];
                a[(row, ei)] += beta_minus;
                a[(row, ej)] -= beta_minus;
                a[(row + 1, fi)] += beta_minus;
                a[(row + 1, fj)] -= beta_minus;
                a[(row + 2, ei)] += beta_plus;
                a[(row + 2, ej)] += beta_plus;
                a[(row + 3, fi)] += beta_plus;
                a[(row + 3, fj)] += beta_plus;
                row += 4;
            }
        }

        regions.push(RegionSpec {
            name: format!("region-{}", k + 1),
            dim_x: dim,
            objective: Arc::new(objective),
            lower: DVector::from_vec(lower),
            upper: DVector::from_vec(upper),
            constraints: Some(Arc::new(BalanceConstraints { rows })),
            boundary_map: a,
        });
        layouts.push(RegionLayout {
            own_buses: own,
            copies,
            generators,
            voltage,
            magnitude,
            dispatch,
            dim,
        });
    }

    // Rows of each region are ordered by neighbor, matching the loop above.
    let mut offsets = vec![0usize; k_total];
    let mut edges = Vec::new();
    let mut edge_tie_lines = Vec::new();
    for ((ra, rb), lines) in &by_pair {
        let len = 4 * lines.len();
        edges.push(CouplingEdge {
            k: *ra,
            l: *rb,
            block_k: offsets[*ra]..offsets[*ra] + len,
            block_l: offsets[*rb]..offsets[*rb] + len,
        });
        offsets[*ra] += len;
        offsets[*rb] += len;
        edge_tie_lines.push(lines.clone());
    }
    let problem = PartitionedProblem::new(regions, edges)?;
    Ok(OpfProblem {
        case: case.clone(),
        partition,
        problem,
        layouts,
        boundary: BoundaryLayout {
            beta_minus,
            beta_plus,
            edge_tie_lines,
        },
    })
}

impl OpfProblem {
    /// Region vectors at a network point; slacks use `|V|²` and every value
    /// is clamped into the region's box.
    pub fn point_from_network(&self, point: &NetworkPoint) -> Vec<DVector<f64>> {
        self.layouts
            .iter()
            .enumerate()
            .map(|(k, layout)| {
                let mut x = DVector::zeros(layout.dim);
                for (&i, &(e, f)) in &layout.voltage {
                    x[e] = point.voltage[i].re;
                    x[f] = point.voltage[i].im;
                }
                for (&i, &w) in &layout.magnitude {
                    x[w] = point.voltage[i].norm_sqr();
                }
                for (&g, &(p, q)) in &layout.dispatch {
                    x[p] = point.pg[g];
                    x[q] = point.qg[g];
                }
                self.problem.region(k).clamp_to_box(&x)
            })
            .collect()
    }

    /// Region vectors from a power-flow solution.
    pub fn warm_start(&self, pf: &PowerFlowSolution) -> Vec<DVector<f64>> {
        self.point_from_network(&pf.to_network_point())
    }

    /// Network point read from the owning region of every bus and generator.
    pub fn assemble(&self, xs: &[DVector<f64>]) -> NetworkPoint {
        let n = self.case.buses.len();
        let mut voltage = vec![Complex::new(0.0, 0.0); n];
        let mut pg = vec![0.0; self.case.generators.len()];
        let mut qg = vec![0.0; self.case.generators.len()];
        for (layout, x) in self.layouts.iter().zip(xs) {
            for &i in &layout.own_buses {
                let (e, f) = layout.voltage[&i];
                voltage[i] = Complex::new(x[e], x[f]);
            }
            for (&g, &(p, q)) in &layout.dispatch {
                pg[g] = x[p];
                qg[g] = x[q];
            }
        }
        NetworkPoint { voltage, pg, qg }
    }

    /// Generation cost of the assembled point.
    pub fn objective(&self, xs: &[DVector<f64>]) -> f64 {
        self.case.cost(&self.assemble(xs).pg)
    }
}
