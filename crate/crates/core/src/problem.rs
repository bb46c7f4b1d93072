//! Partitioned non-convex problem: `min Σ_k f_k(x_k)` subject to
//! `x_k ∈ X_k`, `A_k x_k = z_k` and `z_{k,l} = z_{l,k}` on every coupling edge.
//!
//! The feasible set `X_k` is a box plus smooth equality constraints. Its
//! indicator function is never evaluated; feasibility is a separate query.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Errors raised while constructing or evaluating a problem.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("region {region}: lower bound exceeds upper bound at coordinate {index}")]
    InvalidBounds { region: usize, index: usize },
    #[error("invalid coupling edge ({k},{l}): {reason}")]
    InvalidEdge { k: usize, l: usize, reason: String },
    #[error("region {region}: {reason}")]
    InvalidRegion { region: usize, reason: String },
    #[error("{0}")]
    InvalidArgument(String),
}

/// A smooth scalar objective with its gradient.
pub trait SmoothObjective: Send + Sync {
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// A smooth vector map `h(x)` with its Jacobian; the feasible set uses `h(x) = 0`.
pub trait SmoothConstraints: Send + Sync {
    fn len(&self) -> usize;
    fn values(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// Objective assembled from a pair of closures.
pub struct FnObjective {
    value: Box<ValueFn>,
    gradient: Box<GradFn>,
}

impl FnObjective {
    pub fn new<V, G>(value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            value: Box::new(value),
            gradient: Box::new(gradient),
        }
    }
}

impl SmoothObjective for FnObjective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }
}

/// Separable quadratic `Σ_i w_i (x_i - c_i)^2`.
#[derive(Debug, Clone)]
pub struct SeparableQuadratic {
    pub weights: DVector<f64>,
    pub targets: DVector<f64>,
}

impl SmoothObjective for SeparableQuadratic {
    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter()
            .zip(self.targets.iter())
            .zip(self.weights.iter())
            .map(|((xi, ci), wi)| wi * (xi - ci) * (xi - ci))
            .sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.targets.iter())
                .zip(self.weights.iter())
                .map(|((xi, ci), wi)| 2.0 * wi * (xi - ci)),
        )
    }
}

/// Rows of `A_k` that map onto the z-block shared with one neighbor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborBlock {
    pub neighbor: usize,
    pub edge: usize,
    pub rows: Range<usize>,
}

/// One region of the partitioned problem.
#[derive(Clone)]
pub struct RegionSpec {
    pub name: String,
    pub dim_x: usize,
    pub objective: Arc<dyn SmoothObjective>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub constraints: Option<Arc<dyn SmoothConstraints>>,
    pub boundary_map: DMatrix<f64>,
}

impl fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionSpec")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x)
            .field("lower", &self.lower.as_slice())
            .field("upper", &self.upper.as_slice())
            .field("num_constraints", &self.num_constraints())
            .field("boundary_rows", &self.boundary_map.nrows())
            .finish()
    }
}

impl RegionSpec {
    pub fn num_constraints(&self) -> usize {
        self.constraints.as_ref().map_or(0, |c| c.len())
    }

    pub fn boundary_rows(&self) -> usize {
        self.boundary_map.nrows()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), ProblemError> {
        if x.len() != self.dim_x {
            return Err(ProblemError::DimensionMismatch {
                expected: self.dim_x,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Equality constraint values, empty when the region has none.
    pub fn constraint_values(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.constraints {
            Some(c) => c.values(x),
            None => DVector::zeros(0),
        }
    }

    /// Max-abs equality violation (0 when unconstrained).
    pub fn constraint_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraint_values(x).amax()
    }

    /// Box membership plus equality constraints within `tol`.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim_x {
            return false;
        }
        let in_box = x
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi);
        in_box && self.constraint_violation(x) <= tol
    }

    pub fn clamp_to_box(&self, x: &DVector<f64>) -> DVector<f64> {
        clamp_box(x, &self.lower, &self.upper)
    }

    /// Midpoint of the bounds per coordinate; unbounded coordinates get 0,
    /// half-bounded ones get 0 clamped into the box.
    pub fn flat_start(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim_x,
            self.lower.iter().zip(self.upper.iter()).map(|(&lo, &hi)| {
                if lo.is_finite() && hi.is_finite() {
                    0.5 * (lo + hi)
                } else {
                    0.0_f64.clamp(lo, hi)
                }
            }),
        )
    }
}

pub(crate) fn clamp_box(x: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(lo.iter().zip(hi.iter()))
            .map(|(v, (l, h))| v.max(*l).min(*h)),
    )
}

/// `f_k(x)`; the indicator of `X_k` is not added.
pub fn evaluate_objective(region: &RegionSpec, x: &DVector<f64>) -> Result<f64, ProblemError> {
    region.check_dim(x)?;
    Ok(region.objective.value(x))
}

/// `A_k x`.
pub fn evaluate_boundary_map(
    region: &RegionSpec,
    x: &DVector<f64>,
) -> Result<DVector<f64>, ProblemError> {
    region.check_dim(x)?;
    Ok(&region.boundary_map * x)
}

/// A coupling edge between regions `k < l`. `block_k` and `block_l` are the
/// row ranges of `A_k` and `A_l` that map onto the shared z-block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CouplingEdge {
    pub k: usize,
    pub l: usize,
    pub block_k: Range<usize>,
    pub block_l: Range<usize>,
}

impl CouplingEdge {
    pub fn dim(&self) -> usize {
        self.block_k.len()
    }

    pub fn other(&self, region: usize) -> usize {
        if region == self.k {
            self.l
        } else {
            self.k
        }
    }

    /// Row range of `A_region` for this edge.
    pub fn rows_of(&self, region: usize) -> Range<usize> {
        if region == self.k {
            self.block_k.clone()
        } else {
            self.block_l.clone()
        }
    }
}

/// Regions (indexed `0..K`) and the edges coupling them. Immutable once built.
#[derive(Debug, Clone)]
pub struct PartitionedProblem {
    regions: Vec<RegionSpec>,
    edges: Vec<CouplingEdge>,
    neighbor_blocks: Vec<Vec<NeighborBlock>>,
    boundary_dim: usize,
}

impl PartitionedProblem {
    /// Validates the structural invariants: each unordered pair appears once
    /// with `k < l`, block sizes match, and every boundary row of every region
    /// is covered by exactly one edge.
    pub fn new(regions: Vec<RegionSpec>, edges: Vec<CouplingEdge>) -> Result<Self, ProblemError> {
        let n = regions.len();
        for (r, region) in regions.iter().enumerate() {
            if region.lower.len() != region.dim_x || region.upper.len() != region.dim_x {
                return Err(ProblemError::InvalidRegion {
                    region: r,
                    reason: "bound vectors do not match dim_x".into(),
                });
            }
            if region.boundary_map.ncols() != region.dim_x {
                return Err(ProblemError::InvalidRegion {
                    region: r,
                    reason: format!(
                        "boundary map has {} columns, dim_x is {}",
                        region.boundary_map.ncols(),
                        region.dim_x
                    ),
                });
            }
            if let Some(index) = region
                .lower
                .iter()
                .zip(region.upper.iter())
                .position(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan())
            {
                return Err(ProblemError::InvalidBounds { region: r, index });
            }
        }

        let mut seen = std::collections::BTreeSet::new();
        let mut row_owner: Vec<Vec<Option<usize>>> = regions
            .iter()
            .map(|r| vec![None; r.boundary_rows()])
            .collect();
        for (e, edge) in edges.iter().enumerate() {
            let bad = |reason: &str| ProblemError::InvalidEdge {
                k: edge.k,
                l: edge.l,
                reason: reason.to_string(),
            };
            if edge.k >= edge.l {
                return Err(bad("edge must satisfy k < l"));
            }
            if edge.l >= n {
                return Err(bad("region index out of range"));
            }
            if !seen.insert((edge.k, edge.l)) {
                return Err(bad("duplicate edge"));
            }
            if edge.block_k.len() != edge.block_l.len() {
                return Err(bad("z-blocks differ in dimension"));
            }
            for (region, rows) in [(edge.k, &edge.block_k), (edge.l, &edge.block_l)] {
                if rows.end > regions[region].boundary_rows() {
                    return Err(bad("block exceeds boundary map rows"));
                }
                for row in rows.clone() {
                    if row_owner[region][row].replace(e).is_some() {
                        return Err(bad("boundary row claimed by two edges"));
                    }
                }
            }
        }
        for (r, owners) in row_owner.iter().enumerate() {
            if owners.iter().any(Option::is_none) {
                return Err(ProblemError::InvalidRegion {
                    region: r,
                    reason: "boundary map has rows not assigned to any edge".into(),
                });
            }
        }

        let mut neighbor_blocks = vec![Vec::new(); n];
        for (e, edge) in edges.iter().enumerate() {
            neighbor_blocks[edge.k].push(NeighborBlock {
                neighbor: edge.l,
                edge: e,
                rows: edge.block_k.clone(),
            });
            neighbor_blocks[edge.l].push(NeighborBlock {
                neighbor: edge.k,
                edge: e,
                rows: edge.block_l.clone(),
            });
        }
        for blocks in &mut neighbor_blocks {
            blocks.sort_by_key(|b| b.neighbor);
        }
        let boundary_dim = edges.iter().map(CouplingEdge::dim).sum();
        Ok(Self {
            regions,
            edges,
            neighbor_blocks,
            boundary_dim,
        })
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn regions(&self) -> &[RegionSpec] {
        &self.regions
    }

    pub fn region(&self, k: usize) -> &RegionSpec {
        &self.regions[k]
    }

    pub fn edges(&self) -> &[CouplingEdge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &CouplingEdge {
        &self.edges[e]
    }

    /// Dimension of z with each shared block counted once.
    pub fn boundary_dim(&self) -> usize {
        self.boundary_dim
    }

    /// Neighbor blocks of region `k`, sorted by neighbor index.
    pub fn neighbors(&self, k: usize) -> &[NeighborBlock] {
        &self.neighbor_blocks[k]
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<usize> {
        let (k, l) = if a < b { (a, b) } else { (b, a) };
        self.edges.iter().position(|e| e.k == k && e.l == l)
    }

    /// Flat start for every region.
    pub fn flat_start(&self) -> Vec<DVector<f64>> {
        self.regions.iter().map(RegionSpec::flat_start).collect()
    }

    /// Total objective `Σ_k f_k(x_k)`.
    pub fn total_objective(&self, xs: &[DVector<f64>]) -> Result<f64, ProblemError> {
        if xs.len() != self.regions.len() {
            return Err(ProblemError::DimensionMismatch {
                expected: self.regions.len(),
                found: xs.len(),
            });
        }
        self.regions
            .iter()
            .zip(xs)
            .map(|(r, x)| evaluate_objective(r, x))
            .sum()
    }
}

/// Consensus toy with `f_k(x) = (x - c_k)^2`, a scalar variable per region and
/// regions coupled in a chain `0-1-...-(K-1)`. Each region's boundary map
/// copies its scalar onto one row per neighbor. The minimizer is `mean(c)`.
pub fn make_toy_consensus(targets: &[f64]) -> Result<PartitionedProblem, ProblemError> {
    if targets.len() < 2 {
        return Err(ProblemError::InvalidArgument(
            "toy consensus needs at least two targets".into(),
        ));
    }
    let k_total = targets.len();
    let regions = targets
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let rows = if k == 0 || k == k_total - 1 { 1 } else { 2 };
            RegionSpec {
                name: format!("toy-{k}"),
                dim_x: 1,
                objective: Arc::new(SeparableQuadratic {
                    weights: DVector::from_element(1, 1.0),
                    targets: DVector::from_element(1, c),
                }),
                lower: DVector::from_element(1, f64::NEG_INFINITY),
                upper: DVector::from_element(1, f64::INFINITY),
                constraints: None,
                boundary_map: DMatrix::from_element(rows, 1, 1.0),
            }
        })
        .collect();
    let edges = (0..k_total - 1)
        .map(|k| {
            // Row 0 of an interior region faces its left neighbor, row 1 its right.
            let row_k = if k == 0 { 0 } else { 1 };
            CouplingEdge {
                k,
                l: k + 1,
                block_k: row_k..row_k + 1,
                block_l: 0..1,
            }
        })
        .collect();
    PartitionedProblem::new(regions, edges)
}

/// Closed-form optimum of the consensus toy: `(mean(c), Σ (mean - c_k)^2)`.
pub fn toy_consensus_optimum(targets: &[f64]) -> (f64, f64) {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let objective = targets.iter().map(|c| (mean - c) * (mean - c)).sum();
    (mean, objective)
}

/// Box used for both regions of the non-convex toy.
pub const NONCONVEX_TOY_BOX: (f64, f64) = (-2.0, 2.0);

/// Two scalar regions with `f_1(x) = (x^2 - 1)^2` and `f_2(x) = (x - 0.5)^2`
/// on the box `[-2, 2]`, coupled by scalar consensus.
pub fn make_nonconvex_toy() -> PartitionedProblem {
    make_nonconvex_toy_with_target(0.5)
}

/// Non-convex toy with the quadratic region's target replaced by `target`.
pub fn make_nonconvex_toy_with_target(target: f64) -> PartitionedProblem {
    let (lo, hi) = NONCONVEX_TOY_BOX;
    let double_well = FnObjective::new(
        |x: &DVector<f64>| {
            let s = x[0] * x[0] - 1.0;
            s * s
        },
        |x: &DVector<f64>| DVector::from_element(1, 4.0 * x[0] * (x[0] * x[0] - 1.0)),
    );
    let region = |name: &str, objective: Arc<dyn SmoothObjective>| RegionSpec {
        name: name.to_string(),
        dim_x: 1,
        objective,
        lower: DVector::from_element(1, lo),
        upper: DVector::from_element(1, hi),
        constraints: None,
        boundary_map: DMatrix::from_element(1, 1, 1.0),
    };
    let regions = vec![
        region("double-well", Arc::new(double_well)),
        region(
            "quadratic",
            Arc::new(SeparableQuadratic {
                weights: DVector::from_element(1, 1.0),
                targets: DVector::from_element(1, target),
            }),
        ),
    ];
    let edges = vec![CouplingEdge {
        k: 0,
        l: 1,
        block_k: 0..1,
        block_l: 0..1,
    }];
    PartitionedProblem::new(regions, edges).expect("non-convex toy is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_region(a: DMatrix<f64>) -> RegionSpec {
        let n = a.ncols();
        RegionSpec {
            name: "fixture".into(),
            dim_x: n,
            objective: Arc::new(SeparableQuadratic {
                weights: DVector::from_element(n, 1.0),
                targets: DVector::zeros(n),
            }),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
            constraints: None,
            boundary_map: a,
        }
    }

    #[test]
    fn quadratic_objective_vanishes_at_target() {
        let region = RegionSpec {
            objective: Arc::new(SeparableQuadratic {
                weights: DVector::from_element(1, 1.0),
                targets: DVector::from_element(1, 2.0),
            }),
            ..dense_region(DMatrix::identity(1, 1))
        };
        let v = evaluate_objective(&region, &DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn toy_region_objective() {
        let p = make_toy_consensus(&[0.0, 2.0]).unwrap();
        let v = evaluate_objective(p.region(0), &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn objective_rejects_wrong_dimension() {
        let p = make_toy_consensus(&[0.0, 2.0]).unwrap();
        let err = evaluate_objective(p.region(0), &DVector::zeros(2)).unwrap_err();
        assert_eq!(
            err,
            ProblemError::DimensionMismatch {
                expected: 1,
                found: 2
            }
        );
        assert!(evaluate_boundary_map(p.region(0), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn identity_boundary_map() {
        let region = dense_region(DMatrix::identity(3, 3));
        let x = DVector::from_vec(vec![1.5, -2.0, 7.0]);
        assert_eq!(evaluate_boundary_map(&region, &x).unwrap(), x);
    }

    #[test]
    fn rank_deficient_boundary_map() {
        let region = dense_region(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]));
        let out = evaluate_boundary_map(&region, &DVector::from_vec(vec![3.0, 7.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.0, 3.0]);
    }

    #[test]
    fn boundary_map_matches_naive_product() {
        let a = DMatrix::from_row_slice(2, 3, &[0.3, -1.2, 2.5, 4.0, 0.0, -0.7]);
        let x = DVector::from_vec(vec![1.1, -0.4, 2.0]);
        let region = dense_region(a.clone());
        let got = evaluate_boundary_map(&region, &x).unwrap();
        for i in 0..2 {
            let mut acc = 0.0;
            for j in 0..3 {
                acc += a[(i, j)] * x[j];
            }
            assert!((got[i] - acc).abs() < 1e-15);
        }
    }

    #[test]
    fn toy_consensus_structure() {
        let p = make_toy_consensus(&[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.num_regions(), 3);
        assert_eq!(p.edges().len(), 2);
        assert_eq!(p.region(1).boundary_rows(), 2);
        assert_eq!(p.neighbors(1).len(), 2);
        assert_eq!(p.neighbors(1)[0].neighbor, 0);
        assert_eq!(p.neighbors(1)[1].rows, 1..2);
        assert_eq!(p.boundary_dim(), 2);
    }

    #[test]
    fn toy_consensus_needs_two_targets() {
        assert!(make_toy_consensus(&[1.0]).is_err());
        assert!(make_toy_consensus(&[]).is_err());
    }

    #[test]
    fn toy_consensus_closed_form() {
        assert_eq!(toy_consensus_optimum(&[0.0, 2.0]), (1.0, 2.0));
        assert_eq!(toy_consensus_optimum(&[5.0, 5.0, 5.0]), (5.0, 0.0));
        assert_eq!(toy_consensus_optimum(&[0.0, 1.0, 2.0]), (1.0, 2.0));
    }

    #[test]
    fn toy_consensus_grid_agrees_with_mean() {
        let c = [0.0, 1.0, 2.0];
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=40_000 {
            let x = -1.0 + i as f64 * 1e-4;
            let v: f64 = c.iter().map(|ci| (x - ci) * (x - ci)).sum();
            if v < best.0 {
                best = (v, x);
            }
        }
        let (mean, obj) = toy_consensus_optimum(&c);
        assert!((best.1 - mean).abs() < 1e-4);
        assert!((best.0 - obj).abs() < 1e-6);
    }

    #[test]
    fn rejects_structural_violations() {
        let region = || dense_region(DMatrix::identity(1, 1));
        let edge = |k, l| CouplingEdge {
            k,
            l,
            block_k: 0..1,
            block_l: 0..1,
        };
        assert!(PartitionedProblem::new(vec![region(), region()], vec![edge(1, 0)]).is_err());
        assert!(PartitionedProblem::new(vec![region(), region()], vec![edge(0, 0)]).is_err());
        assert!(PartitionedProblem::new(vec![region(), region()], vec![]).is_err());
        let mismatched = CouplingEdge {
            k: 0,
            l: 1,
            block_k: 0..1,
            block_l: 0..0,
        };
        assert!(PartitionedProblem::new(vec![region(), region()], vec![mismatched]).is_err());
        let mut bad = region();
        bad.lower[0] = 1.0;
        bad.upper[0] = 0.0;
        assert!(matches!(
            PartitionedProblem::new(vec![bad, region()], vec![edge(0, 1)]),
            Err(ProblemError::InvalidBounds { region: 0, index: 0 })
        ));
    }

    #[test]
    fn flat_start_uses_midpoints() {
        let p = make_nonconvex_toy();
        assert_eq!(p.flat_start()[0][0], 0.0);
        let mut r = dense_region(DMatrix::identity(3, 3));
        r.lower = DVector::from_vec(vec![1.0, 0.5, f64::NEG_INFINITY]);
        r.upper = DVector::from_vec(vec![3.0, f64::INFINITY, f64::INFINITY]);
        assert_eq!(r.flat_start().as_slice(), &[2.0, 0.5, 0.0]);
    }

    #[test]
    fn nonconvex_toy_grid_minimizer() {
        // Exhaustive grid over the toy box.
        let f = |x: f64| (x * x - 1.0).powi(2) + (x - 0.5).powi(2);
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=40_000 {
            let x = -2.0 + i as f64 * 1e-4;
            if f(x) < best.0 {
                best = (f(x), x);
            }
        }
        assert!((best.1 - 0.8846).abs() < 1e-4, "{best:?}");
        let p = make_nonconvex_toy();
        let x = DVector::from_element(1, best.1);
        let total = p.total_objective(&[x.clone(), x]).unwrap();
        assert!((total - best.0).abs() < 1e-12);
    }

    #[test]
    fn nonconvex_toy_mirror_symmetry() {
        let f = |t: f64, x: f64| (x * x - 1.0).powi(2) + (x - t).powi(2);
        let argmin = |t: f64| {
            (0..=40_000)
                .map(|i| -2.0 + i as f64 * 1e-4)
                .min_by(|a, b| f(t, *a).partial_cmp(&f(t, *b)).unwrap())
                .unwrap()
        };
        let plus = argmin(0.5);
        let minus = argmin(-0.5);
        assert!((plus + minus).abs() < 2e-4);
        let mirrored = make_nonconvex_toy_with_target(-0.5);
        let x = DVector::from_element(1, minus);
        let direct = f(-0.5, minus);
        assert!((mirrored.total_objective(&[x.clone(), x]).unwrap() - direct).abs() < 1e-12);
    }
}
