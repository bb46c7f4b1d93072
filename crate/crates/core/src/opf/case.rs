use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
}

impl BusType {
    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Ref => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Ref),
            _ => None,
        }
    }
}

/// Loads and shunts in MW/MVAr at 1 p.u.; angle in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub kind: BusType,
    pub pd: f64,
    pub qd: f64,
    pub gs: f64,
    pub bs: f64,
    pub vmax: f64,
    pub vmin: f64,
    pub vm: f64,
    pub va_deg: f64,
}

/// π-model branch in p.u.; a tap of 0 means nominal ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub b: f64,
    pub tap: f64,
}

impl Branch {
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

/// Quadratic cost `a P² + b P + c` with P in MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl CostCoefficients {
    pub fn eval(&self, p_mw: f64) -> f64 {
        self.a * p_mw * p_mw + self.b * p_mw + self.c
    }
}

/// Outputs and limits in MW/MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub qmax: f64,
    pub qmin: f64,
    pub vg: f64,
    pub pmax: f64,
    pub pmin: f64,
    pub cost: CostCoefficients,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseError {
    #[error("base MVA must be positive and finite, got {0}")]
    BadBaseMva(f64),
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("branch {branch} has dangling endpoint: bus {bus} does not exist")]
    DanglingEndpoint { branch: usize, bus: u32 },
    #[error("branch {branch} connects bus {bus} to itself")]
    SelfLoop { branch: usize, bus: u32 },
    #[error("branch {branch} has zero series impedance")]
    ZeroImpedance { branch: usize },
    #[error("generator {generator} sits at unknown bus {bus}")]
    GeneratorAtUnknownBus { generator: usize, bus: u32 },
    #[error("{what} limits inverted ({lower} > {upper})")]
    InvertedLimits {
        what: String,
        lower: f64,
        upper: f64,
    },
    #[error("case must have exactly one reference bus, found {0}")]
    ReferenceCount(usize),
    #[error("network is disconnected: bus {0} is unreachable")]
    Disconnected(u32),
    #[error("case has no buses")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpfCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl OpfCase {
    /// Checks references, limits and connectivity.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return Err(CaseError::BadBaseMva(self.base_mva));
        }
        if self.buses.is_empty() {
            return Err(CaseError::Empty);
        }
        let mut index = BTreeMap::new();
        for (i, bus) in self.buses.iter().enumerate() {
            if index.insert(bus.id, i).is_some() {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            let vals = [bus.pd, bus.qd, bus.gs, bus.bs, bus.vmax, bus.vmin, bus.vm, bus.va_deg];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(CaseError::NonFinite(format!("bus {}", bus.id)));
            }
            if bus.vmin > bus.vmax || bus.vmin <= 0.0 {
                return Err(CaseError::InvertedLimits {
                    what: format!("bus {} voltage", bus.id),
                    lower: bus.vmin,
                    upper: bus.vmax,
                });
            }
        }
        let refs = self.buses.iter().filter(|b| b.kind == BusType::Ref).count();
        if refs != 1 {
            return Err(CaseError::ReferenceCount(refs));
        }
        for (n, br) in self.branches.iter().enumerate() {
            for bus in [br.from, br.to] {
                if !index.contains_key(&bus) {
                    return Err(CaseError::DanglingEndpoint { branch: n, bus });
                }
            }
            if br.from == br.to {
                return Err(CaseError::SelfLoop {
                    branch: n,
                    bus: br.from,
                });
            }
            if [br.r, br.x, br.b, br.tap].iter().any(|v| !v.is_finite()) {
                return Err(CaseError::NonFinite(format!("branch {n}")));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::ZeroImpedance { branch: n });
            }
        }
        for (n, g) in self.generators.iter().enumerate() {
            if !index.contains_key(&g.bus) {
                return Err(CaseError::GeneratorAtUnknownBus {
                    generator: n,
                    bus: g.bus,
                });
            }
            let vals = [g.pg, g.qg, g.qmax, g.qmin, g.vg, g.pmax, g.pmin, g.cost.a, g.cost.b, g.cost.c];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(CaseError::NonFinite(format!("generator {n}")));
            }
            if g.pmin > g.pmax {
                return Err(CaseError::InvertedLimits {
                    what: format!("generator {n} active power"),
                    lower: g.pmin,
                    upper: g.pmax,
                });
            }
            if g.qmin > g.qmax {
                return Err(CaseError::InvertedLimits {
                    what: format!("generator {n} reactive power"),
                    lower: g.qmin,
                    upper: g.qmax,
                });
            }
        }
        let adjacency = self.adjacency_by_index();
        let mut seen = vec![false; self.buses.len()];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(CaseError::Disconnected(self.buses[i].id));
        }
        Ok(())
    }

    /// Bus id to position in `buses`.
    pub fn bus_index(&self) -> BTreeMap<u32, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    /// Neighbor lists by bus position. Endpoints that do not resolve are skipped.
    pub fn adjacency_by_index(&self) -> Vec<Vec<usize>> {
        let index = self.bus_index();
        let mut adj = vec![Vec::new(); self.buses.len()];
        for br in &self.branches {
            if let (Some(&i), Some(&j)) = (index.get(&br.from), index.get(&br.to)) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        adj
    }

    pub fn reference_bus(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusType::Ref)
    }

    /// Generator positions grouped by bus position.
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let index = self.bus_index();
        let mut out = vec![Vec::new(); self.buses.len()];
        for (n, g) in self.generators.iter().enumerate() {
            if let Some(&i) = index.get(&g.bus) {
                out[i].push(n);
            }
        }
        out
    }

    /// Dense bus admittance matrix in p.u., shunts included.
    pub fn ybus(&self) -> DMatrix<Complex<f64>> {
        let n = self.buses.len();
        let index = self.bus_index();
        let mut y = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
        for br in &self.branches {
            let (Some(&i), Some(&j)) = (index.get(&br.from), index.get(&br.to)) else {
                continue;
            };
            let ys = Complex::new(1.0, 0.0) / Complex::new(br.r, br.x);
            let charging = Complex::new(0.0, 0.5 * br.b);
            let t = br.ratio();
            y[(i, i)] += (ys + charging) / (t * t);
            y[(j, j)] += ys + charging;
            y[(i, j)] -= ys / t;
            y[(j, i)] -= ys / t;
        }
        for (i, bus) in self.buses.iter().enumerate() {
            y[(i, i)] += Complex::new(bus.gs, bus.bs) / self.base_mva;
        }
        y
    }

    /// Total generation cost for active outputs in p.u.
    pub fn cost(&self, pg_pu: &[f64]) -> f64 {
        self.generators
            .iter()
            .zip(pg_pu)
            .map(|(g, p)| g.cost.eval(p * self.base_mva))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opf::fixtures;

    #[test]
    fn single_generator_cost() {
        let c = CostCoefficients {
            a: 0.01,
            b: 40.0,
            c: 0.0,
        };
        assert!((c.eval(100.0) - 4100.0).abs() < 1e-9);
    }

    #[test]
    fn fixtures_validate() {
        fixtures::two_bus().validate().unwrap();
        fixtures::three_bus_chain().validate().unwrap();
        fixtures::case9().validate().unwrap();
    }

    #[test]
    fn validation_errors() {
        let mut c = fixtures::three_bus_chain();
        c.branches[0].to = 99;
        assert_eq!(
            c.validate(),
            Err(CaseError::DanglingEndpoint { branch: 0, bus: 99 })
        );
        let mut c = fixtures::three_bus_chain();
        c.branches.pop();
        assert_eq!(c.validate(), Err(CaseError::Disconnected(3)));
        let mut c = fixtures::three_bus_chain();
        c.buses[1].id = 1;
        assert_eq!(c.validate(), Err(CaseError::DuplicateBus(1)));
        let mut c = fixtures::three_bus_chain();
        c.generators[0].pmin = 1e9;
        assert!(matches!(c.validate(), Err(CaseError::InvertedLimits { .. })));
    }

    #[test]
    fn ybus_two_bus_hand_values() {
        let mut c = fixtures::two_bus();
        c.branches[0].r = 0.0099009900990099;
        c.branches[0].x = 0.099009900990099;
        c.branches[0].b = 0.0;
        // 1/(r + jx) with r + jx = 1/(1 - j10).
        let y = c.ybus();
        assert!((y[(0, 0)].re - 1.0).abs() < 1e-9 && (y[(0, 0)].im + 10.0).abs() < 1e-9);
        assert!((y[(0, 1)].re + 1.0).abs() < 1e-9 && (y[(0, 1)].im - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ybus_rows_sum_to_shunts_without_charging() {
        let mut c = fixtures::case9();
        for br in &mut c.branches {
            br.b = 0.0;
        }
        let y = c.ybus();
        for i in 0..y.nrows() {
            let s: Complex<f64> = y.row(i).iter().sum();
            assert!(s.norm() < 1e-9);
        }
    }
}
