//! Small built-in cases used by tests, examples and the CLI.

use super::case::{Branch, Bus, BusType, CostCoefficients, Generator, OpfCase};

#[allow(clippy::too_many_arguments)]
fn bus(id: u32, kind: BusType, pd: f64, qd: f64, vmax: f64, vmin: f64) -> Bus {
    Bus {
        id,
        kind,
        pd,
        qd,
        gs: 0.0,
        bs: 0.0,
        vmax,
        vmin,
        vm: 1.0,
        va_deg: 0.0,
    }
}

fn branch(from: u32, to: u32, r: f64, x: f64, b: f64) -> Branch {
    Branch {
        from,
        to,
        r,
        x,
        b,
        tap: 0.0,
    }
}

#[allow(clippy::too_many_arguments)]
fn generator(bus: u32, pmax: f64, pmin: f64, qmax: f64, qmin: f64, a: f64, b: f64, c: f64) -> Generator {
    Generator {
        bus,
        pg: 0.0,
        qg: 0.0,
        qmax,
        qmin,
        vg: 1.0,
        pmax,
        pmin,
        cost: CostCoefficients { a, b, c },
    }
}

/// Generator bus held at 1.0 p.u. feeding a 50 MW / 20 MVAr load over one line.
pub fn two_bus() -> OpfCase {
    OpfCase {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusType::Ref, 0.0, 0.0, 1.0, 1.0),
            bus(2, BusType::Pq, 50.0, 20.0, 1.1, 0.9),
        ],
        branches: vec![branch(1, 2, 0.01, 0.1, 0.0)],
        generators: vec![generator(1, 200.0, 0.0, 200.0, -200.0, 0.0, 1.0, 0.0)],
    }
}

/// Chain 1-2-3 with generators at both ends.
pub fn three_bus_chain() -> OpfCase {
    let mut buses = vec![
        bus(1, BusType::Ref, 0.0, 0.0, 1.1, 0.9),
        bus(2, BusType::Pq, 80.0, 30.0, 1.1, 0.9),
        bus(3, BusType::Pv, 40.0, 10.0, 1.1, 0.9),
    ];
    buses[1].bs = 5.0;
    let mut case = OpfCase {
        base_mva: 100.0,
        buses,
        branches: vec![
            branch(1, 2, 0.02, 0.12, 0.04),
            branch(2, 3, 0.03, 0.15, 0.05),
        ],
        generators: vec![
            generator(1, 200.0, 0.0, 150.0, -150.0, 0.01, 20.0, 0.0),
            generator(3, 150.0, 0.0, 100.0, -100.0, 0.02, 15.0, 0.0),
        ],
    };
    case.generators[1].pg = 60.0;
    case
}

/// The WSCC 9-bus, 3-generator system.
pub fn case9() -> OpfCase {
    let buses = vec![
        bus(1, BusType::Ref, 0.0, 0.0, 1.1, 0.9),
        bus(2, BusType::Pv, 0.0, 0.0, 1.1, 0.9),
        bus(3, BusType::Pv, 0.0, 0.0, 1.1, 0.9),
        bus(4, BusType::Pq, 0.0, 0.0, 1.1, 0.9),
        bus(5, BusType::Pq, 90.0, 30.0, 1.1, 0.9),
        bus(6, BusType::Pq, 0.0, 0.0, 1.1, 0.9),
        bus(7, BusType::Pq, 100.0, 35.0, 1.1, 0.9),
        bus(8, BusType::Pq, 0.0, 0.0, 1.1, 0.9),
        bus(9, BusType::Pq, 125.0, 50.0, 1.1, 0.9),
    ];
    let branches = vec![
        branch(1, 4, 0.0, 0.0576, 0.0),
        branch(4, 5, 0.017, 0.092, 0.158),
        branch(5, 6, 0.039, 0.17, 0.358),
        branch(3, 6, 0.0, 0.0586, 0.0),
        branch(6, 7, 0.0119, 0.1008, 0.209),
        branch(7, 8, 0.0085, 0.072, 0.149),
        branch(8, 2, 0.0, 0.0625, 0.0),
        branch(8, 9, 0.032, 0.161, 0.306),
        branch(9, 4, 0.01, 0.085, 0.176),
    ];
    let generators = vec![
        generator(1, 250.0, 10.0, 300.0, -300.0, 0.11, 5.0, 150.0),
        generator(2, 300.0, 10.0, 300.0, -300.0, 0.085, 1.2, 600.0),
        generator(3, 270.0, 10.0, 300.0, -300.0, 0.1225, 1.0, 335.0),
    ];
    let mut case = OpfCase {
        base_mva: 100.0,
        buses,
        branches,
        generators,
    };
    case.generators[1].pg = 163.0;
    case.generators[2].pg = 85.0;
    case
}

/// Region membership (bus ids) used with [`case9`]: one generator per region.
pub fn case9_regions() -> Vec<Vec<u32>> {
    vec![vec![1, 4, 5], vec![3, 6, 7], vec![2, 8, 9]]
}

/// Region membership used with [`three_bus_chain`].
pub fn three_bus_regions() -> Vec<Vec<u32>> {
    vec![vec![1], vec![2, 3]]
}
