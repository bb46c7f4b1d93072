#![allow(dead_code)]

use async_admm::engine::*;
use async_admm::kernel::AdmmParams;
use async_admm::opf::{build_regional_subproblems, fixtures, initial_point, OpfProblem, Partition, StartMode};
use async_admm::problem::PartitionedProblem;
use async_admm::solver::SolverConfig;

pub const MS: u64 = 1_000_000;

pub fn three_bus_opf() -> OpfProblem {
    let case = fixtures::three_bus_chain();
    let part = Partition::new(&case, fixtures::three_bus_regions()).unwrap();
    build_regional_subproblems(&case, &part, 2.0, 0.5).unwrap()
}

pub fn case9_opf() -> OpfProblem {
    let case = fixtures::case9();
    let part = Partition::new(&case, fixtures::case9_regions()).unwrap();
    build_regional_subproblems(&case, &part, 2.0, 0.5).unwrap()
}

pub fn flat(opf: &OpfProblem) -> Vec<nalgebra::DVector<f64>> {
    initial_point(opf, StartMode::Flat).unwrap()
}

pub fn lognormal(seed: u64) -> DelayModel {
    DelayModel::uniform_model(
        DelayDist::Lognormal { mu: 0.0, sigma: 1.0 },
        DelayDist::Lognormal { mu: -1.0, sigma: 0.5 },
        seed,
    )
}

pub fn run_flat(
    problem: &PartitionedProblem,
    params: AdmmParams,
    delays: &DelayModel,
    stop: StoppingRule,
) -> RunOutcome {
    run(problem, &problem.flat_start(), &params, delays, &stop, &SolverConfig::default()).unwrap()
}

/// Hand-written trace over a three-worker chain `0 - 1 - 2` with one scalar
/// per edge. Worker 0 computes fastest and worker 2 slowest; every worker
/// starts once one neighbor has reported.
pub struct Fig1b {
    pub trace: EventTrace,
    pub boundaries: Vec<usize>,
    pub membership: Vec<Vec<usize>>,
    /// `(worker, iter, start slot, finish slot)` per complete update.
    pub slots: Vec<(usize, u64, usize, usize)>,
    pub omega: usize,
}

struct Builder {
    header: TraceHeader,
    events: Vec<Event>,
    z: Vec<Vec<f64>>,
    iters: Vec<u64>,
    next_msg: u64,
}

impl Builder {
    fn view(&self, k: usize) -> Vec<f64> {
        self.header.blocks[k].iter().map(|&(e, _, _)| self.z[e][0]).collect()
    }

    fn start(&mut self, k: usize, t: u64) {
        let view = self.view(k);
        self.events.push(Event::ComputeStart {
            worker: k,
            iter: self.iters[k] + 1,
            t_ns: t,
            digest: payload_digest([view.as_slice()]),
        });
    }

    fn end(&mut self, k: usize, t: u64) {
        self.iters[k] += 1;
        let it = self.iters[k] as f64;
        let x = vec![0.25 * it + k as f64];
        let rows = self.header.blocks[k].len();
        let lambda = vec![-0.5 * it; rows];
        self.events.push(Event::ComputeEnd {
            worker: k,
            iter: self.iters[k],
            t_ns: t,
            digest: payload_digest([x.as_slice(), lambda.as_slice()]),
            x,
            lambda,
        });
    }

    fn send(&mut self, k: usize, to: usize, t: u64, arrives: u64) -> u64 {
        let edge = self.header.edges.iter().position(|e| (e.k, e.l) == (k.min(to), k.max(to))).unwrap();
        let id = self.next_msg;
        self.next_msg += 1;
        let ax = vec![self.iters[k] as f64];
        let lambda = vec![0.0];
        self.events.push(Event::Send {
            worker: k,
            iter: self.iters[k],
            t_ns: t,
            digest: payload_digest([ax.as_slice(), lambda.as_slice()]),
            msg: MessageRecord {
                id,
                to,
                edge,
                sent_ns: t,
                arrives_ns: arrives,
                ax,
                lambda,
            },
        });
        id
    }

    fn recv(&mut self, k: usize, id: u64, t: u64) {
        let from = self
            .events
            .iter()
            .find_map(|e| match e {
                Event::Send { worker, msg, .. } if msg.id == id => Some(*worker),
                _ => None,
            })
            .unwrap();
        self.events.push(Event::Receive {
            worker: k,
            iter: self.iters[k],
            t_ns: t,
            msg_id: id,
            from,
            digest: String::new(),
        });
    }

    fn zup(&mut self, k: usize, edge: usize, t: u64, stamp: (u64, u64), value: f64) {
        self.z[edge] = vec![value];
        self.events.push(Event::ZUpdate {
            worker: k,
            iter: self.iters[k],
            t_ns: t,
            edge,
            stamp,
            z: vec![value],
            digest: payload_digest([[value].as_slice()]),
        });
    }
}

/// The staggered fixture and its slicing, derived by hand from the counter
/// rules (see the comments on each boundary).
pub fn fig1b() -> Fig1b {
    let header = TraceHeader {
        format: TRACE_FORMAT.into(),
        version: TRACE_VERSION,
        workers: 3,
        rho: 5.0,
        alpha: 0.0,
        p: 0.5,
        seed: 0,
        edges: vec![EdgeInfo { k: 0, l: 1, dim: 1 }, EdgeInfo { k: 1, l: 2, dim: 1 }],
        blocks: vec![vec![(0, 0, 1)], vec![(0, 0, 1), (1, 1, 2)], vec![(1, 0, 1)]],
        x0: vec![vec![0.0], vec![0.0], vec![0.0]],
        z0: vec![vec![0.0], vec![0.0]],
    };
    let mut b = Builder {
        z: header.z0.clone(),
        header,
        events: Vec::new(),
        iters: vec![0; 3],
        next_msg: 0,
    };
    let h = MS / 2;
    b.start(0, 0); // 0
    b.start(1, 0); // 1
    b.start(2, 0); // 2
    b.end(0, 2 * MS); // 3
    let m0 = b.send(0, 1, 2 * MS, 3 * MS); // 4
    b.end(1, 3 * MS); // 5
    let m1 = b.send(1, 0, 3 * MS, 4 * MS); // 6
    let m2 = b.send(1, 2, 3 * MS, 4 * MS); // 7
    b.recv(1, m0, 3 * MS); // 8
    b.zup(1, 0, 3 * MS, (1, 1), 0.5); // 9
    b.start(1, 3 * MS); // 10
    b.recv(0, m1, 4 * MS); // 11
    b.start(0, 4 * MS); // 12: stamp (1, 1) already applied, no z-update
    b.recv(2, m2, 4 * MS); // 13
    b.end(2, 5 * MS); // 14
    let m3 = b.send(2, 1, 5 * MS, 6 * MS); // 15
    b.zup(2, 1, 5 * MS, (1, 1), 0.75); // 16
    b.start(2, 5 * MS); // 17
    b.end(0, 6 * MS); // 18
    let m4 = b.send(0, 1, 6 * MS, 7 * MS); // 19
    b.recv(1, m3, 6 * MS); // 20
    b.end(1, 6 * MS + h); // 21
    let m5 = b.send(1, 0, 6 * MS + h, 7 * MS + h); // 22
    let m6 = b.send(1, 2, 6 * MS + h, 7 * MS + h); // 23
    b.zup(1, 1, 6 * MS + h, (2, 1), 1.0); // 24
    b.start(1, 6 * MS + h); // 25
    b.recv(1, m4, 7 * MS); // 26
    b.recv(0, m5, 7 * MS + h); // 27
    b.zup(0, 0, 7 * MS + h, (2, 2), 1.25); // 28
    b.start(0, 7 * MS + h); // 29
    b.recv(2, m6, 7 * MS + h); // 30
    b.end(0, 9 * MS + h); // 31
    b.send(0, 1, 9 * MS + h, 10 * MS + h); // 32
    b.end(1, 10 * MS); // 33
    b.send(1, 0, 10 * MS, 11 * MS); // 34
    b.send(1, 2, 10 * MS, 11 * MS); // 35
    b.zup(1, 0, 10 * MS, (2, 3), 1.5); // 36
    b.start(1, 10 * MS); // 37
    b.end(2, 10 * MS); // 38
    b.send(2, 1, 10 * MS, 11 * MS); // 39
    b.zup(2, 1, 10 * MS, (2, 2), 1.75); // 40
    b.start(2, 10 * MS); // 41

    let footer = TraceFooter {
        events: b.events.len(),
        status: "iteration_cap".into(),
        end_ns: 10 * MS,
        final_states: (0..3)
            .map(|k| FinalState {
                worker: k,
                local_iter: b.iters[k],
                x: vec![0.0],
                lambda: vec![0.0; b.header.blocks[k].len()],
                mu: vec![],
            })
            .collect(),
        z: b.z.clone(),
    };
    let trace = EventTrace {
        header: b.header,
        events: b.events,
        footer: Some(footer),
    };
    // Windows (a, b] that need a boundary, from the x-update end pairs and
    // from each start to the next z change it would observe:
    //   (0,9] (1,9] (2,16] (3,18] (5,21] (10,16] (12,28] (14,38] (17,24]
    //   (18,31] (21,33] (25,28] (29,36] (37,40]
    // Taking windows by right end, each boundary goes to the first ready event
    // of the latest same-instant group inside the window. This gives
    // 9, 16, 24, 28, 36, 40, and none of them can be dropped.
    Fig1b {
        trace,
        boundaries: vec![9, 16, 24, 28, 36, 40],
        membership: vec![vec![0, 1], vec![2], vec![0, 1], vec![], vec![0, 1], vec![2], vec![]],
        slots: vec![
            (0, 1, 0, 0),
            (1, 1, 0, 0),
            (2, 1, 0, 1),
            (1, 2, 1, 2),
            (0, 2, 1, 2),
            (2, 2, 2, 5),
            (1, 3, 3, 4),
            (0, 3, 4, 4),
        ],
        // Worker 2 finishes in slots 1 and 5, so slot 4 looks back four slots.
        omega: 4,
    }
}

const JUNK: &[&str] = &[
    "", "nan", "inf", "-inf", "-1", "1e400", "abc", "4294967296", "0", "-0", "3.5.1", "\u{ff}", "\0", "#", "BUS",
    "BRANCH", "GEN", "COST", "BASEMVA", ":", ",", "1:", "0:", "2 2", "\t", "é", "1e-400", "+7",
];

/// Deterministic mutations of well-formed `seeds`, plus raw random bytes.
pub fn fuzz_corpus(seeds: &[String], n: usize, seed: u64) -> Vec<Vec<u8>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let base = &seeds[rng.gen_range(0..seeds.len())];
            let mut lines: Vec<String> = base.lines().map(str::to_string).collect();
            let rounds = rng.gen_range(1..4);
            let mut raw: Option<Vec<u8>> = None;
            for _ in 0..rounds {
                let li = rng.gen_range(0..lines.len().max(1));
                match rng.gen_range(0..8) {
                    0 => {
                        let len = rng.gen_range(0..200);
                        raw = Some((0..len).map(|_| rng.gen()).collect());
                    }
                    1 if !lines.is_empty() => {
                        lines.remove(li);
                    }
                    2 if !lines.is_empty() => {
                        let l = lines[li].clone();
                        lines.insert(li, l);
                    }
                    3 if !lines.is_empty() => {
                        let mut toks: Vec<String> = lines[li].split_whitespace().map(str::to_string).collect();
                        let junk = JUNK[rng.gen_range(0..JUNK.len())].to_string();
                        if toks.is_empty() {
                            toks.push(junk);
                        } else {
                            let t = rng.gen_range(0..toks.len());
                            toks[t] = junk;
                        }
                        lines[li] = toks.join(" ");
                    }
                    4 if !lines.is_empty() => {
                        let l = &lines[li];
                        let cut = rng.gen_range(0..=l.len());
                        let cut = (0..=cut).rev().find(|&c| l.is_char_boundary(c)).unwrap_or(0);
                        lines[li] = l[..cut].to_string();
                        lines.truncate(li + 1);
                    }
                    5 if lines.len() > 1 => {
                        let other = rng.gen_range(0..lines.len());
                        lines.swap(li, other);
                    }
                    6 => {
                        let mut bytes = lines.join("\n").into_bytes();
                        if !bytes.is_empty() {
                            let at = rng.gen_range(0..bytes.len());
                            bytes[at] ^= 1 << rng.gen_range(0..8);
                        }
                        raw = Some(bytes);
                    }
                    _ => {
                        let junk: Vec<&str> = (0..rng.gen_range(1..6)).map(|_| JUNK[rng.gen_range(0..JUNK.len())]).collect();
                        lines.insert(li.min(lines.len()), junk.join(" "));
                    }
                }
            }
            raw.unwrap_or_else(|| (lines.join("\n") + "\n").into_bytes())
        })
        .collect()
}
