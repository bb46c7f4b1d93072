//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero on a
//! failure.

mod common;

use std::panic::catch_unwind;
use std::process::ExitCode;
use std::time::Instant;

use async_admm::analysis::*;
use async_admm::config::RunConfig;
use async_admm::engine::*;
use async_admm::io::*;
use async_admm::kernel::AdmmParams;
use async_admm::opf::{centralized_reference_solve, fixtures, Partition, StartMode};
use async_admm::problem::{make_nonconvex_toy, make_toy_consensus, toy_consensus_optimum, PartitionedProblem};
use async_admm::runner::execute;
use async_admm::solver::SolverConfig;
use common::*;
use nalgebra::DVector;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn endless(iters: u64) -> StoppingRule {
    StoppingRule {
        tol: 1e-300,
        max_iters: iters,
        max_time_ms: None,
    }
}

/// Largest per-coordinate gap between the engine's local iterates and the
/// synchronous sweeps, and the number of iterations compared.
fn sync_gap(problem: &PartitionedProblem, x0: &[DVector<f64>], rho: f64) -> (f64, usize) {
    let params = AdmmParams::new(rho, 0.0, 1.0);
    let stop = endless(80);
    let solver = SolverConfig::default();
    let reference = run_sync_reference(problem, x0, &params, &stop, &solver).unwrap();
    let out = run(problem, x0, &params, &DelayModel::zero(0), &stop, &solver).unwrap();
    let mut per_worker = vec![Vec::new(); problem.num_regions()];
    for e in &out.trace.events {
        if let Event::ComputeEnd { worker, x, lambda, .. } = e {
            per_worker[*worker].push((x.clone(), lambda.clone()));
        }
    }
    let iters = per_worker.iter().map(Vec::len).min().unwrap().min(reference.iterates.len());
    let mut gap: f64 = 0.0;
    for (k, its) in per_worker.iter().enumerate() {
        for (i, (x, l)) in its.iter().take(iters).enumerate() {
            let r = &reference.iterates[i];
            for (a, b) in x.iter().zip(r.xs[k].iter()).chain(l.iter().zip(r.lambdas[k].iter())) {
                gap = gap.max((a - b).abs());
            }
        }
    }
    (gap, iters)
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let toy = make_toy_consensus(&[0.0, 2.0]).unwrap();
    let (g1, n1) = sync_gap(&toy, &toy.flat_start(), 0.5);
    let opf = three_bus_opf();
    let (g2, n2) = sync_gap(&opf.problem, &flat(&opf), 1e4);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        g1 <= 1e-12 && g2 <= 1e-12 && n1 >= 50 && n2 >= 50 && secs < 5.0,
        format!("toy max diff {g1:.1e} over {n1} its, 3-bus max diff {g2:.1e} over {n2} its, {secs:.2}s"),
    )
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let p = make_toy_consensus(&[0.0, 2.0]).unwrap();
    let (opt, _) = toy_consensus_optimum(&[0.0, 2.0]);
    let params = AdmmParams::new(5.0, 0.0, 0.1);
    let loose = run_flat(&p, params, &lognormal(7), StoppingRule::default());
    let loose_err = loose.solution.iter().map(|x| (x[0] - opt).abs()).fold(0.0, f64::max);
    let stop = StoppingRule {
        tol: 1e-5,
        ..StoppingRule::default()
    };
    let out = run_flat(&p, params, &lognormal(7), stop);
    let err = out.solution.iter().map(|x| (x[0] - opt).abs()).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        out.status.converged() && out.max_residue <= 1e-3 && err <= 1e-3 && secs < 5.0,
        format!(
            "residue {:.1e}, max |x - 1| {err:.1e} (stop tol 1e-5; {loose_err:.1e} at stop tol 1e-3), {secs:.2}s",
            out.max_residue
        ),
    )
}

/// Local minima of `(x² − 1)² + (x − 0.5)²` on a 1e-4 grid over `[-2, 2]`.
fn grid_local_minima() -> Vec<(f64, f64)> {
    let f = |x: f64| (x * x - 1.0).powi(2) + (x - 0.5).powi(2);
    let n = 40_000;
    let xs: Vec<f64> = (0..=n).map(|i| -2.0 + i as f64 * 1e-4).collect();
    let v: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    (0..=n)
        .filter(|&i| (i == 0 || v[i] < v[i - 1]) && (i == n || v[i] < v[i + 1]))
        .map(|i| (xs[i], v[i]))
        .collect()
}

fn criterion_3() -> Verdict {
    let t = Instant::now();
    let p = make_nonconvex_toy();
    let constants = DiagnosticConstants {
        gamma: 4.0,
        m1: 44.0,
        m2: 1.0,
        c: 1.0,
        omega: 1,
    };
    let rho_bound = rho_min(&constants);
    let rho = 4000.0;
    let stop = StoppingRule {
        tol: 1e-8,
        max_iters: 40_000,
        max_time_ms: None,
    };
    let out = run_flat(&p, AdmmParams::new(rho, 0.0, 0.1), &lognormal(3), stop);
    let footer = out.trace.footer.as_ref().unwrap();
    let vecs = |f: &dyn Fn(&FinalState) -> &Vec<f64>| -> Vec<DVector<f64>> {
        footer.final_states.iter().map(|s| DVector::from_column_slice(f(s))).collect()
    };
    let z = async_admm::kernel::ZStore::from_blocks(footer.z.iter().map(|b| DVector::from_column_slice(b)).collect());
    let kkt = check_kkt(&p, &vecs(&|s| &s.x), &z, &vecs(&|s| &s.lambda), &vecs(&|s| &s.mu), 1e-3).unwrap();
    let objective = p.total_objective(&vecs(&|s| &s.x)).unwrap();
    let minima = grid_local_minima();
    let nearest = minima
        .iter()
        .map(|&(_, v)| (v - objective).abs())
        .fold(f64::INFINITY, f64::min);
    let secs = t.elapsed().as_secs_f64();
    verdict(
        rho > rho_bound && out.status.converged() && kkt.pass && nearest <= 1e-3 && secs < 30.0,
        format!(
            "rho {rho} > {rho_bound:.1}, KKT ({:.1e}, {:.1e}, {:.1e}), objective {objective:.6} within {nearest:.1e} of a grid minimum ({} found), {secs:.2}s",
            kkt.stationarity,
            kkt.multiplier_consistency,
            kkt.primal,
            minima.len()
        ),
    )
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let opf = case9_opf();
    let x0 = flat(&opf);
    let reference = centralized_reference_solve(&opf.case, &SolverConfig::default(), StartMode::Flat).unwrap();
    let stop = StoppingRule {
        tol: 1e-3,
        max_iters: 3000,
        max_time_ms: None,
    };
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, p) in [("sync", 1.0), ("async", 0.1)] {
        let params = AdmmParams::new(1e5, 0.0, p);
        let out = run(&opf.problem, &x0, &params, &lognormal(1), &stop, &SolverConfig::default()).unwrap();
        let gap = objective_gap(opf.objective(&out.solution), reference.objective);
        let pct = gap.percent.unwrap();
        pass &= out.status.converged() && out.max_residue < 1e-3 && out.constraint_mismatch < 1e-3 && pct < 1.0;
        parts.push(format!(
            "{label}: {} after {} its, gap {pct:.3}%",
            out.status.label(),
            out.rows.last().map_or(0, |r| r.iter)
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        pass && secs < 600.0,
        format!("case9, 3 regions, flat start; {}; {secs:.1}s", parts.join("; ")),
    )
}

fn criterion_5() -> Verdict {
    let mut runs = 0;
    let mut violations = 0;
    let mut problems: Vec<(PartitionedProblem, Vec<DVector<f64>>, f64)> = Vec::new();
    for targets in [&[0.0, 2.0][..], &[0.0, 2.0, 5.0], &[1.0, -1.0, 3.0, 0.5]] {
        let p = make_toy_consensus(targets).unwrap();
        let x0 = p.flat_start();
        problems.push((p, x0, 5.0));
    }
    let nonconvex = make_nonconvex_toy();
    let x0 = nonconvex.flat_start();
    problems.push((nonconvex, x0, 4000.0));
    let opf = three_bus_opf();
    let x0 = flat(&opf);
    problems.push((opf.problem, x0, 1e4));
    let stop = StoppingRule {
        tol: 1e-3,
        max_iters: 3000,
        max_time_ms: None,
    };
    let mut worst_omega = 0;
    for (i, (p, x0, rho)) in problems.iter().enumerate() {
        for seed in 0..4 {
            let out = run(p, x0, &AdmmParams::new(*rho, 0.0, 0.1), &lognormal(100 + seed), &stop, &SolverConfig::default())
                .unwrap();
            let a = assign_global_iterations(&out.trace).unwrap();
            let w = measure_omega(&a);
            worst_omega = worst_omega.max(w.omega);
            let l2 = check_lemma2(&out.trace, &a, &w).unwrap();
            runs += 1;
            if !l2.holds {
                violations += 1;
                eprintln!("  lemma 2 fails: problem {i}, seed {}", 100 + seed);
            }
        }
    }
    let toy = make_toy_consensus(&[0.0, 2.0]).unwrap();
    let c = boundary_constant(&toy).unwrap();
    let out = run_flat(&toy, AdmmParams::new(5.0, 0.0, 0.1), &lognormal(7), StoppingRule::default());
    let a = assign_global_iterations(&out.trace).unwrap();
    let lam = check_lambda_bound(&out.trace, &a, c, 2.0);
    verdict(
        runs == 20 && violations == 0 && lam.violations.is_empty() && c == 1.0,
        format!(
            "{runs} runs, {violations} lemma-2 violations (max omega {worst_omega}); lambda bound C={c}, M1=2: {} violations over {} iterations",
            lam.violations.len(),
            lam.iterations.len()
        ),
    )
}

fn criterion_6() -> Verdict {
    let unit = DiagnosticConstants {
        gamma: 1.0,
        m1: 1.0,
        m2: 1.0,
        c: 1.0,
        omega: 1,
    };
    let exact_rho = rho_min(&unit) == 2.0 + 8f64.sqrt();
    let exact_alpha = alpha_min(&DiagnosticConstants { omega: 3, ..unit }, 5.0) == 17.0;
    let base = DiagnosticConstants {
        gamma: 1.5,
        m1: 2.0,
        m2: 1.2,
        c: 0.8,
        omega: 3,
    };
    let mut monotone = true;
    for which in 0..4 {
        let values: Vec<f64> = (0..10)
            .map(|i| {
                let v = 1.0 + 0.5 * i as f64;
                let mut c = base;
                match which {
                    0 => c.gamma = v,
                    1 => c.m1 = v,
                    2 => c.m2 = v,
                    _ => c.c = v,
                }
                rho_min(&c)
            })
            .collect();
        monotone &= values.windows(2).all(|w| w[1] > w[0]);
    }
    let by_omega: Vec<f64> = (1..=10).map(|w| alpha_min(&DiagnosticConstants { omega: w, ..base }, 5.0)).collect();
    let by_m2: Vec<f64> = (0..10)
        .map(|i| alpha_min(&DiagnosticConstants { m2: 1.0 + 0.5 * i as f64, ..base }, 5.0))
        .collect();
    monotone &= by_omega.windows(2).all(|w| w[1] > w[0]) && by_m2.windows(2).all(|w| w[1] > w[0]);
    verdict(
        exact_rho && exact_alpha && monotone,
        format!(
            "rho_min(1,1,1,1) = {} (exact: {exact_rho}), alpha_min(5,1,3) = {} (exact: {exact_alpha}), monotone sweeps: {monotone}",
            rho_min(&unit),
            alpha_min(&DiagnosticConstants { omega: 3, ..unit }, 5.0)
        ),
    )
}

fn criterion_7() -> Verdict {
    let f = fig1b();
    let a = assign_global_iterations(&f.trace).unwrap();
    let rules = check_rules(&f.trace, &a).unwrap();
    let omega = measure_omega(&a).omega;
    let mut lockstep = Vec::new();
    for targets in [&[0.0, 2.0][..], &[0.0, 2.0, 5.0], &[1.0, -1.0, 3.0, 0.5]] {
        let p = make_toy_consensus(targets).unwrap();
        let out = run_flat(&p, AdmmParams::new(5.0, 0.0, 1.0), &DelayModel::zero(0), StoppingRule::default());
        lockstep.push(measure_omega(&assign_global_iterations(&out.trace).unwrap()).omega);
    }
    let opf = three_bus_opf();
    let out = run(
        &opf.problem,
        &flat(&opf),
        &AdmmParams::new(1e4, 0.0, 1.0),
        &DelayModel::zero(0),
        &StoppingRule::default(),
        &SolverConfig::default(),
    )
    .unwrap();
    lockstep.push(measure_omega(&assign_global_iterations(&out.trace).unwrap()).omega);
    verdict(
        rules.all() && a.boundaries == f.boundaries && omega == f.omega && lockstep.iter().all(|&w| w == 1),
        format!(
            "fixture rules {}/{}/{}/{}, omega {omega} (hand-derived {}), lockstep omegas {lockstep:?}",
            rules.ready_boundaries, rules.maximal_slots, rules.single_finish, rules.fresh_inputs, f.omega
        ),
    )
}

fn criterion_8() -> Verdict {
    let case9 = fixtures::case9();
    let cases: Vec<String> = [fixtures::case9(), fixtures::three_bus_chain(), fixtures::two_bus()]
        .iter()
        .map(write_case)
        .collect();
    let parts = vec![write_partition(&Partition::new(&case9, fixtures::case9_regions()).unwrap())];
    let mut crashes = 0;
    for bytes in fuzz_corpus(&cases, 10_000, 81) {
        crashes += catch_unwind(|| parse_case_bytes(&bytes).is_ok()).is_err() as usize;
    }
    for bytes in fuzz_corpus(&parts, 10_000, 82) {
        crashes += catch_unwind(|| parse_partition_bytes(&bytes, &case9).is_ok()).is_err() as usize;
    }
    let dir = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"));
    let mut round_trips = 0;
    let mut failures = 0;
    for name in ["case9", "three_bus", "two_bus"] {
        let case = read_case(&dir.join(format!("{name}.case"))).unwrap();
        round_trips += 1;
        failures += (parse_case(&write_case(&case)).as_ref() != Ok(&case)) as usize;
        let part_path = dir.join(format!("{name}.part"));
        if part_path.exists() {
            let part = read_partition(&part_path, &case).unwrap();
            round_trips += 1;
            failures += (parse_partition(&write_partition(&part), &case).as_ref() != Ok(&part)) as usize;
        }
    }
    let trace = fig1b().trace;
    round_trips += 1;
    failures += (read_trace_str(&write_trace_string(&trace)).ok().as_ref() != Some(&trace)) as usize;
    verdict(
        crashes == 0 && failures == 0,
        format!("20000 fuzz inputs, {crashes} crashes; {round_trips} fixture round trips, {failures} mismatches"),
    )
}

fn criterion_9() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bytes = Vec::new();
    for d in &dirs {
        let text = format!(
            "problem = toy\ntargets = 0, 2, 5\np = 0.1\ncompute_delay = lognormal(0, 1)\nlink_delay = lognormal(-1, 0.5)\nseed = 42\noutput = {}\n",
            d.path().display()
        );
        let cfg = RunConfig::from_text(&text).unwrap();
        let done = execute(&cfg).unwrap();
        bytes.push(std::fs::read(&done.summary.artifacts.trace).unwrap());
    }
    verdict(
        !bytes[0].is_empty() && bytes[0] == bytes[1],
        format!("two runs with seed 42: {} bytes each, identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn criterion_10() -> Verdict {
    let p = make_toy_consensus(&[0.0, 2.0, 5.0]).unwrap();
    let delays = DelayModel::uniform_model(
        DelayDist::Lognormal { mu: 0.0, sigma: 0.25 },
        DelayDist::Constant { ms: 0.5 },
        10,
    )
    .with_compute(2, DelayDist::Lognormal { mu: 10f64.ln(), sigma: 0.25 });
    let sync = run_flat(&p, AdmmParams::new(5.0, 0.0, 1.0), &delays, StoppingRule::default());
    let asynch = run_flat(&p, AdmmParams::new(5.0, 0.0, 0.1), &delays, StoppingRule::default());
    let (ws, wa) = (sync.timing.average_wait_fraction, asynch.timing.average_wait_fraction);
    verdict(
        ws > wa && sync.status.converged() && asynch.status.converged(),
        format!("3-worker chain, worker 2 ten times slower: sync wait {ws:.3}, async wait {wa:.3}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("sync/async equivalence at p=1", criterion_1),
        ("async toy convergence at p=0.1", criterion_2),
        ("non-convex toy reaches a KKT local minimum", criterion_3),
        ("OPF objective gap under 1%", criterion_4),
        ("trace inequalities hold", criterion_5),
        ("parameter bound calculator", criterion_6),
        ("global counter reconstruction", criterion_7),
        ("parser robustness", criterion_8),
        ("determinism", criterion_9),
        ("time accounting with a slow worker", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = catch_unwind(check).unwrap_or_else(|_| verdict(false, "panicked"));
        println!("criterion {:>2} {}: {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += !v.pass as usize;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
