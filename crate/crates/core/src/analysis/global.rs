//! Reconstruction of the global iteration counter from an event trace.
//!
//! The time axis is the event index, so ties in virtual time keep the order
//! in which the engine processed them. A boundary `c` splits the trace
//! before event `c`; slot `ν` holds the events between boundaries `ν` and
//! `ν + 1`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::engine::{payload_digest, Event, EventTrace};

/// One complete x-update located on the global counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSlot {
    pub worker: usize,
    pub iter: u64,
    pub start_event: usize,
    pub end_event: usize,
    /// Slot in which the update started (`ν̄_k`).
    pub start_slot: usize,
    /// Slot in which it finished; the output is iterate `finish_slot + 1`.
    pub finish_slot: usize,
}

impl UpdateSlot {
    /// Global iteration index of the produced iterate.
    pub fn output_index(&self) -> usize {
        self.finish_slot + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalIterationAssignment {
    pub workers: usize,
    pub events: usize,
    /// Event indices at which a new slot begins.
    pub boundaries: Vec<usize>,
    pub boundary_times_ns: Vec<u64>,
    /// Workers finishing an x-update in each slot.
    pub membership: Vec<BTreeSet<usize>>,
    pub updates: Vec<UpdateSlot>,
}

impl GlobalIterationAssignment {
    pub fn num_slots(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn slot_of(&self, event: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= event)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct UpdateSpan {
    pub worker: usize,
    pub iter: u64,
    pub start: usize,
    pub end: Option<usize>,
}

/// Structural summary of a validated trace.
#[derive(Debug, Clone)]
pub(crate) struct TraceIndex {
    pub updates: Vec<UpdateSpan>,
    /// Events at which some worker begins its ready step.
    pub candidates: Vec<usize>,
    pub z_updates: Vec<Vec<usize>>,
    pub incident: Vec<Vec<usize>>,
}

fn malformed(event: usize, message: impl Into<String>) -> AnalysisError {
    AnalysisError::Malformed {
        event,
        message: message.into(),
    }
}

pub(crate) fn index_trace(trace: &EventTrace) -> Result<TraceIndex, AnalysisError> {
    let h = &trace.header;
    let n = h.workers;
    if h.blocks.len() != n || h.x0.len() != n {
        return Err(malformed(0, "header worker count does not match its blocks"));
    }
    if h.z0.len() != h.edges.len() {
        return Err(malformed(0, "header z0 does not match its edges"));
    }
    let mut incident = vec![Vec::new(); n];
    for (e, edge) in h.edges.iter().enumerate() {
        if edge.k >= n || edge.l >= n || edge.k == edge.l {
            return Err(malformed(0, format!("edge {e} has invalid endpoints")));
        }
        if h.z0[e].len() != edge.dim {
            return Err(malformed(0, format!("z0 block {e} has the wrong length")));
        }
        incident[edge.k].push(e);
        incident[edge.l].push(e);
    }

    let mut local = vec![0_u64; n];
    let mut open: Vec<Option<usize>> = vec![None; n];
    let mut updates = Vec::new();
    let mut candidates = Vec::new();
    let mut z_updates = vec![Vec::new(); h.edges.len()];
    let mut sent: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    let mut received = BTreeSet::new();
    let mut batch: Option<(usize, usize)> = None;
    let mut last_t = 0;

    for (i, ev) in trace.events.iter().enumerate() {
        let k = ev.worker();
        if k >= n {
            return Err(malformed(i, format!("worker {k} out of range")));
        }
        if ev.time_ns() < last_t {
            return Err(malformed(i, "virtual time decreases"));
        }
        last_t = ev.time_ns();
        if let Some((owner, _)) = batch {
            let continues = owner == k && matches!(ev, Event::ZUpdate { .. } | Event::ComputeStart { .. });
            if !continues {
                return Err(malformed(i, "z-updates not followed by the updater's x-update start"));
            }
        }
        match ev {
            Event::ComputeStart { iter, .. } => {
                if open[k].is_some() || *iter != local[k] + 1 {
                    return Err(malformed(i, format!("unexpected start of iteration {iter} by worker {k}")));
                }
                open[k] = Some(updates.len());
                updates.push(UpdateSpan {
                    worker: k,
                    iter: *iter,
                    start: i,
                    end: None,
                });
                candidates.push(batch.take().map_or(i, |(_, first)| first));
            }
            Event::ComputeEnd { iter, .. } => {
                let Some(u) = open[k].take() else {
                    return Err(malformed(i, format!("worker {k} ends an update it never started")));
                };
                if *iter != updates[u].iter {
                    return Err(malformed(i, "end does not match the open iteration"));
                }
                updates[u].end = Some(i);
                local[k] = *iter;
            }
            Event::Send { iter, msg, .. } => {
                if open[k].is_some() || *iter != local[k] {
                    return Err(malformed(i, "send outside an iteration boundary"));
                }
                let edge = h.edges.get(msg.edge).ok_or_else(|| malformed(i, "send on unknown edge"))?;
                let ok = (edge.k == k && edge.l == msg.to) || (edge.l == k && edge.k == msg.to);
                if !ok || sent.insert(msg.id, (k, msg.to)).is_some() {
                    return Err(malformed(i, format!("invalid message {}", msg.id)));
                }
            }
            Event::Receive { msg_id, from, .. } => match sent.get(msg_id) {
                Some(&(f, to)) if f == *from && to == k && received.insert(*msg_id) => {}
                _ => return Err(malformed(i, format!("receive of unknown message {msg_id}"))),
            },
            Event::ZUpdate { iter, edge, z, .. } => {
                if open[k].is_some() || *iter != local[k] {
                    return Err(malformed(i, "z-update while computing"));
                }
                if !incident[k].contains(edge) || z.len() != h.edges[*edge].dim {
                    return Err(malformed(i, format!("z-update of edge {edge} by worker {k}")));
                }
                z_updates[*edge].push(i);
                if batch.is_none() {
                    batch = Some((k, i));
                }
            }
        }
    }
    if batch.is_some() {
        return Err(malformed(trace.events.len(), "trace ends inside a z-update batch"));
    }
    Ok(TraceIndex {
        updates,
        candidates,
        z_updates,
        incident,
    })
}

/// Boundary constraints `(a, b]`: some boundary `c` with `a < c ≤ b`.
fn constraints(index: &TraceIndex) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut last_end: Vec<Option<usize>> = vec![None; index.incident.len()];
    for u in &index.updates {
        if let Some(end) = u.end {
            if let Some(prev) = last_end[u.worker] {
                out.push((prev, end));
            }
            last_end[u.worker] = Some(end);
        }
        if let Some(r) = next_incident_z_update(index, u.worker, u.start) {
            out.push((u.start, r));
        }
    }
    out
}

fn next_incident_z_update(index: &TraceIndex, worker: usize, after: usize) -> Option<usize> {
    index.incident[worker]
        .iter()
        .filter_map(|&e| {
            let list = &index.z_updates[e];
            list.get(list.partition_point(|&r| r <= after)).copied()
        })
        .min()
}

/// Candidates sharing a virtual instant with no x-update finishing between
/// them form a group; returns the position of each candidate's group head.
fn group_heads(trace: &EventTrace, cands: &[usize]) -> Vec<usize> {
    let mut heads = Vec::with_capacity(cands.len());
    let mut ends = 0;
    let mut prev_end_count = 0;
    let mut cursor = 0;
    for (j, &c) in cands.iter().enumerate() {
        while cursor < c {
            if matches!(trace.events[cursor], Event::ComputeEnd { .. }) {
                ends += 1;
            }
            cursor += 1;
        }
        let joins = j > 0
            && trace.events[cands[j - 1]].time_ns() == trace.events[c].time_ns()
            && ends == prev_end_count;
        heads.push(if joins { heads[j - 1] } else { j });
        prev_end_count = ends;
    }
    heads
}

/// Number of boundaries inside each constraint window.
fn stab_counts(cuts: &[usize], cons: &[(usize, usize)]) -> Vec<(usize, usize)> {
    cons.iter()
        .map(|&(a, b)| {
            let lo = cuts.partition_point(|&c| c <= a);
            let hi = cuts.partition_point(|&c| c <= b);
            (lo, hi - lo)
        })
        .collect()
}

/// Boundaries no constraint depends on exclusively.
fn removable(cuts: &[usize], cons: &[(usize, usize)]) -> Vec<usize> {
    let mut essential = vec![false; cuts.len()];
    for (lo, n) in stab_counts(cuts, cons) {
        if n == 1 {
            essential[lo] = true;
        }
    }
    (0..cuts.len()).filter(|&i| !essential[i]).collect()
}

/// Fewest boundaries by the right-end greedy, each moved back to the head of
/// its group of simultaneous ready events when that keeps it inside the
/// window that required it.
fn place_boundaries(
    trace: &EventTrace,
    index: &TraceIndex,
    mut cons: Vec<(usize, usize)>,
) -> Result<Vec<usize>, AnalysisError> {
    cons.sort_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
    let cands = &index.candidates;
    let heads = group_heads(trace, cands);
    let mut cuts: Vec<usize> = Vec::new();
    for &(a, b) in &cons {
        if cuts.last().is_some_and(|&c| c > a) {
            continue;
        }
        let first = cands.partition_point(|&c| c <= a);
        let latest = cands.partition_point(|&c| c <= b);
        if first >= latest {
            return Err(malformed(b, format!("no ready event between events {a} and {b}")));
        }
        let j = heads[latest - 1].max(first);
        cuts.push(cands[j]);
    }
    while let Some(&i) = removable(&cuts, &cons).first() {
        cuts.remove(i);
    }
    Ok(cuts)
}

pub fn assign_global_iterations(trace: &EventTrace) -> Result<GlobalIterationAssignment, AnalysisError> {
    let index = index_trace(trace)?;
    let cons = constraints(&index);
    let boundaries = place_boundaries(trace, &index, cons)?;
    let mut a = GlobalIterationAssignment {
        workers: trace.header.workers,
        events: trace.events.len(),
        boundary_times_ns: boundaries.iter().map(|&c| trace.events[c].time_ns()).collect(),
        membership: vec![BTreeSet::new(); boundaries.len() + 1],
        boundaries,
        updates: Vec::new(),
    };
    for u in &index.updates {
        let Some(end) = u.end else { continue };
        let slot = UpdateSlot {
            worker: u.worker,
            iter: u.iter,
            start_event: u.start,
            end_event: end,
            start_slot: a.slot_of(u.start),
            finish_slot: a.slot_of(end),
        };
        a.membership[slot.finish_slot].insert(u.worker);
        a.updates.push(slot);
    }
    Ok(a)
}

/// Smallest ω with `k ∈ 𝒜_ν ∪ … ∪ 𝒜_{max(ν−ω+1, 0)}` for all `k` and
/// `1 ≤ ν < membership.len()`; the initial point counts as an update just
/// before slot 0.
pub fn omega_from_membership(membership: &[BTreeSet<usize>], workers: usize) -> usize {
    let mut omega = 1;
    for k in 0..workers {
        let mut last: isize = -1;
        for (nu, set) in membership.iter().enumerate() {
            if set.contains(&k) {
                last = nu as isize;
            }
            if nu >= 1 {
                omega = omega.max((nu as isize - last + 1) as usize);
            }
        }
    }
    omega
}

/// Smallest ω such that every update satisfies
/// `max(φ − ω, 0) ≤ ν̄ < φ` with `φ` its output index.
pub fn omega_from_delays(updates: &[UpdateSlot]) -> usize {
    updates
        .iter()
        .map(|u| u.output_index() - u.start_slot)
        .max()
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OmegaReport {
    pub omega: usize,
    pub window: usize,
    pub delay: usize,
}

/// The final slot has no closing boundary (the run stopped inside it), so it
/// only enters through the delay bound of the updates finishing there.
pub fn measure_omega(a: &GlobalIterationAssignment) -> OmegaReport {
    let closed = &a.membership[..a.membership.len() - 1];
    let window = omega_from_membership(closed, a.workers);
    let delay = omega_from_delays(&a.updates);
    OmegaReport {
        omega: window.max(delay),
        window,
        delay,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleCheck {
    /// Every boundary sits where some worker is ready to start an x-update.
    pub ready_boundaries: bool,
    /// No boundary can be dropped without breaking the other rules.
    pub maximal_slots: bool,
    /// No worker finishes two x-updates inside one slot.
    pub single_finish: bool,
    /// No z block a worker reads changes between its start and the slot end,
    /// and the z it read equals the replayed snapshot.
    pub fresh_inputs: bool,
    pub problems: Vec<String>,
}

impl RuleCheck {
    pub fn all(&self) -> bool {
        self.ready_boundaries && self.maximal_slots && self.single_finish && self.fresh_inputs
    }
}

/// Worker view of z as listed in the trace header.
pub(crate) fn view_of(trace: &EventTrace, z: &[Vec<f64>], k: usize) -> Vec<f64> {
    let blocks = &trace.header.blocks[k];
    let len = blocks.iter().map(|b| b.2).max().unwrap_or(0);
    let mut v = vec![0.0; len];
    for &(e, start, end) in blocks {
        v[start..end].copy_from_slice(&z[e]);
    }
    v
}

/// z at every boundary: `z^0` initial, `z^ν` just before boundary `ν`, and
/// the final value as `z^{S+1}`.
pub(crate) fn z_snapshots(trace: &EventTrace, a: &GlobalIterationAssignment) -> Vec<Vec<Vec<f64>>> {
    let mut z = trace.header.z0.clone();
    let mut out = Vec::with_capacity(a.boundaries.len() + 2);
    out.push(z.clone());
    let mut next = 0;
    for (i, ev) in trace.events.iter().enumerate() {
        while next < a.boundaries.len() && a.boundaries[next] == i {
            out.push(z.clone());
            next += 1;
        }
        if let Event::ZUpdate { edge, z: block, .. } = ev {
            z[*edge] = block.clone();
        }
    }
    while next < a.boundaries.len() {
        out.push(z.clone());
        next += 1;
    }
    out.push(z);
    out
}

/// Checks the four counter rules directly on an assignment.
pub fn check_rules(trace: &EventTrace, a: &GlobalIterationAssignment) -> Result<RuleCheck, AnalysisError> {
    let index = index_trace(trace)?;
    let mut problems = Vec::new();
    let cands: BTreeSet<usize> = index.candidates.iter().copied().collect();
    let ready_boundaries = a.boundaries.iter().all(|c| cands.contains(c))
        && a.boundaries.windows(2).all(|w| w[0] < w[1]);
    if !ready_boundaries {
        problems.push("a boundary is not at a ready event".into());
    }

    let cons = constraints(&index);
    let mut maximal_slots = true;
    for (&(lo, hi), (_, n)) in cons.iter().zip(stab_counts(&a.boundaries, &cons)) {
        if n == 0 {
            maximal_slots = false;
            problems.push(format!("no boundary between events {lo} and {hi}"));
        }
    }
    for i in removable(&a.boundaries, &cons) {
        maximal_slots = false;
        problems.push(format!("boundary {} is removable", a.boundaries[i]));
    }

    let mut single_finish = true;
    let mut seen = BTreeSet::new();
    for u in &a.updates {
        if !seen.insert((u.worker, u.finish_slot)) {
            single_finish = false;
            problems.push(format!("worker {} finishes twice in slot {}", u.worker, u.finish_slot));
        }
    }

    let mut fresh_inputs = true;
    for u in &index.updates {
        if let Some(r) = next_incident_z_update(&index, u.worker, u.start) {
            if a.slot_of(r) <= a.slot_of(u.start) {
                fresh_inputs = false;
                problems.push(format!(
                    "worker {} reads z changed at event {r} inside its start slot",
                    u.worker
                ));
            }
        }
    }
    let snaps = z_snapshots(trace, a);
    for u in &a.updates {
        let view = view_of(trace, &snaps[u.start_slot + 1], u.worker);
        if payload_digest([view.as_slice()]) != trace.events[u.start_event].digest() {
            fresh_inputs = false;
            problems.push(format!(
                "worker {} iteration {} read a z other than the slot-end snapshot",
                u.worker, u.iter
            ));
        }
    }
    Ok(RuleCheck {
        ready_boundaries,
        maximal_slots,
        single_finish,
        fresh_inputs,
        problems,
    })
}
