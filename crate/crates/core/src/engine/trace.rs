use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TRACE_FORMAT: &str = "async-admm-trace";
pub const TRACE_VERSION: u32 = 1;

/// Short SHA-256 digest of a float payload, taken over the little-endian bits.
pub fn payload_digest<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        for v in part {
            hasher.update(v.to_bits().to_le_bytes());
        }
    }
    let out = hasher.finalize();
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub k: usize,
    pub l: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub workers: usize,
    pub rho: f64,
    pub alpha: f64,
    pub p: f64,
    pub seed: u64,
    pub edges: Vec<EdgeInfo>,
    /// Row ranges of each worker's boundary map per incident edge: `(edge, start, end)`.
    pub blocks: Vec<Vec<(usize, usize, usize)>>,
    pub x0: Vec<Vec<f64>>,
    pub z0: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub id: u64,
    pub to: usize,
    pub edge: usize,
    pub sent_ns: u64,
    pub arrives_ns: u64,
    pub ax: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// One trace event. `iter` is the sender's or updater's local iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    ComputeStart {
        worker: usize,
        iter: u64,
        t_ns: u64,
        digest: String,
    },
    ComputeEnd {
        worker: usize,
        iter: u64,
        t_ns: u64,
        x: Vec<f64>,
        lambda: Vec<f64>,
        digest: String,
    },
    Send {
        worker: usize,
        iter: u64,
        t_ns: u64,
        msg: MessageRecord,
        digest: String,
    },
    Receive {
        worker: usize,
        iter: u64,
        t_ns: u64,
        msg_id: u64,
        from: usize,
        digest: String,
    },
    ZUpdate {
        worker: usize,
        iter: u64,
        t_ns: u64,
        edge: usize,
        /// Iterations of the low- and high-index side that produced the block.
        stamp: (u64, u64),
        z: Vec<f64>,
        digest: String,
    },
}

impl Event {
    pub fn worker(&self) -> usize {
        match self {
            Event::ComputeStart { worker, .. }
            | Event::ComputeEnd { worker, .. }
            | Event::Send { worker, .. }
            | Event::Receive { worker, .. }
            | Event::ZUpdate { worker, .. } => *worker,
        }
    }

    pub fn iter(&self) -> u64 {
        match self {
            Event::ComputeStart { iter, .. }
            | Event::ComputeEnd { iter, .. }
            | Event::Send { iter, .. }
            | Event::Receive { iter, .. }
            | Event::ZUpdate { iter, .. } => *iter,
        }
    }

    pub fn time_ns(&self) -> u64 {
        match self {
            Event::ComputeStart { t_ns, .. }
            | Event::ComputeEnd { t_ns, .. }
            | Event::Send { t_ns, .. }
            | Event::Receive { t_ns, .. }
            | Event::ZUpdate { t_ns, .. } => *t_ns,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Event::ComputeStart { .. } => "compute_start",
            Event::ComputeEnd { .. } => "compute_end",
            Event::Send { .. } => "send",
            Event::Receive { .. } => "receive",
            Event::ZUpdate { .. } => "z_update",
        }
    }

    pub fn digest(&self) -> &str {
        match self {
            Event::ComputeStart { digest, .. }
            | Event::ComputeEnd { digest, .. }
            | Event::Send { digest, .. }
            | Event::Receive { digest, .. }
            | Event::ZUpdate { digest, .. } => digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub worker: usize,
    pub local_iter: u64,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Equality-constraint multipliers of the last local solve.
    #[serde(default)]
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub events: usize,
    pub status: String,
    pub end_ns: u64,
    pub final_states: Vec<FinalState>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub header: TraceHeader,
    pub events: Vec<Event>,
    pub footer: Option<TraceFooter>,
}

impl EventTrace {
    /// The x-vectors of every completed update of `worker`, in order.
    pub fn updates_of(&self, worker: usize) -> impl Iterator<Item = (u64, &[f64], &[f64])> + '_ {
        self.events.iter().filter_map(move |e| match e {
            Event::ComputeEnd {
                worker: w,
                iter,
                x,
                lambda,
                ..
            } if *w == worker => Some((*iter, x.as_slice(), lambda.as_slice())),
            _ => None,
        })
    }
}
