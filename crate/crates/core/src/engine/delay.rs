use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("invalid delay distribution `{0}`")]
    Syntax(String),
    #[error("invalid delay parameters: {0}")]
    Parameters(String),
}

/// Delay distribution in milliseconds. Lognormal parameters describe the
/// underlying normal of `ln(delay_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum DelayDist {
    Constant { ms: f64 },
    Uniform { lo: f64, hi: f64 },
    Lognormal { mu: f64, sigma: f64 },
}

impl DelayDist {
    pub const ZERO: DelayDist = DelayDist::Constant { ms: 0.0 };

    pub fn validate(&self) -> Result<(), DelayError> {
        let ok = match *self {
            DelayDist::Constant { ms } => ms >= 0.0 && ms.is_finite(),
            DelayDist::Uniform { lo, hi } => lo >= 0.0 && hi >= lo && hi.is_finite(),
            DelayDist::Lognormal { mu, sigma } => mu.is_finite() && sigma >= 0.0 && sigma.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(DelayError::Parameters(self.to_string()))
        }
    }

    /// One sample in whole nanoseconds.
    pub fn sample_ns<R: Rng>(&self, rng: &mut R) -> u64 {
        let ms = match *self {
            DelayDist::Constant { ms } => ms,
            DelayDist::Uniform { lo, hi } => {
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    lo
                }
            }
            DelayDist::Lognormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map(|d| d.sample(rng))
                .unwrap_or(0.0),
        };
        (ms.max(0.0) * 1e6).round().min(u64::MAX as f64 / 4.0) as u64
    }
}

impl fmt::Display for DelayDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DelayDist::Constant { ms } => write!(f, "constant({ms})"),
            DelayDist::Uniform { lo, hi } => write!(f, "uniform({lo},{hi})"),
            DelayDist::Lognormal { mu, sigma } => write!(f, "lognormal({mu},{sigma})"),
        }
    }
}

/// Parses `constant(ms)`, `uniform(lo,hi)`, `lognormal(mu,sigma)` or a bare
/// number of milliseconds.
impl FromStr for DelayDist {
    type Err = DelayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let syntax = || DelayError::Syntax(s.to_string());
        if let Ok(ms) = s.parse::<f64>() {
            let d = DelayDist::Constant { ms };
            d.validate()?;
            return Ok(d);
        }
        let open = s.find('(').ok_or_else(syntax)?;
        if !s.ends_with(')') {
            return Err(syntax());
        }
        let name = s[..open].trim();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| syntax())?;
        let d = match (name, args.as_slice()) {
            ("constant", [ms]) => DelayDist::Constant { ms: *ms },
            ("uniform", [lo, hi]) => DelayDist::Uniform { lo: *lo, hi: *hi },
            ("lognormal", [mu, sigma]) => DelayDist::Lognormal {
                mu: *mu,
                sigma: *sigma,
            },
            _ => return Err(syntax()),
        };
        d.validate()?;
        Ok(d)
    }
}

/// Per-worker compute delays and per-directed-link communication delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub compute_default: DelayDist,
    pub compute: BTreeMap<usize, DelayDist>,
    pub link_default: DelayDist,
    /// Keyed by `(sender, receiver)`.
    pub link: BTreeMap<(usize, usize), DelayDist>,
    pub seed: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self::zero(0)
    }
}

impl DelayModel {
    pub fn zero(seed: u64) -> Self {
        Self::uniform_model(DelayDist::ZERO, DelayDist::ZERO, seed)
    }

    pub fn uniform_model(compute: DelayDist, link: DelayDist, seed: u64) -> Self {
        Self {
            compute_default: compute,
            compute: BTreeMap::new(),
            link_default: link,
            link: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_compute(mut self, worker: usize, dist: DelayDist) -> Self {
        self.compute.insert(worker, dist);
        self
    }

    pub fn with_link(mut self, from: usize, to: usize, dist: DelayDist) -> Self {
        self.link.insert((from, to), dist);
        self
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        self.compute_default.validate()?;
        self.link_default.validate()?;
        for d in self.compute.values().chain(self.link.values()) {
            d.validate()?;
        }
        Ok(())
    }

    pub fn compute_dist(&self, worker: usize) -> DelayDist {
        self.compute.get(&worker).copied().unwrap_or(self.compute_default)
    }

    pub fn link_dist(&self, from: usize, to: usize) -> DelayDist {
        self.link.get(&(from, to)).copied().unwrap_or(self.link_default)
    }
}

/// Independent ChaCha streams per worker and per directed link, so changing
/// one distribution leaves every other sample sequence untouched.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    model: DelayModel,
    workers: usize,
    compute: Vec<ChaCha8Rng>,
    links: BTreeMap<(usize, usize), ChaCha8Rng>,
}

impl DelaySampler {
    pub fn new(model: &DelayModel, workers: usize) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            rng.set_stream(id);
            rng
        };
        Self {
            model: model.clone(),
            workers,
            compute: (0..workers).map(|k| stream(k as u64)).collect(),
            links: BTreeMap::new(),
        }
        .with_link_streams(stream)
    }

    fn with_link_streams(mut self, stream: impl Fn(u64) -> ChaCha8Rng) -> Self {
        let n = self.workers;
        for from in 0..n {
            for to in 0..n {
                if from != to {
                    let id = (n + from * n + to) as u64;
                    self.links.insert((from, to), stream(id));
                }
            }
        }
        self
    }

    pub fn compute_ns(&mut self, worker: usize) -> u64 {
        let dist = self.model.compute_dist(worker);
        dist.sample_ns(&mut self.compute[worker])
    }

    pub fn link_ns(&mut self, from: usize, to: usize) -> u64 {
        let dist = self.model.link_dist(from, to);
        let rng = self.links.get_mut(&(from, to)).expect("link stream exists");
        dist.sample_ns(rng)
    }
}
