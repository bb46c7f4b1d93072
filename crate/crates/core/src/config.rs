//! Key-value run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! ignored. Keys are case-sensitive and unknown keys are errors. Relative
//! paths in a file resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::engine::{DelayDist, DelayModel, StoppingRule};
use crate::io::Location;
use crate::kernel::{AdmmParams, LambdaBox};
use crate::opf::{StartMode, DEFAULT_BETA_MINUS, DEFAULT_BETA_PLUS};
use crate::solver::SolverConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Invalid { origin: String, message: String },
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProblemSpec {
    /// Quadratic consensus chain with one target per region.
    Toy { targets: Vec<f64> },
    /// Double well against a quadratic with the given target.
    Nonconvex { target: f64 },
    Opf { case: PathBuf, partition: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub mode: Mode,
    pub params: AdmmParams,
    pub delays: DelayModel,
    pub stop: StoppingRule,
    pub solver: SolverConfig,
    pub start: StartMode,
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub output: PathBuf,
    pub kkt_tol: f64,
    /// Compare against the centralized optimum.
    pub baseline: bool,
    /// `(C, M₁)` for the multiplier-change check.
    pub lambda_constants: Option<(f64, f64)>,
    /// `(γ, M₁, M₂, C)` for the parameter bounds.
    pub theory_constants: Option<(f64, f64, f64, f64)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::Toy {
                targets: vec![0.0, 2.0],
            },
            mode: Mode::Async,
            params: AdmmParams::new(5.0, 0.0, 0.1),
            delays: DelayModel::zero(0),
            stop: StoppingRule::default(),
            solver: SolverConfig::default(),
            start: StartMode::Flat,
            beta_minus: DEFAULT_BETA_MINUS,
            beta_plus: DEFAULT_BETA_PLUS,
            output: PathBuf::from("async-admm-out"),
            kkt_tol: 1e-3,
            baseline: false,
            lambda_constants: None,
            theory_constants: None,
        }
    }
}

/// Every key the grammar accepts, besides `compute_delay.<k>` and
/// `link_delay.<from>.<to>`.
pub const KEYS: &[&str] = &[
    "problem",
    "targets",
    "target",
    "case",
    "partition",
    "mode",
    "rho",
    "alpha",
    "p",
    "lambda_min",
    "lambda_max",
    "compute_delay",
    "link_delay",
    "seed",
    "tol",
    "max_iters",
    "max_time_ms",
    "start",
    "beta_minus",
    "beta_plus",
    "output",
    "kkt_tol",
    "baseline",
    "solver.max_iters",
    "solver.grad_tol",
    "solver.constraint_tol",
    "solver.penalty_init",
    "solver.penalty_growth",
    "solver.inner_max_iters",
    "gamma",
    "m1",
    "m2",
    "c",
];

/// Raw assignments with where they came from, later ones winning.
#[derive(Debug, Clone, Default)]
pub struct Assignments {
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: String,
    base: Option<PathBuf>,
}

impl Assignments {
    /// Parses the file grammar. `name` labels diagnostics.
    pub fn parse(text: &str, name: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut out = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let at = |column: usize| format!("{name}: {}", Location { line: i + 1, column });
            let Some(eq) = line.find('=') else {
                let column = line.len() - line.trim_start().len() + 1;
                return Err(ConfigError::Invalid {
                    origin: at(column),
                    message: "expected `key = value`".into(),
                });
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            let key_col = line.len() - line.trim_start().len() + 1;
            if key.is_empty() {
                return Err(ConfigError::Invalid {
                    origin: at(key_col),
                    message: "missing key".into(),
                });
            }
            let value_col = eq + 2 + (line[eq + 1..].len() - line[eq + 1..].trim_start().len());
            check_key(key).map_err(|message| ConfigError::Invalid {
                origin: at(key_col),
                message,
            })?;
            out.entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    origin: at(value_col),
                    base: base.map(Path::to_path_buf),
                },
            );
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string(), path.parent())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let origin = format!("--set {assignment}");
        let (key, value) = assignment.split_once('=').ok_or_else(|| ConfigError::Invalid {
            origin: origin.clone(),
            message: "expected `key=value`".into(),
        })?;
        let key = key.trim();
        check_key(key).map_err(|message| ConfigError::Invalid {
            origin: origin.clone(),
            message,
        })?;
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.trim().to_string(),
                origin,
                base: None,
            },
        );
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn into_config(self) -> Result<RunConfig, ConfigError> {
        RunConfig::from_assignments(&self)
    }
}

fn check_key(key: &str) -> Result<(), String> {
    if KEYS.contains(&key) {
        return Ok(());
    }
    if let Some(k) = key.strip_prefix("compute_delay.") {
        return k.parse::<usize>().map(|_| ()).map_err(|_| format!("bad worker index in `{key}`"));
    }
    if let Some(rest) = key.strip_prefix("link_delay.") {
        let ok = rest
            .split_once('.')
            .is_some_and(|(a, b)| a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok());
        return if ok { Ok(()) } else { Err(format!("expected `link_delay.<from>.<to>`, got `{key}`")) };
    }
    Err(format!("unknown key `{key}`"))
}

impl RunConfig {
    pub fn from_assignments(a: &Assignments) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let err = |key: &str, message: String| ConfigError::Invalid {
            origin: a.entries[key].origin.clone(),
            message: format!("`{key}`: {message}"),
        };
        let num = |key: &str| -> Result<Option<f64>, ConfigError> {
            a.get(key)
                .map(|v| {
                    v.parse::<f64>()
                        .ok()
                        .filter(|x| !x.is_nan())
                        .ok_or_else(|| err(key, format!("expected a number, got `{v}`")))
                })
                .transpose()
        };
        let int = |key: &str| -> Result<Option<u64>, ConfigError> {
            a.get(key)
                .map(|v| v.parse::<u64>().map_err(|_| err(key, format!("expected an integer, got `{v}`"))))
                .transpose()
        };
        let path = |key: &str| -> Option<PathBuf> {
            let e = a.entries.get(key)?;
            let p = PathBuf::from(&e.value);
            Some(match &e.base {
                Some(base) if p.is_relative() => base.join(p),
                _ => p,
            })
        };
        let dist = |key: &str| -> Result<Option<DelayDist>, ConfigError> {
            a.get(key)
                .map(|v| DelayDist::from_str(v).map_err(|e| err(key, e.to_string())))
                .transpose()
        };

        let kind = a.get("problem").unwrap_or(if a.get("case").is_some() { "opf" } else { "toy" });
        c.problem = match kind {
            "toy" => {
                let targets = match a.get("targets") {
                    Some(v) => v
                        .split(',')
                        .map(|t| t.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| err("targets", format!("expected comma-separated numbers, got `{v}`")))?,
                    None => vec![0.0, 2.0],
                };
                if targets.len() < 2 {
                    let key = if a.get("targets").is_some() { "targets" } else { "problem" };
                    return Err(err(key, "the toy needs at least two targets".into()));
                }
                ProblemSpec::Toy { targets }
            }
            "nonconvex" => ProblemSpec::Nonconvex {
                target: num("target")?.unwrap_or(0.5),
            },
            "opf" => {
                let missing = |key: &str| ConfigError::Invalid {
                    origin: a
                        .entries
                        .get("problem")
                        .or_else(|| a.entries.get("case"))
                        .map_or_else(|| "config".to_string(), |e| e.origin.clone()),
                    message: format!("an OPF run needs `{key}`"),
                };
                ProblemSpec::Opf {
                    case: path("case").ok_or_else(|| missing("case"))?,
                    partition: path("partition").ok_or_else(|| missing("partition"))?,
                }
            }
            other => return Err(err("problem", format!("expected toy, nonconvex or opf, got `{other}`"))),
        };

        if let Some(m) = a.get("mode") {
            c.mode = match m {
                "sync" => Mode::Sync,
                "async" => Mode::Async,
                _ => return Err(err("mode", format!("expected sync or async, got `{m}`"))),
            };
        }
        if let Some(s) = a.get("start") {
            c.start = match s {
                "flat" => StartMode::Flat,
                "warm" => StartMode::Warm,
                _ => return Err(err("start", format!("expected flat or warm, got `{s}`"))),
            };
        }
        if let Some(v) = num("rho")? {
            c.params.rho = v;
        }
        if let Some(v) = num("alpha")? {
            c.params.alpha = v;
        }
        if let Some(v) = num("p")? {
            c.params.p = v;
        }
        let default_box = LambdaBox::default();
        c.params.lambda_box = LambdaBox {
            lower: num("lambda_min")?.unwrap_or(default_box.lower),
            upper: num("lambda_max")?.unwrap_or(default_box.upper),
        };
        if c.mode == Mode::Sync {
            c.params.p = 1.0;
        }
        let checks: [(&str, bool, &str); 3] = [
            ("rho", c.params.rho > 0.0 && c.params.rho.is_finite(), "must be positive and finite"),
            ("alpha", c.params.alpha >= 0.0 && c.params.alpha.is_finite(), "must be nonnegative and finite"),
            ("p", c.params.p > 0.0 && c.params.p <= 1.0, "must lie in (0, 1]"),
        ];
        for (key, ok, message) in checks {
            if !ok {
                return Err(err(key, message.into()));
            }
        }
        if let Err(e) = c.params.validate() {
            let key = if a.get("lambda_min").is_some() { "lambda_min" } else { "lambda_max" };
            return Err(err(key, e.to_string()));
        }

        c.delays.seed = int("seed")?.unwrap_or(0);
        if let Some(d) = dist("compute_delay")? {
            c.delays.compute_default = d;
        }
        if let Some(d) = dist("link_delay")? {
            c.delays.link_default = d;
        }
        for key in a.entries.keys() {
            if let Some(k) = key.strip_prefix("compute_delay.") {
                let d = dist(key)?.expect("present");
                c.delays.compute.insert(k.parse().expect("checked"), d);
            } else if let Some(rest) = key.strip_prefix("link_delay.") {
                let (from, to) = rest.split_once('.').expect("checked");
                let d = dist(key)?.expect("present");
                c.delays.link.insert((from.parse().expect("checked"), to.parse().expect("checked")), d);
            }
        }

        if let Some(v) = num("tol")? {
            if !(v > 0.0) {
                return Err(err("tol", "must be positive".into()));
            }
            c.stop.tol = v;
        }
        if let Some(v) = int("max_iters")? {
            if v == 0 {
                return Err(err("max_iters", "must be positive".into()));
            }
            c.stop.max_iters = v;
        }
        if let Some(v) = num("max_time_ms")? {
            if !(v > 0.0) {
                return Err(err("max_time_ms", "must be positive".into()));
            }
            c.stop.max_time_ms = Some(v);
        }

        let s = &mut c.solver;
        if let Some(v) = int("solver.max_iters")? {
            s.max_iters = v as usize;
        }
        if let Some(v) = int("solver.inner_max_iters")? {
            s.inner_max_iters = v as usize;
        }
        if let Some(v) = num("solver.grad_tol")? {
            s.grad_tol = v;
        }
        if let Some(v) = num("solver.constraint_tol")? {
            s.constraint_tol = v;
        }
        if let Some(v) = num("solver.penalty_init")? {
            s.penalty_init = v;
        }
        if let Some(v) = num("solver.penalty_growth")? {
            s.penalty_growth = v;
        }
        c.solver.validate().map_err(|e| ConfigError::Invalid {
            origin: a
                .entries
                .iter()
                .find(|(k, _)| k.starts_with("solver."))
                .map_or_else(|| "config".to_string(), |(_, e)| e.origin.clone()),
            message: e.to_string(),
        })?;

        if let Some(v) = num("beta_minus")? {
            c.beta_minus = v;
        }
        if let Some(v) = num("beta_plus")? {
            c.beta_plus = v;
        }
        if let Some(p) = path("output") {
            c.output = p;
        }
        if let Some(v) = num("kkt_tol")? {
            if !(v > 0.0) {
                return Err(err("kkt_tol", "must be positive".into()));
            }
            c.kkt_tol = v;
        }
        if let Some(v) = a.get("baseline") {
            c.baseline = match v {
                "true" => true,
                "false" => false,
                _ => return Err(err("baseline", format!("expected true or false, got `{v}`"))),
            };
        }
        let (gamma, m1, m2, cc) = (num("gamma")?, num("m1")?, num("m2")?, num("c")?);
        if let (Some(cc), Some(m1)) = (cc, m1) {
            c.lambda_constants = Some((cc, m1));
        }
        if let (Some(g), Some(m1), Some(m2), Some(cc)) = (gamma, m1, m2, cc) {
            c.theory_constants = Some((g, m1, m2, cc));
        }
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Assignments::parse(text, "config", None)?.into_config()
    }
}
