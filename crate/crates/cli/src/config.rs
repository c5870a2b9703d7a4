//! Flat `key = value` experiment configs.
//!
//! One entry per line, `#` starts a comment. A bracketed value
//! `key = [a, b, c]` declares a sweep axis; whitespace-separated values
//! without brackets (`singular_values = 3 2 1`) are plain vectors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use lowrank_lab::problem::{theory_parameters, TheoryConstants};
use lowrank_lab::Instance;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Every accepted key. Unknown keys are rejected so typos fail loudly.
pub const KEYS: &[&str] = &[
    "m",
    "n",
    "d",
    "singular_values",
    "sigma_d",
    "kappa",
    "mode",
    "epsilon",
    "eta",
    "k_epsilon",
    "k_eta",
    "c",
    "e_b",
    "k_b",
    "lambda",
    "compare_lambda",
    "seed",
    "replicates",
    "t_max",
    "delta",
    "record_every",
    "snapshot_every",
    "t_end",
    "dt",
    "samples",
    "d_min",
    "d_max",
    "betas",
    "out_dir",
];

/// Keys that may carry a sweep axis.
pub const AXIS_KEYS: &[&str] = &[
    "seed", "delta", "eta", "epsilon", "sigma_d", "kappa", "lambda", "d", "m", "n",
];

/// Keys left out of the hash: they say where artifacts go, not what they
/// contain.
const UNHASHED: &[&str] = &["out_dir"];

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    One(String),
    Axis(Vec<String>),
}

/// Parsed config text before typing, with command-line overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, Value>,
    pub override_theory: bool,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| CliError::Validation(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(at(format!("unknown key {key:?}")));
            }
            if value.is_empty() {
                return Err(at(format!("empty value for {key}")));
            }
            let value = if let Some(inner) = value.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| at(format!("unclosed list for {key}")))?;
                let items: Vec<String> = inner
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect();
                if items.is_empty() {
                    return Err(at(format!("empty list for {key}")));
                }
                if !AXIS_KEYS.contains(&key) {
                    return Err(at(format!("{key} cannot be swept")));
                }
                Value::Axis(items)
            } else {
                Value::One(value.split_whitespace().collect::<Vec<_>>().join(" "))
            };
            if entries.insert(key.to_string(), value).is_some() {
                return Err(at(format!("duplicate key {key}")));
            }
        }
        Ok(Self {
            entries,
            override_theory: false,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.entries
                .insert("seed".into(), Value::One(s.to_string()));
        }
        self
    }

    pub fn with_override(mut self, on: bool) -> Self {
        self.override_theory = on;
        self
    }

    /// Sorted `key = value` lines; the hash input.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            if UNHASHED.contains(&k.as_str()) {
                continue;
            }
            match v {
                Value::One(s) => writeln!(out, "{k} = {s}"),
                Value::Axis(items) => writeln!(out, "{k} = [{}]", items.join(", ")),
            }
            .expect("writing to a String");
        }
        if self.override_theory {
            out.push_str("override_theory = true\n");
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn axes(&self) -> Vec<(&str, &[String])> {
        self.entries
            .iter()
            .filter_map(|(k, v)| match v {
                Value::Axis(items) => Some((k.as_str(), items.as_slice())),
                Value::One(_) => None,
            })
            .collect()
    }

    pub fn out_dir(&self) -> Option<String> {
        match self.entries.get("out_dir") {
            Some(Value::One(s)) => Some(s.clone()),
            _ => None,
        }
    }

    /// Cartesian product of the axes in key order, last key fastest. Each
    /// point lists its axis assignments.
    pub fn grid(&self) -> Vec<Vec<(String, String)>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, items) in self.axes() {
            points = points
                .into_iter()
                .flat_map(|p| {
                    items.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.to_string(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        points
    }

    /// Typed config with every axis pinned to the point's values.
    pub fn at(&self, point: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
        let mut flat: BTreeMap<&str, &str> = BTreeMap::new();
        for (k, v) in &self.entries {
            if let Value::One(s) = v {
                flat.insert(k, s);
            }
        }
        for (k, v) in point {
            flat.insert(k, v);
        }
        ExperimentConfig::from_flat(&flat, self.override_theory)
    }

    /// Typed config for commands that do not sweep.
    pub fn single(&self) -> Result<ExperimentConfig, CliError> {
        if let Some((key, _)) = self.axes().first() {
            return Err(CliError::Validation(format!(
                "{key} is a sweep axis; use the sweep command"
            )));
        }
        self.at(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Theory,
    Practical,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Spectrum {
    Explicit(Vec<f64>),
    Geometric { sigma_d: f64, kappa: f64 },
}

/// One fully specified experiment.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExperimentConfig {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub spectrum: Option<Spectrum>,
    pub mode: Mode,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
    pub k_epsilon: f64,
    pub k_eta: f64,
    pub c: f64,
    pub e_b: Option<f64>,
    pub k_b: f64,
    pub lambda: f64,
    pub compare_lambda: Option<f64>,
    pub seed: u64,
    pub replicates: usize,
    pub t_max: Option<usize>,
    /// Target loss in units of `σ_d²`.
    pub delta: f64,
    pub record_every: usize,
    pub snapshot_every: Option<usize>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub samples: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub betas: Vec<f64>,
}

fn parse<T: std::str::FromStr>(key: &str, s: &str) -> Result<T, CliError> {
    s.parse()
        .map_err(|_| CliError::Validation(format!("{key}: cannot parse {s:?}")))
}

fn vector(key: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| parse(key, t))
        .collect()
}

impl ExperimentConfig {
    fn from_flat(flat: &BTreeMap<&str, &str>, override_theory: bool) -> Result<Self, CliError> {
        fn opt<T: std::str::FromStr>(
            flat: &BTreeMap<&str, &str>,
            key: &str,
        ) -> Result<Option<T>, CliError> {
            flat.get(key).map(|s| parse(key, s)).transpose()
        }
        let mode = match flat.get("mode").copied().unwrap_or("theory") {
            "theory" => Mode::Theory,
            "practical" => Mode::Practical,
            other => {
                return Err(CliError::Validation(format!(
                    "mode must be theory or practical, got {other:?}"
                )))
            }
        };
        let spectrum = match (
            flat.get("singular_values"),
            flat.get("sigma_d"),
            flat.get("kappa"),
        ) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(CliError::Validation(
                    "give singular_values or sigma_d/kappa, not both".into(),
                ))
            }
            (Some(s), None, None) => Some(Spectrum::Explicit(vector("singular_values", s)?)),
            (None, None, None) => None,
            (None, sd, k) => Some(Spectrum::Geometric {
                sigma_d: sd.map(|s| parse("sigma_d", s)).transpose()?.unwrap_or(1.0),
                kappa: k.map(|s| parse("kappa", s)).transpose()?.unwrap_or(1.0),
            }),
        };
        let cfg = Self {
            m: opt(flat, "m")?,
            n: opt(flat, "n")?,
            d: opt(flat, "d")?,
            spectrum,
            mode,
            epsilon: opt(flat, "epsilon")?,
            eta: opt(flat, "eta")?,
            k_epsilon: opt(flat, "k_epsilon")?.unwrap_or(1.0),
            k_eta: opt(flat, "k_eta")?.unwrap_or(1.0),
            c: opt(flat, "c")?.unwrap_or(lowrank_lab::problem::DEFAULT_C),
            e_b: opt(flat, "e_b")?,
            k_b: opt(flat, "k_b")?.unwrap_or(1.0),
            lambda: opt(flat, "lambda")?.unwrap_or(0.0),
            compare_lambda: opt(flat, "compare_lambda")?,
            seed: opt(flat, "seed")?.unwrap_or(0),
            replicates: opt(flat, "replicates")?.unwrap_or(1),
            t_max: opt(flat, "t_max")?,
            delta: opt(flat, "delta")?.unwrap_or(1e-10),
            record_every: opt(flat, "record_every")?.unwrap_or(1),
            snapshot_every: opt(flat, "snapshot_every")?,
            t_end: opt(flat, "t_end")?,
            dt: opt(flat, "dt")?,
            samples: opt(flat, "samples")?.unwrap_or(1000),
            d_min: opt(flat, "d_min")?.unwrap_or(1),
            d_max: opt(flat, "d_max")?.unwrap_or(6),
            betas: flat
                .get("betas")
                .map(|s| vector("betas", s))
                .transpose()?
                .unwrap_or(vec![0.25, 0.5, 0.75]),
        };
        cfg.validate(override_theory)?;
        Ok(cfg)
    }

    fn validate(&self, override_theory: bool) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Validation(msg.into()));
        let explicit = self.epsilon.is_some() || self.eta.is_some();
        if self.mode == Mode::Theory && explicit && !override_theory {
            return bad(
                "theory mode sets epsilon and eta itself; pass --override-theory to replace them",
            );
        }
        if self.mode == Mode::Practical && (self.epsilon.is_none() || self.eta.is_none()) {
            return bad("practical mode needs both epsilon and eta");
        }
        if self.record_every == 0 || self.replicates == 0 || self.snapshot_every == Some(0) {
            return bad("record_every, replicates and snapshot_every must be positive");
        }
        if !(self.delta > 0.0) {
            return bad("delta must be positive");
        }
        if !(self.lambda >= 0.0) || self.compare_lambda.is_some_and(|l| !(l >= 0.0)) {
            return bad("lambda must be non-negative");
        }
        if !(self.c > 0.0 && self.k_b > 0.0 && self.k_epsilon > 0.0 && self.k_eta > 0.0) {
            return bad("c, k_b, k_epsilon and k_eta must be positive");
        }
        Ok(())
    }

    /// The spectrum as a list, with `d` taken from the config when the
    /// spectrum is generated.
    pub fn singular_values(&self) -> Result<Vec<f64>, CliError> {
        match &self.spectrum {
            None => Err(CliError::Validation(
                "missing singular_values or sigma_d/kappa".into(),
            )),
            Some(Spectrum::Explicit(sv)) => {
                if self.d.is_some_and(|d| d != sv.len()) {
                    return Err(CliError::Validation(
                        "d disagrees with the number of singular values".into(),
                    ));
                }
                Ok(sv.clone())
            }
            Some(Spectrum::Geometric { sigma_d, kappa }) => {
                let d = self
                    .d
                    .ok_or_else(|| CliError::Validation("missing d".into()))?;
                // same spacing the instance generator uses
                let probe = Instance::geometric(d, d, d, *sigma_d, *kappa)?;
                Ok(probe.singular_values().to_vec())
            }
        }
    }

    pub fn instance(&self) -> Result<Instance, CliError> {
        let sv = self.singular_values()?;
        let m = self
            .m
            .ok_or_else(|| CliError::Validation("missing m".into()))?;
        let n = self
            .n
            .ok_or_else(|| CliError::Validation("missing n".into()))?;
        Ok(Instance::new(m, n, sv.len(), sv)?)
    }

    /// `(ε, η)` after applying the mode rules.
    pub fn step_parameters(&self, inst: &Instance) -> (f64, f64) {
        let (eps, eta) = theory_parameters(
            inst,
            TheoryConstants {
                k_epsilon: self.k_epsilon,
                k_eta: self.k_eta,
            },
        );
        (self.epsilon.unwrap_or(eps), self.eta.unwrap_or(eta))
    }

    pub fn e_b(&self) -> f64 {
        self.e_b.unwrap_or(2.0 * self.c)
    }

    pub fn delta_abs(&self, inst: &Instance) -> f64 {
        self.delta * inst.sigma_d() * inst.sigma_d()
    }

    /// Configured iteration cap, or `200/(ησ_d)` steps.
    pub fn t_max(&self, inst: &Instance, eta: f64) -> usize {
        self.t_max
            .unwrap_or_else(|| (200.0 / (eta * inst.sigma_d())).ceil().min(1e9) as usize)
    }
}
