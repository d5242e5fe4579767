//! Scenario files.
//!
//! A scenario is a flat TOML document. `sensors`, `topology` and
//! `noise_variance` accept either one value or a list; the experiment runs
//! the cross product of all listed values.
//!
//! ```toml
//! id = "table1"
//! sensors = [200, 400, 800]
//! radius = 0.1
//! capacity_low = 50.0
//! capacity_high = 100.0
//! v_count = 5
//! topology = "star"
//! task_radius = 0.2
//! demand_low = 25.0
//! demand_high = 50.0
//! hop_bound = 20
//! replications = 50
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::radv::Topology;

/// Where the task centre is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterPolicy {
    /// Uniform on `[Δ, 1 − Δ]²`, so the task disk lies inside the unit square.
    #[default]
    Inset,
    /// Uniform on the unit square.
    Anywhere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Centralized least squares at the cloud.
    Ls,
    Admm,
    Rade,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ls => "ls",
            Algorithm::Admm => "admm",
            Algorithm::Rade => "rade",
        }
    }
}

fn one_or_many<'de, D, T>(deserializer: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(deserializer)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    })
}

fn default_noise_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Ls, Algorithm::Admm, Algorithm::Rade]
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn default_tolerance() -> f64 {
    1e-4
}

fn default_params() -> usize {
    5
}

fn default_measurements() -> usize {
    2
}

fn default_max_iters() -> u64 {
    100_000
}

fn default_estimator_slots() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,

    /// Swarm sizes `P`.
    #[serde(deserialize_with = "one_or_many")]
    pub sensors: Vec<usize>,
    pub radius: f64,
    pub capacity_low: f64,
    pub capacity_high: f64,

    pub v_count: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub topology: Vec<Topology>,
    pub task_radius: f64,
    pub demand_low: f64,
    pub demand_high: f64,
    pub hop_bound: usize,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default)]
    pub center_policy: CenterPolicy,
    /// Sensors that first receive the request.
    #[serde(default = "one_usize")]
    pub search_seeds: usize,
    /// Slot budget of each gossip phase; `10·P·log2 P` when absent.
    #[serde(default)]
    pub max_slots: Option<u64>,

    /// Parameter count `n`.
    #[serde(default = "default_params")]
    pub params: usize,
    /// Measurements per sensor `m`.
    #[serde(default = "default_measurements")]
    pub measurements: usize,
    /// Noise variances `σ²`.
    #[serde(default = "default_noise_grid", deserialize_with = "one_or_many")]
    pub noise_variance: Vec<f64>,
    #[serde(default = "default_tolerance")]
    pub eps_abs: f64,
    #[serde(default = "default_tolerance")]
    pub eps_rel: f64,
    #[serde(default = "one")]
    pub rho: f64,
    #[serde(default = "default_max_iters")]
    pub estimator_max_iters: u64,
    #[serde(default = "default_estimator_slots")]
    pub estimator_max_slots: u64,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,

    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
}

/// 1-based line of the first `key = ...` assignment in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

struct Problem {
    key: &'static str,
    message: String,
}

fn check(problems: &mut Vec<Problem>, ok: bool, key: &'static str, message: impl Into<String>) {
    if !ok {
        problems.push(Problem {
            key,
            message: message.into(),
        });
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let problems = scenario.problems();
        if problems.is_empty() {
            return Ok(scenario);
        }
        let lines: Vec<String> = problems
            .iter()
            .map(|p| match line_of(text, p.key) {
                Some(line) => format!("line {line}: {}: {}", p.key, p.message),
                None => format!("{}: {}", p.key, p.message),
            })
            .collect();
        Err(Error::Scenario(lines.join("\n")))
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            return Ok(());
        }
        let lines: Vec<String> = problems
            .iter()
            .map(|p| format!("{}: {}", p.key, p.message))
            .collect();
        Err(Error::Scenario(lines.join("\n")))
    }

    fn problems(&self) -> Vec<Problem> {
        let mut p = Vec::new();
        let positive = |x: f64| x > 0.0 && x.is_finite();
        let non_negative = |x: f64| x >= 0.0 && x.is_finite();
        check(&mut p, !self.id.is_empty(), "id", "must not be empty");
        check(
            &mut p,
            !self.sensors.is_empty() && self.sensors.iter().all(|&s| s >= 1),
            "sensors",
            "must be at least 1",
        );
        check(&mut p, positive(self.radius), "radius", "must be positive");
        check(
            &mut p,
            positive(self.capacity_low),
            "capacity_low",
            "must be positive",
        );
        check(
            &mut p,
            positive(self.capacity_high) && self.capacity_low <= self.capacity_high,
            "capacity_high",
            "must be at least capacity_low",
        );
        check(&mut p, self.v_count >= 1, "v_count", "must be at least 1");
        check(
            &mut p,
            !self.topology.is_empty(),
            "topology",
            "needs at least one value",
        );
        check(
            &mut p,
            non_negative(self.task_radius),
            "task_radius",
            "must be non-negative",
        );
        check(
            &mut p,
            positive(self.demand_low),
            "demand_low",
            "must be positive",
        );
        check(
            &mut p,
            positive(self.demand_high) && self.demand_low <= self.demand_high,
            "demand_high",
            "must be at least demand_low",
        );
        check(
            &mut p,
            self.hop_bound >= 1,
            "hop_bound",
            "must be at least 1",
        );
        check(
            &mut p,
            non_negative(self.alpha),
            "alpha",
            "must be non-negative",
        );
        check(
            &mut p,
            non_negative(self.beta),
            "beta",
            "must be non-negative",
        );
        check(
            &mut p,
            self.search_seeds >= 1 && self.sensors.iter().all(|&s| self.search_seeds <= s),
            "search_seeds",
            "must be between 1 and the swarm size",
        );
        check(
            &mut p,
            self.max_slots != Some(0),
            "max_slots",
            "must be positive",
        );
        check(&mut p, self.params >= 1, "params", "must be at least 1");
        check(
            &mut p,
            self.measurements >= 1,
            "measurements",
            "must be at least 1",
        );
        check(
            &mut p,
            !self.noise_variance.is_empty() && self.noise_variance.iter().all(|&v| non_negative(v)),
            "noise_variance",
            "must be non-negative",
        );
        check(
            &mut p,
            positive(self.eps_abs),
            "eps_abs",
            "must be positive",
        );
        check(
            &mut p,
            positive(self.eps_rel),
            "eps_rel",
            "must be positive",
        );
        check(&mut p, positive(self.rho), "rho", "must be positive");
        check(
            &mut p,
            self.estimator_max_iters >= 1,
            "estimator_max_iters",
            "must be at least 1",
        );
        check(
            &mut p,
            self.estimator_max_slots >= 1,
            "estimator_max_slots",
            "must be at least 1",
        );
        check(
            &mut p,
            self.replications >= 1,
            "replications",
            "must be at least 1",
        );
        p
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
id = "t"
sensors = 200
radius = 0.1
capacity_low = 50.0
capacity_high = 100.0
v_count = 5
topology = "star"
task_radius = 0.2
demand_low = 25.0
demand_high = 50.0
hop_bound = 20
replications = 3
"#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_toml_str(BASE).unwrap();
        assert_eq!(s.sensors, vec![200]);
        assert_eq!(s.topology, vec![Topology::Star]);
        assert_eq!(s.noise_variance, vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0]);
        assert_eq!((s.alpha, s.beta, s.rho), (1.0, 1.0, 1.0));
        assert_eq!(s.center_policy, CenterPolicy::Inset);
    }

    #[test]
    fn lists_are_accepted() {
        let text = BASE
            .replace("sensors = 200", "sensors = [200, 400]")
            .replace("topology = \"star\"", "topology = [\"star\", \"cycle\"]");
        let s = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s.sensors, vec![200, 400]);
        assert_eq!(s.topology, vec![Topology::Star, Topology::Cycle]);
    }

    #[test]
    fn missing_v_is_an_error() {
        let err = Scenario::from_toml_str(&BASE.replace("v_count = 5\n", "")).unwrap_err();
        assert!(err.to_string().contains("v_count"), "{err}");
    }

    #[test]
    fn zero_replications_reports_its_line() {
        let err = Scenario::from_toml_str(&BASE.replace("replications = 3", "replications = 0"))
            .unwrap_err();
        assert!(err.to_string().contains("line 13: replications"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Scenario::from_toml_str(&format!("{BASE}colour = 3\n")).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_a_position() {
        let err =
            Scenario::from_toml_str(&BASE.replace("radius = 0.1", "radius = = 0.1")).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }
}
