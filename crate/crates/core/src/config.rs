//! Plain-text `key = value` configuration files.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{EricError, Result};
use crate::simulate::{padded_beta, ScenarioConfig, ScenarioKind};

/// Parsed `key = value` pairs. `#` starts a comment; blank lines are skipped;
/// repeated keys are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| EricError::Parse(format!("line {}: expected key = value", k + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(EricError::Parse(format!("line {}: empty key", k + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(EricError::Parse(format!("line {}: duplicate key {key}", k + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get_str(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| EricError::Parse(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    /// A comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get_str(key)
            .map(|v| {
                v.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<T>()
                            .map_err(|_| EricError::Parse(format!("{key}: cannot parse {x:?}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

const SCENARIO_KEYS: [&str; 14] = [
    "scenario",
    "n",
    "p",
    "rho",
    "theta_value",
    "theta_count",
    "tau",
    "alpha",
    "depth_mean",
    "depth_var",
    "sigma_eps",
    "beta",
    "seed",
    "reps",
];

/// Builds a scenario from a config file with built-in defaults.
pub fn scenario_from_kv(kv: &KeyValues) -> Result<ScenarioConfig> {
    apply_scenario_kv(kv, ScenarioKind::LogisticNormal, 100, 200, 0.5, 0)
}

/// Builds a scenario whose kind, size, `tau` and seed default to the given
/// values; every key in the file overrides. `reps` is accepted but left to
/// the caller. Unknown keys are rejected.
pub fn apply_scenario_kv(
    kv: &KeyValues,
    kind: ScenarioKind,
    n: usize,
    p: usize,
    tau: f64,
    seed: u64,
) -> Result<ScenarioConfig> {
    if let Some(k) = kv.keys().find(|k| !SCENARIO_KEYS.contains(k)) {
        return Err(EricError::Parse(format!("unknown scenario key {k:?}")));
    }
    let kind: ScenarioKind = kv.get("scenario")?.unwrap_or(kind);
    let n = kv.get("n")?.unwrap_or(n);
    let p = kv.get("p")?.unwrap_or(p);
    let tau = kv.get("tau")?.unwrap_or(tau);
    let seed = kv.get("seed")?.unwrap_or(seed);
    let mut cfg = ScenarioConfig::new(kind, n, p, tau, seed)?;
    if let Some(v) = kv.get("rho")? {
        cfg.rho = v;
    }
    if let Some(v) = kv.get("theta_value")? {
        cfg.theta_value = v;
    }
    if let Some(v) = kv.get("theta_count")? {
        cfg.theta_count = v;
    }
    if let Some(v) = kv.get("alpha")? {
        cfg.alpha = v;
    }
    if let Some(v) = kv.get("depth_mean")? {
        cfg.depth_mean = v;
    }
    if let Some(v) = kv.get("depth_var")? {
        cfg.depth_var = v;
    }
    if let Some(v) = kv.get("sigma_eps")? {
        cfg.sigma_eps = v;
    }
    if let Some(head) = kv.get_list::<f64>("beta")? {
        cfg.beta_star = padded_beta(&head, p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KeyValues::parse("# header\nscenario = 3\nn=40 # rows\np = 12\nbeta = 1, -1\n\n").unwrap();
        let cfg = scenario_from_kv(&kv).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::DirichletMultinomial);
        assert_eq!((cfg.n, cfg.p), (40, 12));
        assert_eq!(cfg.beta_star.as_vector()[1], -1.0);
        assert_eq!(cfg.beta_star.as_vector().iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(KeyValues::parse("n 4").is_err());
        assert!(KeyValues::parse("n=1\nn=2").is_err());
        assert!(scenario_from_kv(&KeyValues::parse("colour=red").unwrap()).is_err());
        assert!(scenario_from_kv(&KeyValues::parse("n=abc").unwrap()).is_err());
        assert!(scenario_from_kv(&KeyValues::parse("beta=1,1").unwrap()).is_err());
    }
}
