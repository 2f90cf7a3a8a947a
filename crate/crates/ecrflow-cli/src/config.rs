//! Flat key = value configuration with dotted sections.
//!
//! Unknown keys are rejected so typos fail loudly; scenario parameter
//! constraints are enforced when the model is built.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub struct ConfigError(String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ConfigError(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

const KNOWN_KEYS: &[&str] = &[
    "scenario",
    "experiment",
    "seed",
    "output.dir",
    "sync1.d",
    "sync1.nu",
    "sync1.delta",
    "sync1.Delta",
    "sync2.d",
    "sync2.alpha",
    "sync2.beta",
    "sync2.delta",
    "sync2.Delta",
    "custom.f_mm",
    "custom.f_mp",
    "custom.f_pm",
    "custom.f_pp",
    "custom.f_min",
    "integrator.rel_tol",
    "integrator.abs_tol",
    "integrator.event_tol",
    "integrator.max_step",
    "integrator.max_events",
    "integrator.horizon",
    "simulate.t",
    "simulate.x",
    "bderiv.t",
    "bderiv.x",
    "bderiv.v",
    "bderiv.w",
    "perturbation.sizes",
    "perturbation.trials",
    "perturbation.horizon",
    "perturbation.radius",
    "flowbox.samples",
    "words.n",
];

#[derive(Clone, Debug)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
    pub seed: u64,
    pub mutation: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> ConfigResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("line {}: expected key = value", lineno + 1))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError(format!(
                    "line {}: unknown key '{key}'",
                    lineno + 1
                )));
            }
            entries.insert(key, value.trim().to_string());
        }
        let mut cfg = RunConfig {
            entries,
            seed: 42,
            mutation: false,
        };
        cfg.seed = cfg.u64_or("seed", 42)?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> ConfigResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        if key == "seed" {
            self.seed = self.u64_or("seed", 42)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> ConfigResult<&str> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing required key '{key}'")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> ConfigResult<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{v}' as a number"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> ConfigResult<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("key '{key}': cannot parse '{v}' as an integer"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> ConfigResult<usize> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    pub fn f64_list(&self, key: &str) -> ConfigResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => {
                let parsed: Result<Vec<f64>, _> =
                    v.split(',').map(|s| s.trim().parse::<f64>()).collect();
                parsed
                    .map(Some)
                    .map_err(|_| ConfigError(format!("key '{key}': cannot parse list '{v}'")))
            }
        }
    }

    pub fn scenario(&self) -> ConfigResult<&str> {
        self.require("scenario")
    }

    pub fn experiment(&self) -> ConfigResult<&str> {
        self.require("experiment")
    }

    pub fn out_dir(&self) -> String {
        self.get("output.dir").unwrap_or("out").to_string()
    }

    /// All effective entries, for the run manifest.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Resolve a sweep key like `beta` against the scenario section.
    pub fn resolve_sweep_key(&self, key: &str) -> ConfigResult<String> {
        if KNOWN_KEYS.contains(&key) {
            return Ok(key.to_string());
        }
        let scenario = self.scenario()?;
        let section = match scenario {
            "sync1" => "sync1",
            "sync2" => "sync2",
            "custom-piecewise-constant" => "custom",
            other => return Err(ConfigError(format!("unknown scenario '{other}'"))),
        };
        let dotted = format!("{section}.{key}");
        if KNOWN_KEYS.contains(&dotted.as_str()) {
            Ok(dotted)
        } else {
            Err(ConfigError(format!("cannot resolve sweep key '{key}'")))
        }
    }
}
