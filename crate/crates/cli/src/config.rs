//! Flat `key = value` experiment files with dotted sections.
//!
//! ```text
//! # comment
//! law.alpha = 1.5
//! drift = bump:0.2,-0.1;1;0.3
//! mc.paths = 200000
//! ```
//!
//! Lists are comma separated; an empty value clears an optional key.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use driftkernel::drift::DriftField;
use driftkernel::verify::{SuiteConfig, SUITES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}, field `{key}`: {msg}")]
    Field { line: usize, key: String, msg: String },
    #[error("field `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

/// Everything one run needs: the suite parameters plus operation inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: Option<String>,
    pub verify: SuiteConfig,
    /// Times for the estimator operations.
    pub times: Vec<f64>,
    /// Start and target points; empty means the origin and `0.3 e1`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub series_order: usize,
    pub series_time_nodes: usize,
    pub series_samples: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: None,
            verify: SuiteConfig::default(),
            times: vec![0.1, 0.5, 1.0],
            x: Vec::new(),
            y: Vec::new(),
            series_order: 4,
            series_time_nodes: 20,
            series_samples: 4096,
            output: None,
        }
    }
}

fn num<T: FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| num(p.trim(), "a number")).collect()
}

fn bool_of(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got `{v}`")),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn f<T: std::fmt::Debug>(v: T) -> String {
    format!("{v:?}")
}

fn s<T: Display>(v: T) -> String {
    v.to_string()
}

/// Normalize `heat-two-sided` to `heat_two_sided`.
pub fn suite_name(name: &str) -> String {
    name.trim().replace('-', "_")
}

impl ExperimentConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let v = &self.verify;
        vec![
            ("law.alpha", f(v.alpha)),
            ("law.dim", s(v.dim)),
            ("drift", v.drift.clone()),
            ("domain", v.domain.clone()),
            ("suite", self.suite.clone().unwrap_or_default()),
            ("grid.t", fmt_list(&self.times)),
            ("grid.t_min", f(v.t_min)),
            ("grid.t_max", f(v.t_max)),
            ("grid.n_t", s(v.n_t)),
            ("grid.n_x", s(v.n_x)),
            ("grid.n_y", s(v.n_y)),
            ("grid.radii", fmt_list(&v.r_grid)),
            ("grid.lambdas", fmt_list(&v.lambdas)),
            ("grid.scaling_points", s(v.scaling_points)),
            ("grid.scaling_times", s(v.scaling_times)),
            ("grid.triples", s(v.n_triples)),
            ("point.x", fmt_list(&self.x)),
            ("point.y", fmt_list(&self.y)),
            ("mc.dt", f(v.mc.dt)),
            ("mc.paths", s(v.mc.paths)),
            ("mc.seed", s(v.mc.seed)),
            ("mc.workers", s(v.mc.workers)),
            ("mc.antithetic", s(v.mc.antithetic)),
            ("mc.max_steps", s(v.mc.max_steps)),
            ("mc.boundary_factor", f(v.mc.boundary_factor)),
            ("mc.grid_bins", s(v.mc.grid_bins)),
            ("series.order", s(self.series_order)),
            ("series.time_nodes", s(self.series_time_nodes)),
            ("series.samples", s(self.series_samples)),
            ("suite.gate", s(v.gate)),
            ("suite.series_samples", s(v.series_samples)),
            ("suite.bhp_radius", f(v.bhp_radius)),
            ("suite.closed_form_pairs", s(v.closed_form_pairs)),
            ("tol.spread_cap", f(v.spread_cap)),
            ("tol.large_time_cap_zero", f(v.large_time_cap_zero)),
            ("tol.large_time_cap", f(v.large_time_cap)),
            ("output.dir", self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    /// Set one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let v = &mut self.verify;
        match key {
            "law.alpha" => v.alpha = num(value, "a number")?,
            "law.dim" => v.dim = num(value, "a positive integer")?,
            "drift" => v.drift = value.into(),
            "domain" => v.domain = value.into(),
            "suite" => self.suite = (!value.is_empty()).then(|| suite_name(value)),
            "grid.t" => self.times = list(value)?,
            "grid.t_min" => v.t_min = num(value, "a number")?,
            "grid.t_max" => v.t_max = num(value, "a number")?,
            "grid.n_t" => v.n_t = num(value, "a positive integer")?,
            "grid.n_x" => v.n_x = num(value, "a positive integer")?,
            "grid.n_y" => v.n_y = num(value, "a positive integer")?,
            "grid.radii" => v.r_grid = list(value)?,
            "grid.lambdas" => v.lambdas = list(value)?,
            "grid.scaling_points" => v.scaling_points = num(value, "a positive integer")?,
            "grid.scaling_times" => v.scaling_times = num(value, "a positive integer")?,
            "grid.triples" => v.n_triples = num(value, "a positive integer")?,
            "point.x" => self.x = list(value)?,
            "point.y" => self.y = list(value)?,
            "mc.dt" => v.mc.dt = num(value, "a number")?,
            "mc.paths" => v.mc.paths = num(value, "a positive integer")?,
            "mc.seed" => v.mc.seed = num(value, "an unsigned integer")?,
            "mc.workers" => v.mc.workers = num(value, "an unsigned integer")?,
            "mc.antithetic" => v.mc.antithetic = bool_of(value)?,
            "mc.max_steps" => v.mc.max_steps = num(value, "a positive integer")?,
            "mc.boundary_factor" => v.mc.boundary_factor = num(value, "a number")?,
            "mc.grid_bins" => v.mc.grid_bins = num(value, "a positive integer")?,
            "series.order" => self.series_order = num(value, "an unsigned integer")?,
            "series.time_nodes" => self.series_time_nodes = num(value, "a positive integer")?,
            "series.samples" => self.series_samples = num(value, "a positive integer")?,
            "suite.gate" => v.gate = bool_of(value)?,
            "suite.series_samples" => v.series_samples = num(value, "a positive integer")?,
            "suite.bhp_radius" => v.bhp_radius = num(value, "a number")?,
            "suite.closed_form_pairs" => v.closed_form_pairs = num(value, "a positive integer")?,
            "tol.spread_cap" => v.spread_cap = num(value, "a number")?,
            "tol.large_time_cap_zero" => v.large_time_cap_zero = num(value, "a number")?,
            "tol.large_time_cap" => v.large_time_cap = num(value, "a number")?,
            "output.dir" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => return Err(format!("unknown key; valid keys: {}", Self::keys().join(", "))),
        }
        Ok(())
    }

    /// Parse and validate a config file. Keys may appear at most once.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax { line, msg: format!("expected `key = value`, got `{body}`") });
            };
            let k = k.trim();
            if seen.iter().any(|s| s == k) {
                return Err(ConfigError::Field { line, key: k.into(), msg: "duplicate key".into() });
            }
            c.set(k, v).map_err(|msg| ConfigError::Field { line, key: k.into(), msg })?;
            seen.push(k.into());
        }
        c.validate()?;
        Ok(c)
    }

    /// Apply `key=value` overrides, then validate.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), ConfigError> {
        for kv in sets {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(ConfigError::Invalid { key: kv.clone(), msg: "override must be `key=value`".into() });
            };
            let k = k.trim();
            self.set(k, v).map_err(|msg| ConfigError::Invalid { key: k.into(), msg })?;
        }
        self.validate()
    }

    /// The config as a file that [`ExperimentConfig::parse`] reads back identically.
    pub fn emit(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map = self.entries().into_iter().map(|(k, v)| (k.to_string(), serde_json::Value::String(v))).collect();
        serde_json::Value::Object(map)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| ConfigError::Invalid { key: key.into(), msg };
        let v = &self.verify;
        // The law error names the admissible range.
        v.law().map_err(|e| bad("law.alpha", e.to_string()))?;
        v.domain().map_err(|e| bad("domain", e.to_string()))?;
        DriftField::parse(&v.drift, v.dim).map_err(|e| bad("drift", e.to_string()))?;
        v.check().map_err(|e| bad("mc", e.to_string()))?;
        if let Some(s) = &self.suite {
            if !SUITES.contains(&s.as_str()) {
                return Err(bad("suite", format!("unknown suite `{s}`; valid suites: {}", SUITES.join(", "))));
            }
        }
        for (key, p) in [("point.x", &self.x), ("point.y", &self.y)] {
            if !p.is_empty() && p.len() != v.dim {
                return Err(bad(key, format!("expected {} coordinates, got {}", v.dim, p.len())));
            }
        }
        if self.times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(bad("grid.t", "times must be positive and finite".into()));
        }
        if self.series_time_nodes == 0 || self.series_samples == 0 {
            return Err(bad("series", "budget must be positive".into()));
        }
        Ok(())
    }

    pub fn start(&self) -> Vec<f64> {
        if self.x.is_empty() {
            vec![0.0; self.verify.dim]
        } else {
            self.x.clone()
        }
    }

    pub fn target(&self) -> Vec<f64> {
        if self.y.is_empty() {
            let mut y = vec![0.0; self.verify.dim];
            y[0] = 0.3;
            y
        } else {
            self.y.clone()
        }
    }
}
