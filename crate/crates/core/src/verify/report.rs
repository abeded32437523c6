use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Fail dominates inconclusive, which dominates pass.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }

    pub fn from_bool(ok: bool) -> Verdict {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 1,
            Verdict::Inconclusive => 2,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One declared assertion of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, verdict: Verdict, detail: &str) -> Self {
        Self { name: name.into(), verdict, detail: detail.into() }
    }
}

/// One grid point of a suite: estimate, its template and their ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub t: Option<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub template: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite_name: String,
    pub theorem_ref: String,
    pub config: serde_json::Value,
    pub statistics: BTreeMap<String, f64>,
    /// The statistics rounded for reading; filled by [`SuiteReport::write`].
    #[serde(default)]
    pub statistics_rounded: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub artifacts: Vec<String>,
    /// The zero-drift run that gated this one.
    pub gate: Option<Box<SuiteReport>>,
    #[serde(skip)]
    pub cells: Vec<Cell>,
}

impl SuiteReport {
    pub fn new(suite: &str, theorem_ref: &str, config: serde_json::Value) -> Self {
        Self {
            suite_name: suite.into(),
            theorem_ref: theorem_ref.into(),
            config,
            statistics: BTreeMap::new(),
            statistics_rounded: BTreeMap::new(),
            checks: Vec::new(),
            verdict: Verdict::Pass,
            artifacts: Vec::new(),
            gate: None,
            cells: Vec::new(),
        }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn stat(&mut self, name: &str, v: f64) {
        self.statistics.insert(name.into(), v);
    }

    /// Recompute the verdict from the checks.
    pub fn finish(&mut self) {
        self.verdict = self.checks.iter().fold(Verdict::Pass, |v, c| v.and(c.verdict));
        if self.checks.is_empty() {
            self.verdict = Verdict::Inconclusive;
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn round_statistics(&mut self) {
        self.statistics_rounded = self.statistics.iter().map(|(k, v)| (k.clone(), rounded(*v))).collect();
        if let Some(g) = self.gate.as_mut() {
            g.round_statistics();
        }
    }

    /// `t,x0..,y0..,estimate,stderr,template,ratio` with round-trip floats.
    pub fn cells_csv(&self) -> String {
        cells_to_csv(&self.cells)
    }

    /// Write `<out>/<suite>/<stamp>/report.json` and the cell tables.
    pub fn write(&mut self, out: &Path, stamp: &str) -> Result<PathBuf> {
        let dir = out.join(&self.suite_name).join(stamp);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("cells.csv"), self.cells_csv())?;
        let mut artifacts = vec!["cells.csv".to_string()];
        if let Some(g) = &self.gate {
            fs::write(dir.join("cells_zero_drift.csv"), g.cells_csv())?;
            artifacts.push("cells_zero_drift.csv".into());
        }
        // Keep artifacts the caller wrote itself.
        for a in self.artifacts.drain(..) {
            if !artifacts.contains(&a) {
                artifacts.push(a);
            }
        }
        self.artifacts = artifacts;
        self.round_statistics();
        let path = dir.join("report.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Four significant digits.
fn rounded(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() {
        format!("{v}")
    } else if (1e-3..1e4).contains(&a) {
        let digits = (3 - a.log10().floor() as i32).max(0) as usize;
        format!("{v:.digits$}")
    } else {
        format!("{v:.3e}")
    }
}

fn cells_to_csv(cells: &[Cell]) -> String {
    let d = cells.first().map_or(0, |c| c.x.len());
    let mut s = String::from("t");
    for i in 0..d {
        let _ = write!(s, ",x{i}");
    }
    for i in 0..d {
        let _ = write!(s, ",y{i}");
    }
    s.push_str(",estimate,stderr,template,ratio\n");
    for c in cells {
        if let Some(t) = c.t {
            let _ = write!(s, "{t:?}");
        }
        for v in c.x.iter().chain(&c.y) {
            let _ = write!(s, ",{v:?}");
        }
        let _ = writeln!(s, ",{:?},{:?},{:?},{:?}", c.estimate, c.stderr, c.template, c.ratio);
    }
    s
}
