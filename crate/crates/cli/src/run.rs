//! Dispatch of operations and suites, and report output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use driftkernel::drift::DriftField;
use driftkernel::duhamel::{Budget, DriftedKernel};
use driftkernel::geometry::{f_d, g_d, DomainKind};
use driftkernel::mc::{green_bridge, kernel_bridge, write_path_records, Ensemble, Process};
use driftkernel::rng::{with_workers, StreamFamily};
use driftkernel::verify::{run_suite, Cell, Check, SuiteReport, Verdict, SUITES};
use serde::Serialize;

use crate::config::{suite_name, ExperimentConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "DRIFTKERNEL_OUT";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] driftkernel::Error),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

pub type RunResult<T> = Result<T, RunError>;

/// What a run produced: its verdict and the written report paths.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub verdict: Verdict,
    pub reports: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operation {
    FreeKernel,
    Series,
    Simulate,
    DomainKernel,
    Green,
}

impl Operation {
    fn name(self) -> &'static str {
        match self {
            Operation::FreeKernel => "free_kernel",
            Operation::Series => "series",
            Operation::Simulate => "simulate",
            Operation::DomainKernel => "domain_kernel",
            Operation::Green => "green",
        }
    }
}

pub fn out_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.clone().or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("runs"))
}

/// UTC timestamp, suffixed when `<root>/<name>/<stamp>` already exists.
fn stamp(root: &Path, name: &str) -> String {
    let base = chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string();
    let mut s = base.clone();
    let mut k = 1;
    while root.join(name).join(&s).exists() {
        s = format!("{base}-{k}");
        k += 1;
    }
    s
}

fn embed(report: &mut SuiteReport, cfg: &ExperimentConfig) {
    let suite = std::mem::take(&mut report.config);
    report.config = serde_json::json!({ "experiment": cfg.to_json(), "resolved": suite });
}

pub fn verify(cfg: &ExperimentConfig, suite: &str) -> RunResult<Outcome> {
    let name = suite_name(suite);
    let mut report = run_suite(&name, &cfg.verify)?;
    let mut c = cfg.clone();
    c.suite = Some(name.clone());
    embed(&mut report, &c);
    let root = out_root(cfg);
    let path = report.write(&root, &stamp(&root, &name))?;
    Ok(Outcome { verdict: report.verdict, reports: vec![path] })
}

pub fn operation(cfg: &ExperimentConfig, op: Operation) -> RunResult<Outcome> {
    let root = out_root(cfg);
    let dir_stamp = stamp(&root, op.name());
    let mut report = with_workers(cfg.verify.mc.workers, || compute(cfg, op, &root.join(op.name()).join(&dir_stamp)))??;
    report.config = cfg.to_json();
    report.finish();
    let path = report.write(&root, &dir_stamp)?;
    Ok(Outcome { verdict: report.verdict, reports: vec![path] })
}

fn compute(cfg: &ExperimentConfig, op: Operation, dir: &Path) -> RunResult<SuiteReport> {
    let v = &cfg.verify;
    let law = v.law()?;
    let drift = v.drift_field()?;
    let family = StreamFamily::new(v.mc.seed);
    let (x, y) = (cfg.start(), cfg.target());
    let mut r = SuiteReport::new(op.name(), "", serde_json::Value::Null);
    match op {
        Operation::FreeKernel | Operation::Series => {
            let kernel = DriftedKernel::new(law.clone(), drift)?;
            let budget = Budget::new(cfg.series_time_nodes, cfg.series_samples);
            r.theorem_ref = "drifted free heat kernel from its perturbation series".into();
            let mut terms_csv = String::from("t,k,value,stderr\n");
            for (i, &t) in cfg.times.iter().enumerate() {
                let fam = family.child(i as u64);
                let p0 = law.density(t, &x, &y)?;
                if op == Operation::FreeKernel {
                    let val = kernel.free_kernel(t, &x, &y, &fam)?;
                    r.cells.push(cell(Some(t), &x, &y, val.value, val.stderr, p0));
                    r.stat(&format!("truncation_bound_t{i}"), val.truncation_bound);
                    r.stat(&format!("halvings_t{i}"), val.halvings as f64);
                } else {
                    let mut total = 0.0;
                    let mut var = 0.0;
                    for k in 0..=cfg.series_order {
                        let term = kernel.series_term(t, &x, &y, k, budget, &fam)?;
                        let _ = writeln!(terms_csv, "{t:?},{k},{:?},{:?}", term.value, term.stderr);
                        total += term.value;
                        var += term.stderr * term.stderr;
                    }
                    r.cells.push(cell(Some(t), &x, &y, total, var.sqrt(), p0));
                }
            }
            if op == Operation::Series {
                fs::create_dir_all(dir)?;
                fs::write(dir.join("terms.csv"), terms_csv)?;
                r.artifacts.push("terms.csv".into());
            }
            r.push(Check::new("evaluated", Verdict::Pass, "series evaluated at every time"));
        }
        Operation::Simulate => {
            let domain = v.domain()?;
            let process = Process::new(law, drift)?;
            let horizon = cfg.times.iter().copied().fold(0.0, f64::max);
            r.theorem_ref = "killed drifted stable paths".into();
            let mut ens = Ensemble::new(&process, Some(&domain), &x, &v.mc, &family)?;
            ens.advance_to(horizon)?;
            let recs = ens.records();
            let n = recs.len() as f64;
            r.stat("horizon", horizon);
            r.stat("survival", ens.survival().mean);
            r.stat("jump_exit_fraction", recs.iter().filter(|e| e.exited_by_jump).count() as f64 / n);
            r.stat("censored", ens.censored_count() as f64);
            fs::create_dir_all(dir)?;
            write_path_records(&dir.join("paths.jsonl"), &x, &recs)?;
            r.artifacts.push("paths.jsonl".into());
            let verdict = if ens.censored_count() == 0 { Verdict::Pass } else { Verdict::Inconclusive };
            r.push(Check::new("uncensored", verdict, "no path hit the step cap"));
        }
        Operation::DomainKernel | Operation::Green => {
            let domain = v.domain()?;
            let process = Process::new(law, drift)?;
            let (xs, ys) = (vec![x.clone()], vec![y.clone()]);
            let mut unreliable = false;
            if op == Operation::DomainKernel {
                r.theorem_ref = "killed drifted heat kernel against f_D".into();
                let est = kernel_bridge(&process, &domain, &cfg.times, &xs, &ys, &[(0, 0)], &v.mc, &family)?;
                for (t, e) in cfg.times.iter().zip(&est) {
                    let tmpl = f_d(&domain, v.alpha, *t, &x, &y)?;
                    r.cells.push(cell(Some(*t), &x, &y, e[0].value, e[0].stderr + e[0].bias_bound, tmpl));
                    unreliable |= e[0].unreliable;
                }
            } else {
                r.theorem_ref = "killed drifted Green function against g_D".into();
                let e = &green_bridge(&process, &domain, &xs, &ys, &[(0, 0)], None, &v.mc, &family)?[0];
                let tmpl = g_d(&domain, v.alpha, &x, &y)?;
                r.cells.push(cell(None, &x, &y, e.value, e.stderr + e.bias_bound, tmpl));
                unreliable = e.unreliable;
            }
            let verdict = if unreliable { Verdict::Inconclusive } else { Verdict::Pass };
            r.push(Check::new("reliable", verdict, "enough surviving paths at every estimate"));
        }
    }
    Ok(r)
}

fn cell(t: Option<f64>, x: &[f64], y: &[f64], estimate: f64, stderr: f64, template: f64) -> Cell {
    Cell { t, x: x.to_vec(), y: y.to_vec(), estimate, stderr, template, ratio: estimate / template }
}

/// Sweep axes.
pub const AXES: [&str; 5] = ["alpha", "drift-amplitude", "radius", "lambda", "t"];

fn with_axis(base: &ExperimentConfig, axis: &str, value: f64) -> RunResult<ExperimentConfig> {
    let mut c = base.clone();
    let v = &mut c.verify;
    match axis {
        "alpha" => v.alpha = value,
        "drift-amplitude" => v.drift = DriftField::parse(&v.drift, v.dim)?.amplified(value).descriptor(),
        "radius" => {
            let d = v.domain()?;
            let DomainKind::Ball { center, radius } = d.kind() else {
                return Err(RunError::Usage("the radius axis needs a ball domain".into()));
            };
            // Scaling moves the centre unless it is the origin.
            if center.iter().any(|c| *c != 0.0) {
                return Err(RunError::Usage("the radius axis needs a ball centred at the origin".into()));
            }
            v.domain = d.scaled(value / radius)?.descriptor();
        }
        "lambda" => v.lambdas = vec![value],
        "t" => {
            v.t_min = value;
            v.t_max = value;
            v.n_t = 1;
            c.times = vec![value];
        }
        _ => return Err(RunError::Usage(format!("unknown axis `{axis}`; valid axes: {}", AXES.join(", ")))),
    }
    c.validate()?;
    Ok(c)
}

#[derive(Debug, Serialize)]
struct SweepRow {
    value: f64,
    verdict: Option<Verdict>,
    error: Option<String>,
    statistics: std::collections::BTreeMap<String, f64>,
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SweepReport {
    suite: String,
    axis: String,
    config: serde_json::Value,
    rows: Vec<SweepRow>,
}

/// Run one suite across the values of an axis. A value that errors is
/// recorded and the sweep goes on; the status is 3 if any value errored.
pub fn sweep(cfg: &ExperimentConfig, suite: &str, axis: &str, values: &[f64]) -> RunResult<Outcome> {
    if values.is_empty() {
        return Err(RunError::Usage("sweep needs at least one value".into()));
    }
    if !AXES.contains(&axis) {
        return Err(RunError::Usage(format!("unknown axis `{axis}`; valid axes: {}", AXES.join(", "))));
    }
    let name = suite_name(suite);
    if !SUITES.contains(&name.as_str()) {
        return Err(
            driftkernel::Error::Config(format!("unknown suite `{name}`; valid suites: {}", SUITES.join(", "))).into()
        );
    }
    let root = out_root(cfg);
    let s = stamp(&root, "sweep");
    let dir = root.join("sweep").join(&s);
    let mut rows = Vec::new();
    for &value in values {
        let run = with_axis(cfg, axis, value).and_then(|c| {
            let mut r = run_suite(&name, &c.verify)?;
            embed(&mut r, &c);
            let path = r.write(&dir, &format!("{axis}={value:?}"))?;
            Ok((r, path))
        });
        rows.push(match run {
            Ok((r, path)) => {
                SweepRow { value, verdict: Some(r.verdict), error: None, statistics: r.statistics, report: Some(path) }
            }
            Err(e) => SweepRow {
                value,
                verdict: None,
                error: Some(e.to_string()),
                statistics: Default::default(),
                report: None,
            },
        });
    }

    let mut stats: Vec<&String> = rows.iter().flat_map(|r| r.statistics.keys()).collect();
    stats.sort();
    stats.dedup();
    let mut csv = String::from("value,verdict");
    for k in &stats {
        let _ = write!(csv, ",{k}");
    }
    csv.push('\n');
    for r in &rows {
        let verdict = r.verdict.map_or("error".to_string(), |v| v.to_string());
        let _ = write!(csv, "{:?},{verdict}", r.value);
        for k in &stats {
            let _ = write!(csv, ",{}", r.statistics.get(*k).map_or(String::new(), |v| format!("{v:?}")));
        }
        csv.push('\n');
    }
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("sweep.csv"), csv)?;
    let report = SweepReport { suite: name, axis: axis.into(), config: cfg.to_json(), rows };
    let path = dir.join("report.json");
    fs::write(&path, serde_json::to_string_pretty(&report).map_err(driftkernel::Error::from)?)?;

    let errored = report.rows.iter().any(|r| r.error.is_some());
    let verdict = report.rows.iter().filter_map(|r| r.verdict).fold(Verdict::Pass, Verdict::and);
    if errored {
        return Err(RunError::Usage(format!("sweep finished with errors; see {}", path.display())));
    }
    Ok(Outcome { verdict, reports: vec![path] })
}
