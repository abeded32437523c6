use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use driftkernel_cli::config::suite_name;
use driftkernel_cli::{ConfigError, ExperimentConfig};
use proptest::prelude::*;

fn bin(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_driftkernel")).args(args).env("DRIFTKERNEL_OUT", out).output().unwrap()
}

fn report_path(o: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&o.stdout).lines().last().unwrap().trim())
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn minimal_config_fills_defaults() {
    let c = ExperimentConfig::parse("law.alpha = 1.5\nlaw.dim = 2\nsuite = three-g\nmc.seed = 7\n").unwrap();
    assert_eq!(c.suite.as_deref(), Some("three_g"));
    assert_eq!(c.verify.mc.seed, 7);
    let d = ExperimentConfig::default();
    assert_eq!(c.verify.mc.paths, d.verify.mc.paths);
    assert_eq!(c.verify.drift, d.verify.drift);
    assert_eq!(c.times, d.times);
}

#[test]
fn alpha_two_is_rejected() {
    let err = ExperimentConfig::parse("law.alpha = 2.0\n").unwrap_err();
    assert!(err.to_string().contains("alpha must lie in (1,2)"), "{err}");
}

#[test]
fn errors_name_line_and_field() {
    let err = ExperimentConfig::parse("# header\nlaw.alpha = 1.5\nmc.pahts = 10\n").unwrap_err();
    assert!(matches!(&err, ConfigError::Field { line: 3, key, .. } if key == "mc.pahts"), "{err}");
    let err = ExperimentConfig::parse("mc.paths = lots\n").unwrap_err();
    assert!(err.to_string().contains("line 1, field `mc.paths`"), "{err}");
    let err = ExperimentConfig::parse("mc.paths = 10\nmc.paths = 20\n").unwrap_err();
    assert!(err.to_string().contains("duplicate"), "{err}");
    let err = ExperimentConfig::parse("drift\n").unwrap_err();
    assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    let err = ExperimentConfig::parse("suite = heat\n").unwrap_err();
    assert!(err.to_string().contains("heat_two_sided"), "{err}");
}

#[test]
fn constant_drift_round_trips() {
    let c = ExperimentConfig::parse("drift = const:0.3,0\n").unwrap();
    assert_eq!(c.verify.drift, "const:0.3,0");
    let back = ExperimentConfig::parse(&c.emit()).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.emit(), c.emit());
}

#[test]
fn default_config_round_trips() {
    let c = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
}

#[test]
fn suite_names_accept_hyphens() {
    assert_eq!(suite_name("heat-two-sided"), "heat_two_sided");
    assert_eq!(suite_name("small_ball_factor2"), "small_ball_factor2");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emitted_configs_parse_back(
        alpha in 1.01f64..1.99,
        paths in 2usize..1_000_000,
        seed in any::<u64>(),
        dt in 1e-6f64..0.1,
        times in proptest::collection::vec(1e-4f64..10.0, 1..5),
        x in proptest::collection::vec(-0.9f64..0.9, 2),
        gate in any::<bool>(),
        out in proptest::option::of("[a-z]{1,8}"),
    ) {
        let mut c = ExperimentConfig::default();
        c.verify.alpha = alpha;
        c.verify.mc.paths = paths;
        c.verify.mc.seed = seed;
        c.verify.mc.dt = dt;
        c.verify.gate = gate;
        c.times = times;
        c.x = x;
        c.output = out.map(PathBuf::from);
        let back = ExperimentConfig::parse(&c.emit()).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn unknown_suite_exits_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["verify", "heat"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    for s in driftkernel::verify::SUITES {
        assert!(err.contains(s), "{err}");
    }
}

#[test]
fn bad_input_exits_with_status_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bin(dir.path(), &["--set", "law.alpha=2.0", "config"]).status.code(), Some(3));
    assert_eq!(bin(dir.path(), &["--set", "nope=1", "config"]).status.code(), Some(3));
    assert_eq!(bin(dir.path(), &["no-such-command"]).status.code(), Some(3));
    assert_eq!(bin(dir.path(), &["--config", "/nonexistent/file", "config"]).status.code(), Some(3));
    assert_eq!(bin(dir.path(), &["sweep", "three-g", "--axis", "alpha", "--values"]).status.code(), Some(3));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("exp.cfg");
    std::fs::write(&file, "mc.paths = 1234\ndrift = zero\n").unwrap();
    let o = bin(dir.path(), &["--config", file.to_str().unwrap(), "--set", "mc.seed=9", "--workers", "2", "config"]);
    assert_eq!(o.status.code(), Some(0));
    let c = ExperimentConfig::parse(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!((c.verify.mc.paths, c.verify.mc.seed, c.verify.mc.workers), (1234, 9, 2));
    assert_eq!(c.verify.drift, "zero");
}

#[test]
fn verify_writes_a_self_describing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(dir.path(), &["verify", "three-g", "--set", "grid.triples=10000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let path = report_path(&o);
    assert!(path.starts_with(dir.path().join("three_g")));
    let r = json(&path);
    assert_eq!(r["verdict"], "pass");
    assert_eq!(r["config"]["experiment"]["grid.triples"], "10000");
    assert_eq!(r["config"]["experiment"]["suite"], "three_g");
    assert!(!r["theorem_ref"].as_str().unwrap().is_empty());
    assert!(path.with_file_name("cells.csv").exists());
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |w: &'static str| {
        [
            "verify",
            "heat-two-sided",
            "--workers",
            w,
            "--set",
            "mc.paths=2000",
            "--set",
            "grid.n_t=2",
            "--set",
            "grid.n_x=2",
            "--set",
            "grid.n_y=2",
        ]
    };
    let a = bin(dir.path(), &args("1"));
    let b = bin(dir.path(), &args("3"));
    let (pa, pb) = (report_path(&a), report_path(&b));
    assert_ne!(pa, pb);
    for f in ["cells.csv", "cells_zero_drift.csv"] {
        let ca = std::fs::read(pa.with_file_name(f)).unwrap();
        assert!(!ca.is_empty());
        assert_eq!(ca, std::fs::read(pb.with_file_name(f)).unwrap(), "{f}");
    }
}

#[test]
fn operations_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        bin(dir.path(), &["series", "--set", "grid.t=0.2", "--set", "series.samples=256", "--set", "series.order=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let terms = std::fs::read_to_string(report_path(&o).with_file_name("terms.csv")).unwrap();
    assert_eq!(terms.lines().count(), 1 + 3);

    let o = bin(dir.path(), &["simulate", "--set", "mc.paths=200", "--set", "grid.t=0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let paths = std::fs::read_to_string(report_path(&o).with_file_name("paths.jsonl")).unwrap();
    assert_eq!(paths.lines().count(), 200);

    let o = bin(dir.path(), &["domain-kernel", "--set", "mc.paths=2000", "--set", "grid.t=0.1,0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let cells = std::fs::read_to_string(report_path(&o).with_file_name("cells.csv")).unwrap();
    assert_eq!(cells.lines().count(), 3);
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        dir.path(),
        &["sweep", "three-g", "--axis", "alpha", "--values", "1.3,2.5,1.7", "--set", "grid.triples=10000"],
    );
    assert_eq!(o.status.code(), Some(3));
    let sweep_dir = std::fs::read_dir(dir.path().join("sweep")).unwrap().next().unwrap().unwrap().path();
    let r = json(&sweep_dir.join("report.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0]["verdict"], "pass");
    assert!(rows[1]["error"].as_str().unwrap().contains("alpha must lie in (1,2)"));
    assert_eq!(rows[2]["verdict"], "pass");
    let csv = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert!(csv.lines().nth(2).unwrap().starts_with("2.5,error"));
}

#[test]
fn amplitude_sweep_shrinks_the_factor_two_radius() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        dir.path(),
        &[
            "sweep",
            "small-ball-factor2",
            "--axis",
            "drift-amplitude",
            "--values",
            "0.5,1,2",
            "--set",
            "suite.gate=false",
            "--set",
            "grid.radii=0.0009765625,0.00390625,0.015625,0.0625,0.25",
        ],
    );
    assert!(matches!(o.status.code(), Some(0 | 1 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&report_path(&o));
    let rs: Vec<f64> =
        r["rows"].as_array().unwrap().iter().map(|row| row["statistics"]["r_star"].as_f64().unwrap()).collect();
    assert!(rs.windows(2).all(|w| w[1] <= w[0]), "{rs:?}");
    assert!(rs[0] > 0.0);
}
