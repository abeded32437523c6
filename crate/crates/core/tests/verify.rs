use driftkernel::drift::DriftField;
use driftkernel::geometry::{BallGreen, Domain};
use driftkernel::mc::{green_bridge, PathConfig, Process};
use driftkernel::rng::StreamFamily;
use driftkernel::verify::{
    green_series_ratio, run_suite, splitting_check, Cell, Check, SplittingGeometry, SuiteConfig, SuiteReport, Verdict,
    SUITES,
};
use driftkernel::{Error, StableLaw};
use proptest::prelude::*;

fn small(paths: usize) -> SuiteConfig {
    let mut c = SuiteConfig::default();
    c.mc.paths = paths;
    c.n_t = 2;
    c.n_x = 2;
    c.n_y = 2;
    c
}

#[test]
fn verdicts_fold_with_fail_first() {
    use Verdict::*;
    assert_eq!(Pass.and(Pass), Pass);
    assert_eq!(Pass.and(Inconclusive), Inconclusive);
    assert_eq!(Inconclusive.and(Fail), Fail);
    assert_eq!(Fail.and(Pass), Fail);
    assert_eq!([Pass, Fail, Inconclusive].map(Verdict::exit_code), [0, 1, 2]);
    let mut r = SuiteReport::new("x", "", serde_json::Value::Null);
    r.finish();
    assert_eq!(r.verdict, Inconclusive);
}

#[test]
fn report_writes_json_and_round_trip_csv() {
    let mut r = SuiteReport::new("heat_two_sided", "two-sided", serde_json::json!({"alpha": 1.5}));
    r.push(Check::new("a", Verdict::Pass, "ok"));
    r.stat("fitted_c", 1.25);
    r.cells.push(Cell {
        t: Some(0.1),
        x: vec![0.1, 0.2],
        y: vec![-0.3, 0.0],
        estimate: 0.1 + 0.2,
        stderr: 1e-3,
        template: 1.0 / 3.0,
        ratio: 0.9,
    });
    r.cells.push(Cell {
        t: None,
        x: vec![0.0, 0.0],
        y: vec![0.5, 0.5],
        estimate: 2.0,
        stderr: 0.0,
        template: 1.0,
        ratio: 2.0,
    });
    r.finish();

    let csv = r.cells_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,x0,x1,y0,y1,estimate,stderr,template,ratio");
    let first: Vec<f64> = lines[1].split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(first[5], 0.1 + 0.2);
    assert_eq!(first[7], 1.0 / 3.0);
    assert!(lines[2].starts_with(",0.0,"));

    let dir = tempfile::tempdir().unwrap();
    let path = r.write(dir.path(), "20260101T000000").unwrap();
    assert!(path.ends_with("heat_two_sided/20260101T000000/report.json"));
    let back: SuiteReport = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back.verdict, Verdict::Pass);
    assert_eq!(back.statistics["fitted_c"], 1.25);
    assert_eq!(back.artifacts, vec!["cells.csv".to_string()]);
    let on_disk = std::fs::read_to_string(path.with_file_name("cells.csv")).unwrap();
    assert_eq!(on_disk, csv);
}

#[test]
fn unknown_suite_lists_the_valid_ones() {
    let err = run_suite("heat", &SuiteConfig::default()).unwrap_err();
    let Error::Config(msg) = err else { panic!("{err:?}") };
    for s in SUITES {
        assert!(msg.contains(s), "{msg}");
    }
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let mut c = SuiteConfig::default();
    c.alpha = 2.0;
    assert!(run_suite("three_g", &c).is_err());
    let mut c = SuiteConfig::default();
    c.domain = "cube:1".into();
    assert!(run_suite("three_g", &c).is_err());
}

#[test]
fn three_g_passes_on_the_ball() {
    let mut c = SuiteConfig::default();
    c.n_triples = 10_000;
    let r = run_suite("three_g", &c).unwrap();
    assert_eq!(r.verdict, Verdict::Pass, "{:#?}", r.checks);
    assert!(r.gate.is_none());
    assert!(r.check("scale_invariance").is_some());
}

#[test]
fn zero_drift_factor_two_is_exact() {
    let mut c = SuiteConfig::default();
    c.drift = "zero".into();
    c.r_grid = vec![0.25, 1.0];
    c.series_samples = 200;
    let r = run_suite("small_ball_factor2", &c).unwrap();
    assert_eq!(r.check("zero_drift_identity").unwrap().verdict, Verdict::Pass);
}

#[test]
fn series_ratio_of_zero_drift_is_one() {
    let b = DriftField::zero(2);
    let mut rng = StreamFamily::new(3).stream(0);
    let s = green_series_ratio(1.5, &b, &[0.1, 0.0], &[-0.2, 0.3], 4, 100, &mut rng).unwrap();
    assert_eq!(s.ratio, 1.0);
    assert!(s.terms.iter().all(|t| t.mean == 0.0));
}

#[test]
fn green_series_matches_the_bridge_on_the_unit_ball() {
    let alpha = 1.5;
    let b = DriftField::parse("const:0.6,0.3", 2).unwrap();
    let x = vec![0.3, 0.0];
    let y = vec![-0.3, 0.1];

    let mut rng = StreamFamily::new(11).stream(0);
    let s = green_series_ratio(alpha, &b, &x, &y, 6, 40_000, &mut rng).unwrap();
    assert!(s.contraction < 1.0, "{s:?}");
    let g0 = BallGreen::new(vec![0.0, 0.0], 1.0, alpha).unwrap().value(&x, &y).unwrap();
    let series = s.ratio * g0;
    let series_se = s.ratio_stderr * g0;

    let law = StableLaw::new(alpha, 2).unwrap();
    let p = Process::new(law, b).unwrap();
    let dom = Domain::unit_ball(2);
    let cfg = PathConfig { paths: 20_000, ..PathConfig::default() };
    let e = green_bridge(&p, &dom, &[x], &[y], &[(0, 0)], None, &cfg, &StreamFamily::new(12)).unwrap();
    let mc = &e[0];
    let se = (series_se * series_se + mc.stderr * mc.stderr).sqrt() + mc.bias_bound;
    assert!(
        (series - mc.value).abs() <= 4.0 * se + 0.03 * mc.value,
        "series {series} ± {series_se}, bridge {} ± {}",
        mc.value,
        mc.stderr
    );
}

#[test]
fn splitting_geometry_rejects_touching_balls() {
    let u = Domain::unit_ball(2);
    assert!(SplittingGeometry::new(u.clone(), vec![-0.2, 0.0], 0.2, vec![0.2, 0.0], 0.2).is_err());
    assert!(SplittingGeometry::new(u.clone(), vec![-0.9, 0.0], 0.2, vec![0.5, 0.0], 0.2).is_err());
    let g = SplittingGeometry::for_ball(&u).unwrap();
    assert!((g.gap() - 0.6).abs() < 1e-12);
    let annulus = Domain::parse("annulus:0.5,1", 2).unwrap();
    assert!(SplittingGeometry::for_ball(&annulus).is_err());
}

#[test]
fn splitting_bound_holds_for_a_small_run() {
    let u = Domain::unit_ball(2);
    let g = SplittingGeometry::for_ball(&u).unwrap();
    let law = StableLaw::new(1.5, 2).unwrap();
    let p = Process::new(law, DriftField::parse("bump:0.2,-0.1;1;0.3", 2).unwrap()).unwrap();
    let cfg = PathConfig { paths: 5000, ..PathConfig::default() };
    let res = splitting_check(&p, &g, &[0.1, 0.5], &cfg, &StreamFamily::new(5)).unwrap();
    for r in res {
        assert!(r.holds(3.0), "{r:?}");
    }
}

#[test]
fn heat_suite_cells_do_not_depend_on_workers() {
    let run = |workers| {
        let mut c = small(2000);
        c.mc.workers = workers;
        c.gate = false;
        run_suite("heat_two_sided", &c).unwrap().cells_csv()
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn gate_blocks_the_drifted_run_when_zero_drift_fails() {
    let mut c = small(2000);
    // A cap below one cannot be met.
    c.spread_cap = 0.5;
    let r = run_suite("heat_two_sided", &c).unwrap();
    let gate = r.gate.as_ref().unwrap();
    assert_ne!(gate.verdict, Verdict::Pass);
    assert_eq!(r.check("zero_drift_gate").unwrap().verdict, gate.verdict);
    assert!(r.cells.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn verdict_fold_is_order_free(v in proptest::collection::vec(0u8..3, 0..8)) {
        let vs: Vec<Verdict> = v.iter().map(|k| [Verdict::Pass, Verdict::Fail, Verdict::Inconclusive][*k as usize]).collect();
        let fwd = vs.iter().fold(Verdict::Pass, |a, b| a.and(*b));
        let rev = vs.iter().rev().fold(Verdict::Pass, |a, b| a.and(*b));
        prop_assert_eq!(fwd, rev);
        prop_assert_eq!(fwd == Verdict::Fail, vs.contains(&Verdict::Fail));
    }

    #[test]
    fn suite_config_round_trips_through_json(alpha in 1.05f64..1.95, paths in 2usize..100_000, cap in 1.0f64..100.0) {
        let mut c = SuiteConfig::default();
        c.alpha = alpha;
        c.mc.paths = paths;
        c.spread_cap = cap;
        let back: SuiteConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}
