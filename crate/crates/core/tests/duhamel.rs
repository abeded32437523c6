use driftkernel::drift::DriftField;
use driftkernel::duhamel::{constant_drift_kernel, Budget, Calibration, DriftedKernel, SeriesOptions};
use driftkernel::kato::nb_functional;
use driftkernel::rng::StreamFamily;
use driftkernel::stable::fit_comparability_constant;
use driftkernel::{Error, StableLaw};

const ALPHA: f64 = 1.5;

fn law() -> StableLaw {
    StableLaw::new(ALPHA, 2).unwrap()
}

fn kernel(spec: &str) -> DriftedKernel {
    DriftedKernel::new(law(), DriftField::parse(spec, 2).unwrap()).unwrap()
}

#[test]
fn first_term_is_the_linear_part_of_the_translation() {
    let b0 = [1e-2, 0.0];
    let k = kernel("const:0.01,0");
    let t = 0.5;
    let f = StreamFamily::new(11);
    for (x, y) in [([0.0, 0.0], [0.3, 0.1]), ([0.2, -0.1], [-0.4, 0.5]), ([0.0, 0.0], [1.5, 0.0])] {
        let p1 = k.series_term(t, &x, &y, 1, Budget::default(), &f).unwrap();
        let plus = constant_drift_kernel(&law(), &b0, t, &x, &y).unwrap();
        let minus = constant_drift_kernel(&law(), &[-b0[0], -b0[1]], t, &x, &y).unwrap();
        let linear = 0.5 * (plus - minus);
        assert!(
            (p1.value - linear).abs() <= 3.0 * p1.stderr + 1e-6 * plus,
            "{x:?}->{y:?}: {} ± {} vs {linear}",
            p1.value,
            p1.stderr
        );
    }
}

#[test]
fn constant_drift_series_matches_translation() {
    let b0 = [0.3, 0.0];
    let k = kernel("const:0.3,0");
    let t = 0.25;
    let f = StreamFamily::new(12);
    for (x, y) in
        [([0.0, 0.0], [0.1, 0.0]), ([0.0, 0.0], [0.0, 0.3]), ([0.1, 0.1], [-0.5, 0.4]), ([0.0, 0.0], [1.0, 0.0])]
    {
        let v = k.free_kernel(t, &x, &y, &f).unwrap();
        let exact = constant_drift_kernel(&law(), &b0, t, &x, &y).unwrap();
        let tol = (3.0 * v.stderr).max(1e-3 * exact);
        assert!((v.value - exact).abs() <= tol, "{x:?}->{y:?}: {} ± {} vs {exact}", v.value, v.stderr);
        assert!(v.value > 0.0);
    }
}

#[test]
fn conservativeness() {
    let f = StreamFamily::new(13);
    let inner = Budget::new(10, 2);
    for (spec, t) in [("bump:0,0;1.0;0.3", 0.2), ("const:0.3,0.2", 0.5)] {
        let m = kernel(spec).conservativeness_check(t, &[0.1, 0.0], 3, 4000, inner, &f).unwrap();
        assert!((m.mean - 1.0).abs() <= 3.0 * m.stderr, "{spec}: {} ± {}", m.mean, m.stderr);
    }
    // The oracle itself integrates to one.
    let law = law();
    let h = 0.02;
    let mut mass = 0.0;
    for i in -400..=400 {
        for j in -400..=400 {
            let y = [i as f64 * h, j as f64 * h];
            mass += constant_drift_kernel(&law, &[0.3, 0.2], 0.5, &[0.1, 0.0], &y).unwrap() * h * h;
        }
    }
    // Lattice truncated at |y| ≤ 8; the remaining mass is O(t 8^{-α}).
    assert!((mass - 1.0).abs() < 2e-2, "{mass}");
}

#[test]
fn terms_obey_the_geometric_bound() {
    let f = StreamFamily::new(14);
    for spec in ["const:0.3,0.4", "bump:0.2,-0.1;1.0;0.3", "invpow:0.3;1"] {
        let k = kernel(spec);
        let fit = k.fit_c4(&[1.0 / 256.0, 1.0 / 64.0, 1.0 / 16.0], 8, Budget::new(16, 2048), &f).unwrap();
        let t_series = k.t_series(&fit).unwrap();
        let t = t_series.min(0.25);
        let n_t = nb_functional(k.drift(), ALPHA, t, 200).unwrap().value;
        let q = fit.c4 * n_t;
        assert!(q < 0.5, "{spec}: {q}");
        let x = k.drift().hotspots().first().cloned().unwrap_or(vec![0.0, 0.0]);
        let y = [x[0] + 0.5 * t.powf(1.0 / ALPHA), x[1]];
        let p = law().density(t, &x, &y).unwrap();
        for order in 1..=5 {
            let term = k.series_term(t, &x, &y, order, Budget::default(), &f).unwrap();
            let lhs = (term.value.abs() - 3.0 * term.stderr).max(0.0) / p;
            assert!(lhs <= q.powi(order as i32), "{spec} k={order}: {lhs} vs {}", q.powi(order as i32));
        }
    }
}

#[test]
fn c4_fit_is_stable_and_scale_invariant() {
    let f = StreamFamily::new(15);
    let k = kernel("bump:0.2,-0.1;1.0;0.3");
    let grid = [1.0 / 128.0, 1.0 / 32.0];
    let a = k.fit_c4(&grid, 8, Budget::new(16, 2048), &f).unwrap();
    let b = k.fit_c4(&grid, 16, Budget::new(16, 2048), &f).unwrap();
    assert!((a.c4 - b.c4).abs() <= 0.2 * a.c4, "{} vs {}", a.c4, b.c4);
    assert!(a.least_squares <= a.c4 && a.least_squares > 0.0);
    let lam: f64 = 2.0;
    let kl = DriftedKernel::new(law(), k.drift().scaled(lam, ALPHA).unwrap()).unwrap();
    let grid_l: Vec<f64> = grid.iter().map(|t| t * lam.powf(ALPHA)).collect();
    let c = kl.fit_c4(&grid_l, 8, Budget::new(16, 2048), &f).unwrap();
    assert!((a.c4 - c.c4).abs() <= 0.02 * a.c4, "{} vs {}", a.c4, c.c4);
}

#[test]
fn two_sided_against_free_profile() {
    let f = StreamFamily::new(16);
    let k = kernel("bump:0,0;0.8;0.3");
    let law = law();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &t in &[0.02, 0.05, 0.1] {
        for &r in &[0.0, 0.1, 0.3, 1.0, 3.0] {
            for dir in [1.0, -1.0] {
                let v = k.free_kernel(t, &[0.0, 0.0], &[dir * r, 0.0], &f).unwrap();
                assert!(v.value > 0.0);
                let q = v.value / law.comparability_profile(t, r);
                lo = lo.min(q);
                hi = hi.max(q);
            }
        }
    }
    let c1 = hi.max(1.0 / lo);
    let (c_free, _, _) = fit_comparability_constant(&law, &[0.02, 0.05, 0.1], &[0.0, 0.1, 0.3, 1.0, 3.0]);
    assert!(c1 <= 2.0 * c_free, "{c1} vs free {c_free}");
}

#[test]
fn semigroup_composition_agrees_with_direct_series() {
    let f = StreamFamily::new(17);
    let k = kernel("bump:0,0;1.0;0.3");
    let (x, y) = ([0.0, 0.0], [0.3, 0.1]);
    let direct = k.free_kernel(0.2, &x, &y, &f).unwrap();
    let fit = k.fit_c4(&[0.05], 2, Budget::new(8, 256), &f).unwrap();
    let composed = k
        .clone()
        .with_options(SeriesOptions { midpoints: 2000, ..SeriesOptions::default() })
        .with_calibration(Calibration { fit, t_series: 0.1 })
        .free_kernel(0.2, &x, &y, &f)
        .unwrap();
    assert_eq!(composed.halvings, 1);
    let se = (direct.stderr.powi(2) + composed.stderr.powi(2)).sqrt();
    assert!((direct.value - composed.value).abs() <= 3.0 * se, "{} vs {} ± {se}", direct.value, composed.value);
}

#[test]
fn strong_field_is_reported_as_non_contracting() {
    let k = kernel("const:40,0");
    match k.free_kernel(1.0, &[0.0, 0.0], &[0.2, 0.0], &StreamFamily::new(1)) {
        Err(Error::NonContracting { ratio, .. }) => assert!(ratio >= 1.0),
        other => panic!("expected non-contracting, got {other:?}"),
    }
}

#[test]
fn deterministic_under_worker_count() {
    let k = kernel("bump:0,0;1.0;0.3");
    let run = |w| {
        driftkernel::rng::with_workers(w, || {
            k.series_term(0.1, &[0.0, 0.0], &[0.2, 0.0], 2, Budget::new(8, 1000), &StreamFamily::new(5)).unwrap()
        })
        .unwrap()
    };
    assert_eq!(run(1), run(3));
}
