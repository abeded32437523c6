use std::f64::consts::PI;

use driftkernel::rng::StreamFamily;
use driftkernel::stable::{fit_comparability_constant, routes};
use driftkernel::stats::{ks_critical_two_sample, ks_two_sample, linear_fit};
use driftkernel::StableLaw;
use proptest::prelude::*;

// Values of G(ρ) for α = 1.5, d = 2, from 30-digit adaptive quadrature of
// (2π)^{-1} ∫ r e^{-r^1.5} J_0(rρ) dr.
const G_AT_ZERO: f64 = 0.094_748_068_897_354_9;
const G_FIXTURES: [(f64, f64); 3] =
    [(0.5, 0.085_364_425_709_449_75), (1.0, 0.063_184_557_589_447_94), (3.0, 0.006_485_182_109_727_07)];

fn law() -> StableLaw {
    StableLaw::new(1.5, 2).unwrap()
}

#[test]
fn origin_value_matches_radial_quadrature() {
    let l = law();
    let v = l.density(1.0, &[0.3, -0.2], &[0.3, -0.2]).unwrap();
    assert!((v - G_AT_ZERO).abs() < 1e-10 * G_AT_ZERO, "{v}");
    assert!((routes::at_origin(1.5, 2) - G_AT_ZERO).abs() < 1e-12);
}

#[test]
fn profile_matches_fixtures() {
    let l = law();
    for (rho, g) in G_FIXTURES {
        let v = l.profile(rho);
        assert!((v - g).abs() < 1e-8 * g, "rho={rho} {v} vs {g}");
    }
}

#[test]
fn routes_agree_on_overlap() {
    for &(alpha, m) in &[(1.5, 2), (1.5, 4), (1.2, 2), (1.8, 3), (1.5, 6)] {
        for k in 0..=12 {
            let rho = 1.0 + 0.25 * k as f64;
            let a = routes::fourier(alpha, m, rho);
            let b = routes::subordination(alpha, m, rho);
            assert!((a - b).abs() <= 1e-6 * b, "alpha={alpha} m={m} rho={rho}: {a} vs {b}");
        }
    }
}

#[test]
fn normalization_lattice_plus_tail() {
    let l = law();
    let (h, half) = (0.02, 30.0);
    let n = (2.0 * half / h) as i64;
    let mut mass = 0.0;
    for i in 0..n {
        let x = -half + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -half + (j as f64 + 0.5) * h;
            mass += l.density_radial(1.0, (x * x + y * y).sqrt());
        }
    }
    mass *= h * h;
    // Mass outside the square from the jump-kernel asymptote.
    let amp = l.jump_kernel().amplitude();
    let tail =
        driftkernel::special::composite(&[0.0, PI / 4.0], 32, |th| 8.0 * amp * (half / th.cos()).powf(-1.5) / 1.5);
    let total = mass + tail;
    assert!((total - 1.0).abs() < 1e-3, "{total}");
    assert!((l.table_mass() - 1.0).abs() < 1e-6, "{}", l.table_mass());
}

#[test]
fn gradient_matches_finite_differences() {
    let l = law();
    let h = 1e-5;
    for k in 0..=40 {
        let r = 0.1 * 50f64.powf(k as f64 / 40.0);
        let th = 0.3 + 0.1 * k as f64;
        let y = [0.2, -0.1];
        let x = [y[0] + r * th.cos(), y[1] + r * th.sin()];
        let mut g = [0.0; 2];
        l.grad_density(1.0, &x, &y, &mut g).unwrap();
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (l.density(1.0, &xp, &y).unwrap() - l.density(1.0, &xm, &y).unwrap()) / (2.0 * h);
            let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
            assert!((fd - g[i]).abs() <= 1e-4 * norm, "r={r} i={i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn chapman_kolmogorov_on_lattice() {
    let l = law();
    let (h, half) = (0.025, 25.0);
    let n = (2.0 * half / h) as i64;
    for &(t, s, y) in &[(0.5, 0.5, [1.0, 0.0]), (0.2, 0.7, [0.3, 2.0]), (1.0, 0.3, [4.0, -1.0])] {
        let x = [0.0, 0.0];
        let mut acc = 0.0;
        for i in 0..n {
            let z0 = -half + (i as f64 + 0.5) * h;
            for j in 0..n {
                let z1 = -half + (j as f64 + 0.5) * h;
                let a = l.density_radial(t, (z0 * z0 + z1 * z1).sqrt());
                let b = l.density_radial(s, ((z0 - y[0]).powi(2) + (z1 - y[1]).powi(2)).sqrt());
                acc += a * b;
            }
        }
        acc *= h * h;
        let direct = l.density(t + s, &x, &y).unwrap();
        assert!((acc - direct).abs() < 1e-2 * direct, "t={t} s={s}: {acc} vs {direct}");
    }
}

#[test]
fn small_time_limit_is_jump_intensity() {
    let l = law();
    let j = l.jump_kernel();
    let x = [0.0, 0.0];
    let y = [2.0, 0.0];
    let t = 1e-4;
    let q = l.density(t, &x, &y).unwrap() / t / j.jump_intensity(&x, &y).unwrap();
    assert!((q - 1.0).abs() < 0.02, "{q}");
}

#[test]
fn comparability_constant_is_finite() {
    let l = law();
    let ts: Vec<f64> = (0..9).map(|k| 10f64.powf(-3.0 + 0.5 * k as f64)).collect();
    let rs: Vec<f64> = (0..13).map(|k| 10f64.powf(-2.0 + 0.4 * k as f64)).collect();
    let (c, lo, hi) = fit_comparability_constant(&l, &ts, &rs);
    assert!(lo > 0.0 && hi.is_finite());
    let ts2: Vec<f64> = (0..33).map(|k| 10f64.powf(-3.0 + 0.125 * k as f64)).collect();
    let rs2: Vec<f64> = (0..49).map(|k| 10f64.powf(-2.0 + 0.1 * k as f64)).collect();
    let (c2, _, _) = fit_comparability_constant(&l, &ts2, &rs2);
    assert!(c2 >= c && c2 < 1.2 * c, "{c} {c2}");
}

#[test]
fn characteristic_function_of_increments() {
    let l = law();
    let fam = StreamFamily::new(2024);
    let n = 1_000_000;
    let t = 0.7;
    let xis = [0.5, 1.0, 2.0];
    let mut sums = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    let mut rng = fam.stream(0);
    let mut dx = [0.0; 2];
    for _ in 0..n {
        l.sample_increment(t, &mut rng, &mut dx).unwrap();
        for (k, xi) in xis.iter().enumerate() {
            // direction (0.6, 0.8)
            let c = (xi * (0.6 * dx[0] + 0.8 * dx[1])).cos();
            sums[k] += c;
            sq[k] += c * c;
        }
    }
    for (k, xi) in xis.iter().enumerate() {
        let mean = sums[k] / n as f64;
        let se = ((sq[k] / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = (-t * xi.powf(1.5)).exp();
        assert!((mean - exact).abs() < 3.0 * se, "xi={xi}: {mean} vs {exact} (se {se})");
    }
}

#[test]
fn tail_exponent_regression() {
    let l = law();
    let mut rng = StreamFamily::new(99).stream(1);
    let n = 1_000_000;
    let mut radii = Vec::with_capacity(n);
    let mut dx = [0.0; 2];
    for _ in 0..n {
        l.sample_increment(1.0, &mut rng, &mut dx).unwrap();
        radii.push((dx[0] * dx[0] + dx[1] * dx[1]).sqrt());
    }
    let rs: Vec<f64> = (0..=10).map(|k| 5.0 * 10f64.powf(k as f64 / 10.0)).collect();
    let lx: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = rs.iter().map(|&r| (radii.iter().filter(|&&v| v > r).count() as f64 / n as f64).ln()).collect();
    let fit = linear_fit(&lx, &ly);
    assert!((fit.slope + 1.5).abs() < 0.05 * 1.5, "slope {}", fit.slope);
}

#[test]
fn increments_are_self_similar() {
    let l = law();
    let fam = StreamFamily::new(5);
    let n = 100_000;
    let draw = |t: f64, idx: u64| -> Vec<f64> {
        let mut rng = fam.stream(idx);
        let mut dx = [0.0; 2];
        (0..n)
            .map(|_| {
                l.sample_increment(t, &mut rng, &mut dx).unwrap();
                dx[0] * t.powf(-1.0 / 1.5)
            })
            .collect()
    };
    let a = draw(0.01, 0);
    let b = draw(1.0, 1);
    assert!(ks_two_sample(&a, &b) < ks_critical_two_sample(n, n, 0.01));
}

#[test]
fn sampled_radii_follow_tabulated_cdf() {
    let l = law();
    let mut rng = StreamFamily::new(17).stream(0);
    let n = 50_000;
    let mut dx = [0.0; 2];
    let radii: Vec<f64> = (0..n)
        .map(|_| {
            l.sample_increment(1.0, &mut rng, &mut dx).unwrap();
            (dx[0] * dx[0] + dx[1] * dx[1]).sqrt()
        })
        .collect();
    let d = driftkernel::stats::ks_one_sample(&radii, |r| l.radial_cdf(r));
    assert!(d < driftkernel::stats::ks_critical_one_sample(n, 0.01), "{d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn density_symmetric_positive_and_self_similar(
        t in 1e-3f64..10.0,
        x0 in -5.0f64..5.0, x1 in -5.0f64..5.0,
        y0 in -5.0f64..5.0, y1 in -5.0f64..5.0,
        lam in 0.2f64..5.0,
    ) {
        let l = law();
        let x = [x0, x1];
        let y = [y0, y1];
        let p = l.density(t, &x, &y).unwrap();
        prop_assert!(p > 0.0);
        prop_assert_eq!(p, l.density(t, &y, &x).unwrap());
        // p(λ^α t, λx, λy) = λ^{-d} p(t, x, y)
        let xs = [lam * x0, lam * x1];
        let ys = [lam * y0, lam * y1];
        let q = l.density(lam.powf(1.5) * t, &xs, &ys).unwrap();
        prop_assert!((q * lam * lam - p).abs() <= 1e-9 * p);
    }

    #[test]
    fn gradient_points_toward_target(
        t in 1e-2f64..5.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0,
    ) {
        let l = law();
        let mut g = [0.0; 2];
        l.grad_density(t, &[x0, x1], &[0.0, 0.0], &mut g).unwrap();
        prop_assert!(g[0] * x0 + g[1] * x1 <= 0.0);
    }
}
