use std::f64::consts::PI;

use driftkernel::drift::DriftField;
use driftkernel::kato::{
    kato_integral_at, kato_modulus, kato_profile, nb_functional, nb_integral_at, scaled_drift, Resolution,
};
use driftkernel::special::{composite, tanh_sinh};

const ALPHA: f64 = 1.5;

fn shipped_kato_fields() -> Vec<DriftField> {
    vec![
        DriftField::parse("const:0.3,0.4", 2).unwrap(),
        DriftField::parse("bump:0.2,-0.1;1.0;0.3", 2).unwrap(),
        DriftField::parse("invpow:0.3;1", 2).unwrap(),
    ]
}

#[test]
fn constant_field_matches_polar_integral() {
    let b = DriftField::parse("const:0.3,0.4", 2).unwrap();
    for &r in &[0.01, 0.3, 2.0] {
        let m = kato_modulus(&b, ALPHA, r, 50).unwrap().value;
        let exact = 0.5 * 2.0 * PI * r.powf(ALPHA - 1.0) / (ALPHA - 1.0);
        assert!((m - exact).abs() < 1e-10 * exact, "r={r}: {m} vs {exact}");
    }
}

#[test]
fn inverse_power_at_origin_matches_closed_form() {
    let gamma = 0.3;
    let b = DriftField::parse("invpow:0.3;1", 2).unwrap();
    for &r in &[0.05, 0.5, 1.0] {
        let v = kato_integral_at(&b, ALPHA, &[0.0, 0.0], r, Resolution::default());
        let exact = 2.0 * PI * r.powf(ALPHA - 1.0 - gamma) / (ALPHA - 1.0 - gamma);
        assert!((v - exact).abs() < 1e-6 * exact, "r={r}: {v} vs {exact}");
        let m = kato_modulus(&b, ALPHA, r, 200).unwrap();
        assert!(m.value >= v * (1.0 - 1e-9));
    }
}

#[test]
fn modulus_scaling_identity() {
    for b in shipped_kato_fields() {
        for &lam in &[0.5, 2.0, 4.0] {
            let bl = scaled_drift(&b, lam, ALPHA).unwrap();
            for &r in &[0.1, 0.4] {
                let lhs = kato_modulus(&bl, ALPHA, r, 300).unwrap().value;
                let rhs = kato_modulus(&b, ALPHA, r / lam, 300).unwrap().value;
                assert!((lhs - rhs).abs() <= 0.02 * rhs, "{b} lam={lam} r={r}: {lhs} vs {rhs}");
                if lam >= 1.0 {
                    let base = kato_modulus(&b, ALPHA, r, 300).unwrap().value;
                    assert!(lhs <= base * (1.0 + 1e-9), "{b} lam={lam}");
                }
            }
        }
    }
}

#[test]
fn profiles_are_monotone_and_decay_for_kato_fields() {
    let radii: Vec<f64> = (0..=8).map(|k| 2f64.powi(-k)).collect();
    for b in shipped_kato_fields() {
        let p = kato_profile(&b, ALPHA, &radii, 200).unwrap();
        assert!(p.is_monotone(), "{b}");
        assert!(p.decays(), "{b}: {:?}", p.moduli);
    }
}

#[test]
fn non_kato_inverse_power_does_not_decay() {
    // gamma > alpha - 1: the modulus grows as r shrinks.
    let b = DriftField::parse("invpow:0.7;1", 2).unwrap();
    let radii: Vec<f64> = (0..=8).map(|k| 2f64.powi(-k)).collect();
    let p = kato_profile(&b, ALPHA, &radii, 100).unwrap();
    assert!(!p.decays());
    assert!(p.moduli[0] > p.moduli[8]);
}

fn nb_constant_closed_form(c: f64, d: f64, t: f64) -> f64 {
    let kappa = (d + 1.0) / ALPHA;
    let rt = t.powf(1.0 / ALPHA);
    let omega = 2.0 * PI;
    c * omega * rt.powf(ALPHA - 1.0) * (kappa / ((kappa - 1.0) * (ALPHA - 1.0)) - 1.0 / (d * (kappa - 1.0)) + 1.0)
}

#[test]
fn nb_of_constant_field() {
    let b = DriftField::parse("const:0.6,0.8", 2).unwrap();
    for &t in &[0.01, 0.1, 1.0] {
        let v = nb_functional(&b, ALPHA, t, 20).unwrap().value;
        let exact = nb_constant_closed_form(1.0, 2.0, t);
        assert!((v - exact).abs() < 1e-6 * exact, "t={t}: {v} vs {exact}");
    }
}

/// Nested quadrature: numeric time integral inside a 2-d polar integral.
fn nb_bump_oracle(amp: f64, width: f64, offset: f64, t: f64) -> f64 {
    let time_part = |rho: f64| {
        // ∫_0^t min(ρ^{-3}, s^{-3/α}) ds, split at the kink.
        let kink = rho.powf(ALPHA).min(t);
        let mut v = kink * rho.powi(-3);
        if kink < t {
            let mut edges = vec![kink];
            while *edges.last().unwrap() < t {
                let next = (2.0 * edges.last().unwrap()).min(t);
                edges.push(next);
            }
            v += composite(&edges, 16, |s| s.powf(-3.0 / ALPHA));
        }
        v
    };
    let angular = |rho: f64| {
        // ∫_0^{2π} |b|(w + ρθ) dθ with |w - c| = offset.
        composite(&(0..=16).map(|k| k as f64 * PI / 8.0).collect::<Vec<_>>(), 16, |th| {
            let dx = offset + rho * th.cos();
            let dy = rho * th.sin();
            amp * (-(dx * dx + dy * dy) / (2.0 * width * width)).exp()
        })
    };
    let f = |rho: f64| rho * time_part(rho) * angular(rho);
    tanh_sinh(0.0, 0.5, 1.0 / 64.0, f)
        + composite(&(1..=40).map(|k| 0.5 * k as f64 / 4.0 + 0.375).collect::<Vec<_>>(), 16, f)
}

#[test]
fn nb_of_bump_matches_nested_quadrature() {
    let b = DriftField::parse("bump:0.2,-0.1;1.0;0.3", 2).unwrap();
    let t = 0.1;
    let at_center = nb_bump_oracle(1.0, 0.3, 0.0, t);
    let sup = nb_functional(&b, ALPHA, t, 200).unwrap();
    assert!((sup.value - at_center).abs() < 0.01 * at_center, "{} vs {at_center}", sup.value);
    let off = nb_integral_at(&b, ALPHA, &[0.5, -0.1], t, Resolution::default());
    let oracle_off = nb_bump_oracle(1.0, 0.3, 0.3, t);
    assert!((off - oracle_off).abs() < 0.01 * oracle_off, "{off} vs {oracle_off}");
}

#[test]
fn nb_monotone_in_time_and_scaling() {
    for b in shipped_kato_fields() {
        let ts = [0.01, 0.05, 0.2, 0.5];
        let vals: Vec<f64> = ts.iter().map(|&t| nb_functional(&b, ALPHA, t, 100).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]), "{b}: {vals:?}");
        // N_{b_λ}(t) = N_b(λ^{-α} t)
        let lam = 2.0;
        let bl = scaled_drift(&b, lam, ALPHA).unwrap();
        let lhs = nb_functional(&bl, ALPHA, 0.2, 100).unwrap().value;
        let rhs = nb_functional(&b, ALPHA, 0.2 * lam.powf(-ALPHA), 100).unwrap().value;
        assert!((lhs - rhs).abs() < 0.02 * rhs, "{b}: {lhs} vs {rhs}");
    }
}

#[test]
fn magnitude_bound_respected_on_probes() {
    let b = DriftField::parse("sum:(const:0.1,0)+(bump:0,0;1,1;0.3)", 2).unwrap();
    let bound = b.magnitude_bound().unwrap();
    for i in 0..500u64 {
        let p = driftkernel::kato::halton(i, 2);
        let x = [4.0 * p[0] - 2.0, 4.0 * p[1] - 2.0];
        assert!(b.magnitude(&x) <= bound * (1.0 + 1e-12));
    }
}
