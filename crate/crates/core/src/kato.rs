//! The Kato modulus `M(r) = sup_x ∫_{B(x,r)} |b(y)| |x-y|^{α-d-1} dy` and the
//! series-control functional
//! `N_b(t) = sup_w ∫∫_0^t |b(z)| (|w-z|^{-d-1} ∧ s^{-(d+1)/α}) ds dz`.
//!
//! Both integrals are evaluated in polar coordinates around the probe point,
//! with a radial substitution that absorbs the `ρ^{α-2}` singularity. The sup
//! is approximated over a probe set (field hotspots, a grid over the
//! support, Halton points) followed by local pattern refinement, so the
//! results are lower bounds of the true sup.

use serde::{Deserialize, Serialize};

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::rng::par_map;
use crate::special::{graded_edges, GaussLegendre};

/// Quadrature on the unit sphere `S^{d-1}`: directions (flattened, `n × d`)
/// and weights summing to the sphere area.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub dim: usize,
    pub dirs: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SphereRule {
    /// `n` controls the resolution: `n` equispaced angles on the circle, and
    /// `n/2` Gauss–Legendre polar angles per extra dimension.
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim >= 2);
        if dim == 2 {
            let mut dirs = Vec::with_capacity(2 * n);
            let w = 2.0 * std::f64::consts::PI / n as f64;
            for k in 0..n {
                let th = (k as f64 + 0.5) * w;
                dirs.push(th.cos());
                dirs.push(th.sin());
            }
            return Self { dim, dirs, weights: vec![w; n] };
        }
        let lower = SphereRule::new(dim - 1, n);
        // Polar angle: in u = cos θ for d = 3 (polynomial weight), in θ otherwise.
        let polar: Vec<(f64, f64)> = if dim == 3 {
            GaussLegendre::cached((n / 2).clamp(2, 128)).mapped(-1.0, 1.0).collect()
        } else {
            GaussLegendre::cached(n.clamp(2, 128))
                .mapped(0.0, std::f64::consts::PI)
                .map(|(th, w)| (th.cos(), w * th.sin().powi(dim as i32 - 2)))
                .collect()
        };
        let mut dirs = Vec::new();
        let mut weights = Vec::new();
        let m = lower.weights.len();
        for (c, wt) in polar {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..m {
                dirs.push(c);
                for i in 0..dim - 1 {
                    dirs.push(s * lower.dirs[j * (dim - 1) + i]);
                }
                weights.push(wt * lower.weights[j]);
            }
        }
        Self { dim, dirs, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dir(&self, k: usize) -> &[f64] {
        &self.dirs[k * self.dim..(k + 1) * self.dim]
    }
}

/// Radial rule on `[0,1]` for the substituted variable.
#[derive(Debug, Clone)]
struct RadialRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialRule {
    fn graded(levels: usize, order: usize, outer_split: usize) -> Self {
        let mut edges = graded_edges(1.0, levels, 0.5);
        edges.pop();
        for k in 1..=outer_split {
            edges.push(0.5 + 0.5 * k as f64 / outer_split as f64);
        }
        let rule = GaussLegendre::cached(order);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        // v = s³ smooths algebraic singularities of the integrand at v = 0.
        for w in edges.windows(2) {
            for (x, wt) in rule.mapped(w[0], w[1]) {
                nodes.push(x * x * x);
                weights.push(3.0 * x * x * wt);
            }
        }
        Self { nodes, weights }
    }
}

/// Resolution of the polar quadratures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub angular: usize,
    pub radial_levels: usize,
    pub radial_order: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { angular: 96, radial_levels: 30, radial_order: 8 }
    }
}

impl Resolution {
    fn refined(&self) -> Self {
        Self {
            angular: 2 * self.angular,
            radial_levels: self.radial_levels + 10,
            radial_order: (2 * self.radial_order).min(32),
        }
    }
}

struct Quadrature {
    sphere: SphereRule,
    radial: RadialRule,
}

impl Quadrature {
    fn new(dim: usize, res: Resolution) -> Self {
        Self {
            sphere: SphereRule::new(dim, res.angular),
            radial: RadialRule::graded(res.radial_levels, res.radial_order, 4),
        }
    }
}

/// `∫_{B(x,r)} |b(y)| |x-y|^{α-d-1} dy`, with `ρ = r v^{1/(α-1)}`.
fn kato_integral(b: &DriftField, alpha: f64, x: &[f64], r: f64, q: &Quadrature, buf: &mut [f64]) -> f64 {
    let p = 1.0 / (alpha - 1.0);
    let mut total = 0.0;
    for k in 0..q.sphere.len() {
        let dir = q.sphere.dir(k);
        let mut line = 0.0;
        for (&v, &w) in q.radial.nodes.iter().zip(&q.radial.weights) {
            let rho = r * v.powf(p);
            for i in 0..x.len() {
                buf[i] = x[i] + rho * dir[i];
            }
            line += w * b.magnitude(buf);
        }
        total += q.sphere.weights[k] * line;
    }
    total * r.powf(alpha - 1.0) / (alpha - 1.0)
}

/// `∫ |b(z)| T(|w-z|, t) dz` with `T(ρ,t) = ∫_0^t (ρ^{-d-1} ∧ s^{-(d+1)/α}) ds`
/// in closed form.
fn nb_integral(b: &DriftField, alpha: f64, w: &[f64], t: f64, q: &Quadrature, buf: &mut [f64]) -> f64 {
    let d = w.len() as f64;
    let kappa = (d + 1.0) / alpha;
    let rho_t = t.powf(1.0 / alpha);
    let p = 1.0 / (alpha - 1.0);
    // Outer radial range ρ ∈ [ρ_t, ρ_far] through ρ = ρ_t/u.
    let far = match b.support() {
        Some((c, rs)) => {
            let dist: f64 = c.iter().zip(w).map(|(a, bb)| (a - bb) * (a - bb)).sum::<f64>().sqrt();
            dist + rs
        }
        None => f64::INFINITY,
    };
    let outer_levels = if far.is_finite() {
        if far <= rho_t {
            0
        } else {
            ((far / rho_t).log2().ceil() as usize).max(1) + 1
        }
    } else {
        50
    };
    let gl = GaussLegendre::cached(8);
    let mut outer_nodes = Vec::new();
    if outer_levels > 0 {
        let edges = graded_edges(1.0, outer_levels, 0.5);
        for e in edges.windows(2).skip(1) {
            outer_nodes.extend(gl.mapped(e[0], e[1]));
        }
    }
    let mut total = 0.0;
    for k in 0..q.sphere.len() {
        let dir = q.sphere.dir(k);
        let mut inner = 0.0;
        for (&v, &wt) in q.radial.nodes.iter().zip(&q.radial.weights) {
            let rho = rho_t * v.powf(p);
            for i in 0..w.len() {
                buf[i] = w[i] + rho * dir[i];
            }
            let m = b.magnitude(buf);
            if m != 0.0 {
                let phi = kappa / (kappa - 1.0) - t.powf(1.0 - kappa) * rho.powf(d + 1.0 - alpha) / (kappa - 1.0);
                inner += wt * m * phi;
            }
        }
        inner *= rho_t.powf(alpha - 1.0) / (alpha - 1.0);
        let mut outer = 0.0;
        for &(u, wt) in &outer_nodes {
            let rho = rho_t / u;
            for i in 0..w.len() {
                buf[i] = w[i] + rho * dir[i];
            }
            outer += wt * b.magnitude(buf);
        }
        outer *= t / rho_t;
        total += q.sphere.weights[k] * (inner + outer);
    }
    total
}

/// Radical-inverse Halton point `index` in `[0,1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index + 1;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Probe points: hotspots, a grid over the (support ⊕ reach) box and
/// `n_random` Halton points in the same box.
pub fn probe_points(b: &DriftField, reach: f64, n_random: usize) -> Vec<Vec<f64>> {
    let dim = b.dim();
    let mut pts = b.hotspots();
    let (center, half) = match b.support() {
        Some((c, r)) => (c, r + reach),
        None => {
            let c = pts.first().cloned().unwrap_or_else(|| vec![0.0; dim]);
            (c, reach.max(1.0))
        }
    };
    if half <= 0.0 {
        pts.push(center);
        return pts;
    }
    let per_axis = match dim {
        2 => 21,
        3 => 9,
        _ => 5,
    };
    let total = (per_axis as usize).pow(dim as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = Vec::with_capacity(dim);
        for i in 0..dim {
            let k = rem % per_axis;
            rem /= per_axis;
            p.push(center[i] - half + 2.0 * half * k as f64 / (per_axis - 1) as f64);
        }
        pts.push(p);
    }
    for idx in 0..n_random as u64 {
        let h = halton(idx, dim);
        pts.push(center.iter().zip(&h).map(|(c, u)| c - half + 2.0 * half * u).collect());
    }
    pts
}

/// Maximize `f` over `points`, then refine the best point by compass search.
fn maximize<F: Fn(&[f64]) -> f64 + Sync>(points: &[Vec<f64>], step: f64, f: F) -> (f64, Vec<f64>, f64) {
    let values = par_map(points.len(), |i| f(&points[i]));
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    let coarse = values[best];
    let mut x = points[best].clone();
    let mut fx = coarse;
    let mut h = step;
    let dim = x.len();
    for _ in 0..12 {
        let cands: Vec<Vec<f64>> = (0..2 * dim)
            .map(|k| {
                let mut y = x.clone();
                y[k / 2] += if k % 2 == 0 { h } else { -h };
                y
            })
            .collect();
        let vals = par_map(cands.len(), |i| f(&cands[i]));
        let mut improved = false;
        for (c, v) in cands.into_iter().zip(vals) {
            if v > fx {
                fx = v;
                x = c;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (fx, x, fx - coarse)
}

/// A modulus value with the probe that attained it and an error bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Quadrature refinement difference at the argmax plus the gain of the
    /// local probe refinement.
    pub error: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (1,2), got {alpha}")));
    }
    Ok(())
}

/// `∫_{B(x,r)} |b(y)| |x-y|^{α-d-1} dy` at one point.
pub fn kato_integral_at(b: &DriftField, alpha: f64, x: &[f64], r: f64, res: Resolution) -> f64 {
    let q = Quadrature::new(b.dim(), res);
    let mut buf = vec![0.0; b.dim()];
    kato_integral(b, alpha, x, r, &q, &mut buf)
}

/// `M^α_{|b|}(r)` estimated over `probes` quasi-random probes plus the grid and hotspots.
pub fn kato_modulus(b: &DriftField, alpha: f64, r: f64, probes: usize) -> Result<SupEstimate> {
    kato_modulus_with(b, alpha, r, probes, Resolution::default())
}

pub fn kato_modulus_with(b: &DriftField, alpha: f64, r: f64, probes: usize, res: Resolution) -> Result<SupEstimate> {
    check_alpha(alpha)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    if probes == 0 {
        return Err(Error::InvalidParameter("at least one probe is required".into()));
    }
    if b.is_zero() {
        return Ok(SupEstimate { value: 0.0, argmax: vec![0.0; b.dim()], error: 0.0 });
    }
    let q = Quadrature::new(b.dim(), res);
    let pts = probe_points(b, r, probes);
    let f = |x: &[f64]| {
        let mut buf = vec![0.0; x.len()];
        kato_integral(b, alpha, x, r, &q, &mut buf)
    };
    let (value, argmax, gain) = maximize(&pts, 0.25 * r, f);
    let fine = kato_integral_at(b, alpha, &argmax, r, res.refined());
    Ok(SupEstimate { value, error: (fine - value).abs() + gain, argmax })
}

/// Modulus profile over increasing radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoProfile {
    pub radii: Vec<f64>,
    pub moduli: Vec<f64>,
    pub errors: Vec<f64>,
}

impl KatoProfile {
    /// Moduli nondecreasing in r, up to the error bars.
    pub fn is_monotone(&self) -> bool {
        self.moduli.windows(2).zip(self.errors.windows(2)).all(|(m, e)| m[1] + e[1] + e[0] >= m[0])
    }

    /// Strictly decreasing as r shrinks over the whole profile (the sampled
    /// signature of a Kato-class field).
    pub fn decays(&self) -> bool {
        self.moduli.windows(2).all(|m| m[0] < m[1])
    }
}

/// `M(r)` at each radius in `radii` (sorted ascending on output).
pub fn kato_profile(b: &DriftField, alpha: f64, radii: &[f64], probes: usize) -> Result<KatoProfile> {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    let mut moduli = Vec::with_capacity(radii.len());
    let mut errors = Vec::with_capacity(radii.len());
    for &r in &radii {
        let e = kato_modulus(b, alpha, r, probes)?;
        moduli.push(e.value);
        errors.push(e.error);
    }
    Ok(KatoProfile { radii, moduli, errors })
}

/// Default probe count for sup estimates.
pub const DEFAULT_PROBES: usize = 1000;

/// `N_b(t)` at one probe point.
pub fn nb_integral_at(b: &DriftField, alpha: f64, w: &[f64], t: f64, res: Resolution) -> f64 {
    let q = Quadrature::new(b.dim(), res);
    let mut buf = vec![0.0; b.dim()];
    nb_integral(b, alpha, w, t, &q, &mut buf)
}

/// `N_b(t)`, the sup over probes.
pub fn nb_functional(b: &DriftField, alpha: f64, t: f64, probes: usize) -> Result<SupEstimate> {
    check_alpha(alpha)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    if b.is_zero() {
        return Ok(SupEstimate { value: 0.0, argmax: vec![0.0; b.dim()], error: 0.0 });
    }
    let res = Resolution { angular: 64, radial_levels: 24, radial_order: 8 };
    let q = Quadrature::new(b.dim(), res);
    let reach = t.powf(1.0 / alpha);
    let pts = probe_points(b, reach, probes.max(1));
    let f = |w: &[f64]| {
        let mut buf = vec![0.0; w.len()];
        nb_integral(b, alpha, w, t, &q, &mut buf)
    };
    let (value, argmax, gain) = maximize(&pts, 0.25 * reach, f);
    let fine = nb_integral_at(b, alpha, &argmax, t, res.refined());
    Ok(SupEstimate { value, error: (fine - value).abs() + gain, argmax })
}

/// `x ↦ λ^{1-α} b(x/λ)`.
pub fn scaled_drift(b: &DriftField, lambda: f64, alpha: f64) -> Result<DriftField> {
    b.scaled(lambda, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::sphere_area;

    #[test]
    fn sphere_rules_integrate_constants_and_quadratics() {
        for d in 2..=4 {
            let s = SphereRule::new(d, 16);
            let area: f64 = s.weights.iter().sum();
            assert!((area - sphere_area(d)).abs() < 1e-10 * area, "d={d}");
            // ∫ x_1² dσ = area/d
            let m2: f64 = (0..s.len()).map(|k| s.weights[k] * s.dir(k)[0].powi(2)).sum();
            assert!((m2 - area / d as f64).abs() < 1e-10 * area, "d={d}");
        }
    }

    #[test]
    fn halton_points_in_unit_cube() {
        for i in 0..100 {
            assert!(halton(i, 3).iter().all(|&u| (0.0..1.0).contains(&u)));
        }
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
    }

    #[test]
    fn zero_field_has_zero_modulus() {
        let b = DriftField::zero(2);
        assert_eq!(kato_modulus(&b, 1.5, 0.3, 10).unwrap().value, 0.0);
        assert_eq!(nb_functional(&b, 1.5, 0.3, 10).unwrap().value, 0.0);
    }

    #[test]
    fn far_probe_of_compact_field_is_zero() {
        let b = DriftField::parse("invpow:0.2;1", 2).unwrap();
        let v = kato_integral_at(&b, 1.5, &[5.0, 0.0], 1.0, Resolution::default());
        assert_eq!(v, 0.0);
    }

    #[test]
    fn invalid_radius_rejected() {
        let b = DriftField::parse("const:1,0", 2).unwrap();
        assert!(kato_modulus(&b, 1.5, 0.0, 10).is_err());
        assert!(kato_modulus(&b, 1.5, -1.0, 10).is_err());
    }
}
