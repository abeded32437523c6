//! Bounded open sets with distance oracles, and the comparison templates used
//! for killed heat kernels and Green functions.
//!
//! Descriptor grammar:
//!
//! ```text
//! ball:r[@c1,c2,...]
//! annulus:rin,rout
//! twoballs:r1,r2,gap                 centers at ∓(r_i + gap/2) e_1
//! levelset:ellipse[,a,b]             x²/a² + y²/b² < 1        (d = 2)
//! levelset:superellipse[,a,b,p]      |x/a|^p + |y/b|^p < 1    (d = 2, p ≥ 2)
//! ```

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::special::{gamma, incomplete_beta};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Star-shaped planar level set `{φ < 0}` given by its polar boundary radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelSetPreset {
    Ellipse { a: f64, b: f64 },
    Superellipse { a: f64, b: f64, p: f64 },
}

impl LevelSetPreset {
    /// Boundary radius in direction `θ`.
    fn radius(&self, th: f64) -> f64 {
        let (s, c) = th.sin_cos();
        match *self {
            LevelSetPreset::Ellipse { a, b } => 1.0 / ((c / a).powi(2) + (s / b).powi(2)).sqrt(),
            LevelSetPreset::Superellipse { a, b, p } => ((c / a).abs().powf(p) + (s / b).abs().powf(p)).powf(-1.0 / p),
        }
    }

    fn phi(&self, x: &[f64]) -> f64 {
        match *self {
            LevelSetPreset::Ellipse { a, b } => (x[0] / a).powi(2) + (x[1] / b).powi(2) - 1.0,
            LevelSetPreset::Superellipse { a, b, p } => (x[0] / a).abs().powf(p) + (x[1] / b).abs().powf(p) - 1.0,
        }
    }

    fn boundary(&self, th: f64) -> [f64; 2] {
        let r = self.radius(th);
        [r * th.cos(), r * th.sin()]
    }

    fn scaled(&self, l: f64) -> Self {
        match *self {
            LevelSetPreset::Ellipse { a, b } => LevelSetPreset::Ellipse { a: a * l, b: b * l },
            LevelSetPreset::Superellipse { a, b, p } => LevelSetPreset::Superellipse { a: a * l, b: b * l, p },
        }
    }

    /// Nearest boundary point by multi-start sampling in `θ` followed by
    /// golden-section refinement.
    fn nearest(&self, x: &[f64]) -> ([f64; 2], f64) {
        const STARTS: usize = 256;
        let d2 = |th: f64| {
            let p = self.boundary(th);
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let h = 2.0 * PI / STARTS as f64;
        let vals: Vec<f64> = (0..STARTS).map(|k| d2(k as f64 * h)).collect();
        let mut order: Vec<usize> = (0..STARTS).collect();
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        let mut best = (f64::INFINITY, 0.0);
        for &k in order.iter().take(3) {
            let (mut lo, mut hi) = ((k as f64 - 1.0) * h, (k as f64 + 1.0) * h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            let mut c = hi - g * (hi - lo);
            let mut d = lo + g * (hi - lo);
            let (mut fc, mut fd) = (d2(c), d2(d));
            for _ in 0..80 {
                if fc < fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - g * (hi - lo);
                    fc = d2(c);
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + g * (hi - lo);
                    fd = d2(d);
                }
                if hi - lo < 1e-13 {
                    break;
                }
            }
            let th = 0.5 * (lo + hi);
            let v = d2(th);
            if v < best.0 {
                best = (v, th);
            }
        }
        (self.boundary(best.1), best.0.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_in: f64, r_out: f64 },
    TwoBalls { c1: Vec<f64>, r1: f64, c2: Vec<f64>, r2: f64, gap: f64 },
    LevelSet(LevelSetPreset),
}

/// A bounded open set in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    dim: usize,
    kind: DomainKind,
    diameter: f64,
}

impl Domain {
    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        ensure_finite(&center, "ball center")?;
        positive(radius, "ball radius")?;
        let dim = check_dim(center.len())?;
        Ok(Self { dim, diameter: 2.0 * radius, kind: DomainKind::Ball { center, radius } })
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(vec![0.0; dim], 1.0).expect("valid unit ball")
    }

    pub fn annulus(center: Vec<f64>, r_in: f64, r_out: f64) -> Result<Self> {
        ensure_finite(&center, "annulus center")?;
        positive(r_in, "inner radius")?;
        if r_out <= r_in || !r_out.is_finite() {
            return Err(Error::Descriptor(format!("annulus needs rin < rout, got {r_in}, {r_out}")));
        }
        let dim = check_dim(center.len())?;
        Ok(Self { dim, diameter: 2.0 * r_out, kind: DomainKind::Annulus { center, r_in, r_out } })
    }

    pub fn two_balls(dim: usize, r1: f64, r2: f64, gap: f64) -> Result<Self> {
        positive(r1, "first radius")?;
        positive(r2, "second radius")?;
        positive(gap, "gap")?;
        check_dim(dim)?;
        let mut c1 = vec![0.0; dim];
        let mut c2 = vec![0.0; dim];
        c1[0] = -(r1 + 0.5 * gap);
        c2[0] = r2 + 0.5 * gap;
        Ok(Self { dim, diameter: 2.0 * r1 + 2.0 * r2 + gap, kind: DomainKind::TwoBalls { c1, r1, c2, r2, gap } })
    }

    pub fn level_set(preset: LevelSetPreset) -> Result<Self> {
        match preset {
            LevelSetPreset::Ellipse { a, b } => {
                positive(a, "ellipse axis")?;
                positive(b, "ellipse axis")?;
            }
            LevelSetPreset::Superellipse { a, b, p } => {
                positive(a, "superellipse axis")?;
                positive(b, "superellipse axis")?;
                if !(p >= 2.0) || !p.is_finite() {
                    return Err(Error::Descriptor(format!("superellipse exponent must be >= 2, got {p}")));
                }
            }
        }
        // Centrally symmetric: diameter is twice the largest boundary radius.
        let n = 3600;
        let rmax = (0..n).map(|k| preset.radius(2.0 * PI * k as f64 / n as f64)).fold(0.0, f64::max);
        Ok(Self { dim: 2, diameter: 2.0 * rmax, kind: DomainKind::LevelSet(preset) })
    }

    /// Parse a descriptor in dimension `dim`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let text = text.trim();
        let (head, body) =
            text.split_once(':').ok_or_else(|| Error::Descriptor(format!("`{text}`: expected `kind:parameters`")))?;
        let nums = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Descriptor(format!("`{text}`: cannot parse `{}`", p.trim())))
                })
                .collect()
        };
        match head.trim() {
            "ball" => {
                let (r, c) = match body.split_once('@') {
                    Some((r, c)) => (nums(r)?, nums(c)?),
                    None => (nums(body)?, vec![0.0; dim]),
                };
                if r.len() != 1 || c.len() != dim {
                    return Err(Error::Descriptor(format!("`{text}`: expected `ball:r[@center]` in dimension {dim}")));
                }
                Domain::ball(c, r[0])
            }
            "annulus" => {
                let v = nums(body)?;
                if v.len() != 2 {
                    return Err(Error::Descriptor(format!("`{text}`: expected `annulus:rin,rout`")));
                }
                Domain::annulus(vec![0.0; dim], v[0], v[1])
            }
            "twoballs" => {
                let v = nums(body)?;
                if v.len() != 3 {
                    return Err(Error::Descriptor(format!("`{text}`: expected `twoballs:r1,r2,gap`")));
                }
                Domain::two_balls(dim, v[0], v[1], v[2])
            }
            "levelset" => {
                if dim != 2 {
                    return Err(Error::Descriptor("level-set presets are planar (dim = 2)".into()));
                }
                let mut parts = body.splitn(2, ',');
                let name = parts.next().unwrap_or("").trim();
                let v = nums(parts.next().unwrap_or(""))?;
                let preset = match (name, v.len()) {
                    ("ellipse", 0) => LevelSetPreset::Ellipse { a: 1.0, b: 0.6 },
                    ("ellipse", 2) => LevelSetPreset::Ellipse { a: v[0], b: v[1] },
                    ("superellipse", 0) => LevelSetPreset::Superellipse { a: 1.0, b: 1.0, p: 4.0 },
                    ("superellipse", 3) => LevelSetPreset::Superellipse { a: v[0], b: v[1], p: v[2] },
                    _ => {
                        return Err(Error::Descriptor(format!(
                            "`{text}`: presets are `ellipse[,a,b]` and `superellipse[,a,b,p]`"
                        )))
                    }
                };
                Domain::level_set(preset)
            }
            other => Err(Error::Descriptor(format!(
                "unknown domain kind `{other}` (expected ball, annulus, twoballs or levelset)"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn descriptor(&self) -> String {
        self.to_string()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.kind {
            DomainKind::Ball { center, radius } => dist(x, center) < *radius,
            DomainKind::Annulus { center, r_in, r_out } => {
                let r = dist(x, center);
                r > *r_in && r < *r_out
            }
            DomainKind::TwoBalls { c1, r1, c2, r2, .. } => dist(x, c1) < *r1 || dist(x, c2) < *r2,
            DomainKind::LevelSet(p) => p.phi(x) < 0.0,
        }
    }

    /// Distance to the complement: positive inside, zero outside.
    pub fn delta(&self, x: &[f64]) -> f64 {
        let v = match &self.kind {
            DomainKind::Ball { center, radius } => radius - dist(x, center),
            DomainKind::Annulus { center, r_in, r_out } => {
                let r = dist(x, center);
                (r - r_in).min(r_out - r)
            }
            DomainKind::TwoBalls { c1, r1, c2, r2, .. } => (r1 - dist(x, c1)).max(r2 - dist(x, c2)),
            DomainKind::LevelSet(p) => {
                if p.phi(x) >= 0.0 {
                    return 0.0;
                }
                p.nearest(x).1
            }
        };
        v.max(0.0)
    }

    /// Cheap distance to the complement for step control: exact for balls,
    /// annuli and ball pairs, `-φ/|∇φ|` for level sets.
    pub fn delta_estimate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::LevelSet(p) => {
                let f = p.phi(x);
                if f >= 0.0 {
                    return 0.0;
                }
                let h = 1e-6;
                let gx = p.phi(&[x[0] + h, x[1]]) - p.phi(&[x[0] - h, x[1]]);
                let gy = p.phi(&[x[0], x[1] + h]) - p.phi(&[x[0], x[1] - h]);
                let g = (gx * gx + gy * gy).sqrt() / (2.0 * h);
                if g > 0.0 {
                    (-f / g).min(self.diameter)
                } else {
                    self.diameter
                }
            }
            _ => self.delta(x),
        }
    }

    /// Nearest boundary point and the inward unit normal there.
    pub fn project_to_boundary(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let radial = |c: &[f64], r: f64, inward_sign: f64| {
            let mut u: Vec<f64> = x.iter().zip(c).map(|(a, b)| a - b).collect();
            let n = norm(&u);
            if n == 0.0 {
                u.iter_mut().for_each(|v| *v = 0.0);
                u[0] = 1.0;
            } else {
                u.iter_mut().for_each(|v| *v /= n);
            }
            let p: Vec<f64> = c.iter().zip(&u).map(|(ci, ui)| ci + r * ui).collect();
            let normal: Vec<f64> = u.iter().map(|ui| inward_sign * ui).collect();
            (p, normal)
        };
        match &self.kind {
            DomainKind::Ball { center, radius } => radial(center, *radius, -1.0),
            DomainKind::Annulus { center, r_in, r_out } => {
                let r = dist(x, center);
                if r - r_in < r_out - r {
                    radial(center, *r_in, 1.0)
                } else {
                    radial(center, *r_out, -1.0)
                }
            }
            DomainKind::TwoBalls { c1, r1, c2, r2, .. } => {
                if r1 - dist(x, c1) >= r2 - dist(x, c2) {
                    radial(c1, *r1, -1.0)
                } else {
                    radial(c2, *r2, -1.0)
                }
            }
            DomainKind::LevelSet(p) => {
                let (b, d) = p.nearest(x);
                let mut n = vec![x[0] - b[0], x[1] - b[1]];
                if d > 1e-12 {
                    let sign = if p.phi(x) < 0.0 { 1.0 } else { -1.0 };
                    n.iter_mut().for_each(|v| *v *= sign / d);
                } else {
                    // Gradient of φ points outward.
                    let h = 1e-7;
                    let gx = p.phi(&[b[0] + h, b[1]]) - p.phi(&[b[0] - h, b[1]]);
                    let gy = p.phi(&[b[0], b[1] + h]) - p.phi(&[b[0], b[1] - h]);
                    let g = (gx * gx + gy * gy).sqrt();
                    n = vec![-gx / g, -gy / g];
                }
                (b.to_vec(), n)
            }
        }
    }

    /// `(R_0, Λ_0)` for the C^{1,1} boundary: interior/exterior ball radius
    /// and the Lipschitz constant of the boundary normal.
    pub fn c11_characteristics(&self) -> Option<(f64, f64)> {
        match &self.kind {
            DomainKind::Ball { radius, .. } => Some((*radius, 1.0 / radius)),
            DomainKind::Annulus { r_in, r_out, .. } => Some((r_in.min(0.5 * (r_out - r_in)), 1.0 / r_in)),
            DomainKind::TwoBalls { r1, r2, gap, .. } => Some((r1.min(*r2).min(0.5 * gap), 1.0 / r1.min(*r2))),
            DomainKind::LevelSet(p) => {
                // Maximal curvature along the boundary by finite differences.
                let n = 4096;
                let h = 2.0 * PI / n as f64;
                let mut kmax: f64 = 0.0;
                for k in 0..n {
                    let th = k as f64 * h;
                    let a = p.boundary(th - h);
                    let b = p.boundary(th);
                    let c = p.boundary(th + h);
                    let x1 = [(c[0] - a[0]) / (2.0 * h), (c[1] - a[1]) / (2.0 * h)];
                    let x2 = [(c[0] - 2.0 * b[0] + a[0]) / (h * h), (c[1] - 2.0 * b[1] + a[1]) / (h * h)];
                    let kap = (x1[0] * x2[1] - x1[1] * x2[0]).abs() / (x1[0] * x1[0] + x1[1] * x1[1]).powf(1.5);
                    kmax = kmax.max(kap);
                }
                Some((1.0 / kmax, kmax))
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                (center.iter().map(|c| c - radius).collect(), center.iter().map(|c| c + radius).collect())
            }
            DomainKind::Annulus { center, r_out, .. } => {
                (center.iter().map(|c| c - r_out).collect(), center.iter().map(|c| c + r_out).collect())
            }
            DomainKind::TwoBalls { c1, r1, c2, r2, .. } => {
                let r = r1.max(*r2);
                let lo = (0..self.dim).map(|i| (c1[i] - r1).min(c2[i] - r2).min(-r)).collect();
                let hi = (0..self.dim).map(|i| (c1[i] + r1).max(c2[i] + r2).max(r)).collect();
                (lo, hi)
            }
            DomainKind::LevelSet(_) => (vec![-0.5 * self.diameter; 2], vec![0.5 * self.diameter; 2]),
        }
    }

    /// Uniform point of the domain by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect();
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// A point at distance `depth` from the boundary, along the inward normal
    /// from the boundary point nearest to a uniform interior draw.
    pub fn sample_at_depth<R: Rng + ?Sized>(&self, rng: &mut R, depth: f64) -> Vec<f64> {
        for _ in 0..1000 {
            let x = self.sample_uniform(rng);
            let (p, n) = self.project_to_boundary(&x);
            let y: Vec<f64> = p.iter().zip(&n).map(|(a, b)| a + depth * b).collect();
            if self.contains(&y) && (self.delta(&y) - depth).abs() <= 1e-6 * self.diameter.max(depth) {
                return y;
            }
        }
        self.sample_uniform(rng)
    }

    /// `λD`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        positive(lambda, "scale factor")?;
        let s = |v: &Vec<f64>| v.iter().map(|a| a * lambda).collect::<Vec<_>>();
        let kind = match &self.kind {
            DomainKind::Ball { center, radius } => DomainKind::Ball { center: s(center), radius: radius * lambda },
            DomainKind::Annulus { center, r_in, r_out } => {
                DomainKind::Annulus { center: s(center), r_in: r_in * lambda, r_out: r_out * lambda }
            }
            DomainKind::TwoBalls { c1, r1, c2, r2, gap } => {
                DomainKind::TwoBalls { c1: s(c1), r1: r1 * lambda, c2: s(c2), r2: r2 * lambda, gap: gap * lambda }
            }
            DomainKind::LevelSet(p) => DomainKind::LevelSet(p.scaled(lambda)),
        };
        Ok(Self { dim: self.dim, kind, diameter: self.diameter * lambda })
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        ensure_finite(x, "point")?;
        if x.len() != self.dim {
            return Err(Error::InvalidParameter("point dimension mismatch".into()));
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain);
        }
        Ok(())
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Descriptor(format!("{what} must be positive, got {v}")))
    }
}

fn check_dim(d: usize) -> Result<usize> {
    if d < 2 {
        Err(Error::InvalidParameter(format!("dimension must be at least 2, got {d}")))
    } else {
        Ok(d)
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DomainKind::Ball { center, radius } => {
                if center.iter().all(|&c| c == 0.0) {
                    write!(f, "ball:{radius:?}")
                } else {
                    write!(f, "ball:{radius:?}@{}", fmt_list(center))
                }
            }
            DomainKind::Annulus { r_in, r_out, .. } => write!(f, "annulus:{r_in:?},{r_out:?}"),
            DomainKind::TwoBalls { r1, r2, gap, .. } => write!(f, "twoballs:{r1:?},{r2:?},{gap:?}"),
            DomainKind::LevelSet(LevelSetPreset::Ellipse { a, b }) => write!(f, "levelset:ellipse,{a:?},{b:?}"),
            DomainKind::LevelSet(LevelSetPreset::Superellipse { a, b, p }) => {
                write!(f, "levelset:superellipse,{a:?},{b:?},{p:?}")
            }
        }
    }
}

/// Free comparability profile `t^{-d/α} ∧ t |x-y|^{-d-α}`.
pub fn free_profile(alpha: f64, dim: usize, t: f64, r: f64) -> f64 {
    let d = dim as f64;
    let a = t.powf(-d / alpha);
    if r == 0.0 {
        a
    } else {
        a.min(t * r.powf(-d - alpha))
    }
}

/// Small-time heat-kernel template
/// `(1 ∧ δ(x)^{α/2}/√t)(1 ∧ δ(y)^{α/2}/√t)(t^{-d/α} ∧ t|x-y|^{-d-α})`.
pub fn f_d(domain: &Domain, alpha: f64, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    domain.check_point(x)?;
    domain.check_point(y)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
    }
    Ok(f_d_unchecked(alpha, domain.dim(), t, domain.delta(x), domain.delta(y), dist(x, y)))
}

pub fn f_d_unchecked(alpha: f64, dim: usize, t: f64, dx: f64, dy: f64, r: f64) -> f64 {
    let st = t.sqrt();
    let bx = (dx.powf(alpha / 2.0) / st).min(1.0);
    let by = (dy.powf(alpha / 2.0) / st).min(1.0);
    bx * by * free_profile(alpha, dim, t, r)
}

/// Green template `|x-y|^{α-d} (1 ∧ δ(x)δ(y)/|x-y|²)^{α/2}`.
pub fn g_d(domain: &Domain, alpha: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    domain.check_point(x)?;
    domain.check_point(y)?;
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Coincident);
    }
    Ok(g_d_unchecked(alpha, domain.dim(), domain.delta(x), domain.delta(y), r))
}

pub fn g_d_unchecked(alpha: f64, dim: usize, dx: f64, dy: f64, r: f64) -> f64 {
    r.powf(alpha - dim as f64) * (dx * dy / (r * r)).min(1.0).powf(alpha / 2.0)
}

/// The same template written as `|x-y|^{α-d} (1 ∧ δ(x)^{α/2}δ(y)^{α/2}/|x-y|^α)`;
/// algebraically identical to [`g_d`].
pub fn g_d_product_form(domain: &Domain, alpha: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    domain.check_point(x)?;
    domain.check_point(y)?;
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Coincident);
    }
    let a = alpha / 2.0;
    let q = domain.delta(x).powf(a) * domain.delta(y).powf(a) / r.powf(alpha);
    Ok(r.powf(alpha - domain.dim() as f64) * q.min(1.0))
}

/// `(1 ∧ δ(x)δ(y)/|x-y|², δ(x)δ(y)/r(x,y)²)` with `r = δ(x)+δ(y)+|x-y|`.
pub fn r_form_pair(domain: &Domain, x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    domain.check_point(x)?;
    domain.check_point(y)?;
    let (dx, dy, r) = (domain.delta(x), domain.delta(y), dist(x, y));
    if r == 0.0 {
        return Err(Error::Coincident);
    }
    let rr = dx + dy + r;
    Ok(((dx * dy / (r * r)).min(1.0), dx * dy / (rr * rr)))
}

/// Constant `Γ(d/2) / (2^α π^{d/2} Γ(α/2)²)` of the ball Green function.
pub fn ball_green_constant(alpha: f64, dim: usize) -> f64 {
    let d = dim as f64;
    gamma(d / 2.0) / (2f64.powf(alpha) * PI.powf(d / 2.0) * gamma(alpha / 2.0).powi(2))
}

/// Mean exit time from the center of a ball of radius `r`.
pub fn ball_mean_exit_time(alpha: f64, dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    r.powf(alpha) * gamma(d / 2.0) / (2f64.powf(alpha) * gamma(1.0 + alpha / 2.0) * gamma((d + alpha) / 2.0))
}

/// Closed-form Green function of the ball for the killed stable process.
#[derive(Debug, Clone, PartialEq)]
pub struct BallGreen {
    pub center: Vec<f64>,
    pub radius: f64,
    pub alpha: f64,
    pub dim: usize,
    kappa: f64,
}

impl BallGreen {
    pub fn new(center: Vec<f64>, radius: f64, alpha: f64) -> Result<Self> {
        positive(radius, "ball radius")?;
        let dim = check_dim(center.len())?;
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (1,2), got {alpha}")));
        }
        Ok(Self { kappa: ball_green_constant(alpha, dim), center, radius, alpha, dim })
    }

    pub fn for_domain(domain: &Domain, alpha: f64) -> Result<Self> {
        match domain.kind() {
            DomainKind::Ball { center, radius } => Self::new(center.clone(), *radius, alpha),
            _ => Err(Error::InvalidParameter("closed-form Green function needs a ball".into())),
        }
    }

    fn w(&self, x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
        let r2 = self.radius * self.radius;
        let ax = r2 - dist(x, &self.center).powi(2);
        let ay = r2 - dist(y, &self.center).powi(2);
        let s2: f64 = dist(x, y).powi(2);
        (ax * ay / (r2 * s2), ax, ay, s2)
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        ensure_finite(x, "x")?;
        ensure_finite(y, "y")?;
        if dist(x, &self.center) >= self.radius || dist(y, &self.center) >= self.radius {
            return Err(Error::OutsideDomain);
        }
        if dist(x, y) == 0.0 {
            return Err(Error::Coincident);
        }
        Ok(())
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check(x, y)?;
        Ok(self.value_unchecked(x, y))
    }

    pub fn value_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let (w, _, _, s2) = self.w(x, y);
        let a = self.alpha / 2.0;
        let b = (self.dim as f64 - self.alpha) / 2.0;
        self.kappa * s2.powf((self.alpha - self.dim as f64) / 2.0) * incomplete_beta(w / (1.0 + w), a, b)
    }

    /// `∇_x G(x, y)`.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check(x, y)?;
        let mut out = vec![0.0; self.dim];
        self.gradient_into(x, y, &mut out);
        Ok(out)
    }

    pub fn gradient_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (w, _ax, ay, s2) = self.w(x, y);
        let d = self.dim as f64;
        let a = self.alpha / 2.0;
        let b = (d - self.alpha) / 2.0;
        let r2 = self.radius * self.radius;
        let s_pow = s2.powf((self.alpha - d) / 2.0);
        let big_i = incomplete_beta(w / (1.0 + w), a, b);
        let di = w.powf(a - 1.0) * (1.0 + w).powf(-d / 2.0);
        for i in 0..self.dim {
            let xy = x[i] - y[i];
            let xc = x[i] - self.center[i];
            let dw = -2.0 * xc * ay / (r2 * s2) - 2.0 * w * xy / s2;
            out[i] = self.kappa * ((self.alpha - d) * s_pow / s2 * xy * big_i + s_pow * di * dw);
        }
    }
}

/// Ratios LHS/RHS of the two 3G inequalities at `(x, z, y)`:
///
/// `g(x,z) g(z,y)/(|z-y| ∧ δ(z))` against `g(x,y)(|x-z|^{α-d-1} + |z-y|^{α-d-1})`, and
/// `g(x,z)/(|x-z| ∧ δ(x)) · g(z,y)/(|z-y| ∧ δ(z))` against
/// `g(x,y)/(|x-y| ∧ δ(x)) (|x-z|^{α-d-1} + |z-y|^{α-d-1})`.
pub fn three_g_ratio(domain: &Domain, alpha: f64, x: &[f64], z: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    for p in [x, z, y] {
        domain.check_point(p)?;
    }
    let (rxz, rzy, rxy) = (dist(x, z), dist(z, y), dist(x, y));
    if rxz == 0.0 || rzy == 0.0 || rxy == 0.0 {
        return Err(Error::Coincident);
    }
    let (dx, dz, dy) = (domain.delta(x), domain.delta(z), domain.delta(y));
    Ok(three_g_ratio_unchecked(alpha, domain.dim(), [dx, dz, dy], [rxz, rzy, rxy]))
}

pub fn three_g_ratio_unchecked(alpha: f64, dim: usize, deltas: [f64; 3], dists: [f64; 3]) -> (f64, f64) {
    let [dx, dz, dy] = deltas;
    let [rxz, rzy, rxy] = dists;
    let g = |da: f64, db: f64, r: f64| g_d_unchecked(alpha, dim, da, db, r);
    let e = alpha - dim as f64 - 1.0;
    let sing = rxz.powf(e) + rzy.powf(e);
    let gxz = g(dx, dz, rxz);
    let gzy = g(dz, dy, rzy);
    let gxy = g(dx, dy, rxy);
    let first = gxz * gzy / rzy.min(dz) / (gxy * sing);
    let second = gxz / rxz.min(dx) * gzy / rzy.min(dz) / (gxy / rxy.min(dx) * sing);
    (first, second)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptors_round_trip() {
        for s in [
            "ball:1.0",
            "ball:0.5@0.1,0.2",
            "annulus:0.5,1.0",
            "twoballs:1.0,0.5,0.3",
            "levelset:ellipse,1.0,0.6",
            "levelset:superellipse,1.0,1.0,4.0",
        ] {
            let d = Domain::parse(s, 2).unwrap();
            assert_eq!(d.descriptor(), s);
            assert_eq!(Domain::parse(&d.descriptor(), 2).unwrap(), d);
        }
        assert!(Domain::parse("annulus:1,0.5", 2).is_err());
        assert!(Domain::parse("cube:1", 2).is_err());
        assert!(Domain::parse("levelset:torus", 2).is_err());
    }

    #[test]
    fn delta_positive_iff_inside() {
        let d = Domain::parse("twoballs:1,0.5,0.3", 2).unwrap();
        assert!(d.contains(&[-1.15, 0.0]));
        assert!(!d.contains(&[0.0, 0.0]));
        assert_eq!(d.delta(&[0.0, 0.0]), 0.0);
        assert!((d.delta(&[-1.15, 0.0]) - 1.0).abs() < 1e-12);
        assert!((d.diameter() - 3.3).abs() < 1e-12);
    }

    #[test]
    fn ball_green_far_field_is_riesz_kernel() {
        // In a huge ball the Green function approaches the Riesz potential kernel.
        let g = BallGreen::new(vec![0.0, 0.0], 1e6, 1.5).unwrap();
        let v = g.value(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        let riesz = gamma(0.25) / (2f64.powf(1.5) * PI * gamma(0.75));
        assert!((v - riesz).abs() < 1e-3 * riesz, "{v} {riesz}");
    }

    #[test]
    fn green_gradient_matches_finite_difference() {
        let g = BallGreen::new(vec![0.1, 0.0], 1.0, 1.5).unwrap();
        let x = [0.3, 0.2];
        let y = [-0.2, -0.4];
        let grad = g.gradient(&x, &y).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (g.value(&xp, &y).unwrap() - g.value(&xm, &y).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{fd} {}", grad[i]);
        }
    }
}
