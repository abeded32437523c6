//! The rotationally symmetric α-stable law on `R^d`: transition density,
//! its spatial gradient, exact increment sampling and the jump intensity.
//!
//! The unit-time radial profile `G(ρ)` (so that `p(t,x,y) = t^{-d/α}
//! G(t^{-1/α}|x-y|)`) is tabulated once per `(α, d)` from two quadrature
//! routes: the Hankel form of the Fourier inversion for `ρ ≤ 2`, and the
//! Gaussian mixture over the one-sided `α/2`-stable subordinator for `ρ > 2`.
//! Gradients use the identity `G_d'(ρ) = -2πρ G_{d+2}(ρ)`, which is the
//! analytic derivative of either integrand.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::special::{bessel_j_scaled, composite, gamma, graded_edges, sphere_area, tanh_sinh};

/// Number of log-spaced table nodes.
pub const TABLE_NODES: usize = 4096;
/// Smallest tabulated radius; below it the even Taylor expansion is used.
pub const RHO_MIN: f64 = 1e-3;
/// Largest tabulated radius; beyond it a matched power-law tail is used.
pub const RHO_MAX: f64 = 50.0;
/// Radius where the table switches from the Fourier route to the
/// subordination route.
pub const RHO_SWITCH: f64 = 2.0;

pub(crate) fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Quadrature routes for the unit-time radial profile in dimension `m`.
pub mod routes {
    use super::*;

    /// Fourier–Hankel inversion:
    /// `G_m(ρ) = (2π)^{-m/2} ∫_0^∞ e^{-r^α} r^{m-1} (rρ)^{-ν} J_ν(rρ) dr`, `ν = m/2 - 1`.
    pub fn fourier(alpha: f64, m: usize, rho: f64) -> f64 {
        let nu = m as f64 / 2.0 - 1.0;
        let r_max = (60.0 + 2.0 * m as f64).powf(1.0 / alpha);
        let mut edges = graded_edges(1.0, 24, 0.5);
        let panel = (0.5f64).min(PI / (2.0 * rho.max(1e-12)));
        let n = ((r_max - 1.0) / panel).ceil() as usize;
        for k in 1..=n {
            edges.push(1.0 + (r_max - 1.0) * k as f64 / n as f64);
        }
        let mf = m as f64;
        let integral = composite(&edges, 16, |r| {
            if r <= 0.0 {
                return 0.0;
            }
            (-r.powf(alpha)).exp() * r.powf(mf - 1.0) * bessel_j_scaled(nu, r * rho)
        });
        (2.0 * PI).powf(-mf / 2.0) * integral
    }

    /// Subordination route: `G_m(ρ) = E[(4πS)^{-m/2} e^{-ρ²/(4S)}]` with `S`
    /// one-sided `(α/2)`-stable, written through the Kanter/Zolotarev
    /// representation `S = (K(U)/E)^{(1-β)/β}`.
    pub fn subordination(alpha: f64, m: usize, rho: f64) -> f64 {
        let beta = alpha / 2.0;
        let gam = (1.0 - beta) / beta;
        let mf = m as f64;
        let a = 1.0 + gam * mf / 2.0;
        let outer = tanh_sinh(0.0, PI, 1.0 / 24.0, |u| {
            let ln_k = ln_kanter(beta, u);
            if !ln_k.is_finite() {
                return 0.0;
            }
            let ln_c0 = -(mf / 2.0) * (4.0 * PI).ln() - gam * (mf / 2.0) * ln_k;
            let c = if rho > 0.0 { (2.0 * rho.ln() - gam * ln_k - 4f64.ln()).exp() } else { 0.0 };
            ln_c0.exp() * inner_trapezoid(a, c, gam)
        });
        outer / PI
    }

    /// `∫_R exp(a v - e^v - c e^{γ v}) dv` by the trapezoid rule around the
    /// mode; the integrand is analytic so the rule converges geometrically.
    fn inner_trapezoid(a: f64, c: f64, gam: f64) -> f64 {
        let phi = |v: f64| a * v - v.exp() - c * (gam * v).exp();
        let dphi = |v: f64| a - v.exp() - c * gam * (gam * v).exp();
        // Bracket the mode (dphi is strictly decreasing).
        let (mut lo, mut hi) = (-1.0, 1.0);
        while dphi(lo) < 0.0 {
            lo = 2.0 * lo - 1.0;
        }
        while dphi(hi) > 0.0 {
            hi = 2.0 * hi + 1.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dphi(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        let v0 = 0.5 * (lo + hi);
        let curv = v0.exp() + c * gam * gam * (gam * v0).exp();
        let h = 0.25 / curv.sqrt().max(1e-3);
        let p0 = phi(v0);
        let mut sum = 1.0;
        for dir in [-1.0, 1.0] {
            let mut k = 1;
            loop {
                let v = v0 + dir * h * k as f64;
                let e = phi(v) - p0;
                if e < -50.0 {
                    break;
                }
                sum += e.exp();
                k += 1;
                if k > 100_000 {
                    break;
                }
            }
        }
        sum * h * p0.exp()
    }

    /// `ln K(u)`, `K(u) = sin((1-β)u) sin(βu)^{β/(1-β)} / sin(u)^{1/(1-β)}`.
    pub fn ln_kanter(beta: f64, u: f64) -> f64 {
        let s1 = ((1.0 - beta) * u).sin();
        let s2 = (beta * u).sin();
        let s3 = u.sin();
        if u <= 0.0 {
            // Limit u -> 0.
            return (1.0 - beta).ln() + beta / (1.0 - beta) * beta.ln();
        }
        s1.ln() + beta / (1.0 - beta) * s2.ln() - s3.ln() / (1.0 - beta)
    }

    /// Closed form of `G_m(0)`.
    pub fn at_origin(alpha: f64, m: usize) -> f64 {
        let mf = m as f64;
        (2.0 * PI).powf(-mf / 2.0) * gamma(mf / alpha) / (alpha * 2f64.powf(mf / 2.0 - 1.0) * gamma(mf / 2.0))
    }

    /// Profile value by the production routing rule.
    pub fn routed(alpha: f64, m: usize, rho: f64) -> f64 {
        if rho <= RHO_SWITCH {
            fourier(alpha, m, rho)
        } else {
            subordination(alpha, m, rho)
        }
    }
}

/// Log-log cubic Hermite table of one radial profile.
#[derive(Debug, Clone)]
struct Profile {
    ln_rho0: f64,
    step: f64,
    ln_g: Vec<f64>,
    slope: Vec<f64>,
    g0: f64,
    g0_next: f64,
    tail_a: f64,
    tail_b: f64,
    tail_p: f64,
    alpha: f64,
}

impl Profile {
    /// `values[k] = G_m(ρ_k)`, `next[k] = G_{m+2}(ρ_k)`.
    fn build(alpha: f64, dim: usize, values: &[f64], next: &[f64], g0_next: f64) -> Self {
        let n = values.len();
        let ln_rho0 = RHO_MIN.ln();
        let step = (RHO_MAX.ln() - ln_rho0) / (n - 1) as f64;
        let ln_g: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        let mut slope: Vec<f64> = (0..n)
            .map(|k| {
                let rho = (ln_rho0 + step * k as f64).exp();
                -2.0 * PI * rho * rho * next[k] / values[k]
            })
            .collect();
        // Fritsch–Carlson limiter on the decreasing sequence ln G.
        for k in 0..n - 1 {
            let secant = (ln_g[k + 1] - ln_g[k]) / step;
            if secant >= 0.0 {
                slope[k] = 0.0;
                slope[k + 1] = 0.0;
                continue;
            }
            let a = slope[k] / secant;
            let b = slope[k + 1] / secant;
            if a < 0.0 {
                slope[k] = 0.0;
            }
            if b < 0.0 {
                slope[k + 1] = 0.0;
            }
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slope[k] = tau * a * secant;
                slope[k + 1] = tau * b * secant;
            }
        }
        // Two-term tail a ρ^{-p} + b ρ^{-p-α} matched in value and log-slope.
        let g_end = values[n - 1];
        let s_end = slope[n - 1];
        let p = dim as f64 + alpha;
        let mut b = -g_end * (s_end + p) / alpha;
        let mut a = g_end - b;
        if !(a > 0.0) || b.abs() > g_end {
            a = g_end;
            b = 0.0;
        }
        Self {
            ln_rho0,
            step,
            ln_g,
            slope,
            g0: routes::at_origin(alpha, dim),
            g0_next,
            tail_a: a,
            tail_b: b,
            tail_p: p,
            alpha,
        }
    }

    fn eval(&self, rho: f64) -> f64 {
        if rho < RHO_MIN {
            return self.g0 - PI * rho * rho * self.g0_next;
        }
        if rho >= RHO_MAX {
            let q = rho / RHO_MAX;
            return self.tail_a * q.powf(-self.tail_p) + self.tail_b * q.powf(-self.tail_p - self.alpha);
        }
        let pos = (rho.ln() - self.ln_rho0) / self.step;
        let k = (pos.floor() as usize).min(self.ln_g.len() - 2);
        let s = pos - k as f64;
        let (y0, y1) = (self.ln_g[k], self.ln_g[k + 1]);
        let (m0, m1) = (self.slope[k] * self.step, self.slope[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1).exp()
    }
}

#[derive(Debug)]
struct Tables {
    g: Profile,
    h: Profile,
    /// Radial CDF at the table nodes (mass of the ball of radius ρ_k).
    cdf: Vec<f64>,
    /// Mass carried by `|X_1| > ρ_max`.
    tail_mass: f64,
    median_radius: f64,
}

fn table_cache() -> &'static Mutex<HashMap<(u64, usize), Arc<Tables>>> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), Arc<Tables>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn build_tables(alpha: f64, dim: usize) -> Tables {
    let n = TABLE_NODES;
    let ln0 = RHO_MIN.ln();
    let step = (RHO_MAX.ln() - ln0) / (n - 1) as f64;
    let rhos: Vec<f64> = (0..n).map(|k| (ln0 + step * k as f64).exp()).collect();
    let eval_dim = |m: usize| -> Vec<f64> { crate::rng::par_map(n, |k| routes::routed(alpha, m, rhos[k])) };
    let gd = eval_dim(dim);
    let gd2 = eval_dim(dim + 2);
    let gd4 = eval_dim(dim + 4);
    let g = Profile::build(alpha, dim, &gd, &gd2, routes::at_origin(alpha, dim + 2));
    let h = Profile::build(alpha, dim + 2, &gd2, &gd4, routes::at_origin(alpha, dim + 4));

    let omega = sphere_area(dim);
    let df = dim as f64;
    let mut cdf = Vec::with_capacity(n);
    let mut acc = omega * (g.g0 * RHO_MIN.powf(df) / df - PI * g.g0_next * RHO_MIN.powf(df + 2.0) / (df + 2.0));
    cdf.push(acc);
    let rule = crate::special::GaussLegendre::cached(6);
    for k in 0..n - 1 {
        acc += rule.integrate(rhos[k], rhos[k + 1], |r| omega * r.powf(df - 1.0) * g.eval(r));
        cdf.push(acc);
    }
    let tail_mass =
        omega * (g.tail_a * RHO_MAX.powf(df) / (g.tail_p - df) + g.tail_b * RHO_MAX.powf(df) / (g.tail_p + alpha - df));
    let mut tables = Tables { g, h, cdf, tail_mass, median_radius: 0.0 };
    let (mut lo, mut hi) = (0.0, RHO_MAX);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if radial_cdf_impl(&tables, alpha, dim, mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    tables.median_radius = 0.5 * (lo + hi);
    tables
}

fn radial_cdf_impl(t: &Tables, alpha: f64, dim: usize, r: f64) -> f64 {
    let df = dim as f64;
    let omega = sphere_area(dim);
    if r <= 0.0 {
        return 0.0;
    }
    if r < RHO_MIN {
        return omega * (t.g.g0 * r.powf(df) / df - PI * t.g.g0_next * r.powf(df + 2.0) / (df + 2.0));
    }
    let n = t.cdf.len();
    if r >= RHO_MAX {
        let g = &t.g;
        let tail = |x: f64| {
            omega
                * (g.tail_a * RHO_MAX.powf(g.tail_p) * x.powf(df - g.tail_p) / (g.tail_p - df)
                    + g.tail_b * RHO_MAX.powf(g.tail_p + alpha) * x.powf(df - g.tail_p - alpha)
                        / (g.tail_p + alpha - df))
        };
        return t.cdf[n - 1] + tail(RHO_MAX) - tail(r);
    }
    let pos = (r.ln() - t.g.ln_rho0) / t.g.step;
    let k = (pos.floor() as usize).min(n - 2);
    let r0 = (t.g.ln_rho0 + t.g.step * k as f64).exp();
    let rule = crate::special::GaussLegendre::cached(6);
    t.cdf[k] + rule.integrate(r0, r, |s| omega * s.powf(df - 1.0) * t.g.eval(s))
}

/// The symmetric α-stable law with `α ∈ (1,2)` on `R^d`, `d ≥ 2`.
#[derive(Clone)]
pub struct StableLaw {
    alpha: f64,
    dim: usize,
    tables: Arc<Tables>,
}

impl std::fmt::Debug for StableLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StableLaw").field("alpha", &self.alpha).field("dim", &self.dim).finish()
    }
}

/// Serializable identity of a law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LawParams {
    pub alpha: f64,
    pub dim: usize,
}

impl StableLaw {
    pub fn new(alpha: f64, dim: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 1.0 || alpha >= 2.0 {
            return Err(Error::InvalidParameter(format!("alpha must lie in (1,2), got {alpha}")));
        }
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be at least 2, got {dim}")));
        }
        let key = (alpha.to_bits(), dim);
        let cached = table_cache().lock().unwrap().get(&key).cloned();
        let tables = match cached {
            Some(t) => t,
            None => {
                let t = Arc::new(build_tables(alpha, dim));
                table_cache().lock().unwrap().entry(key).or_insert(t).clone()
            }
        };
        Ok(Self { alpha, dim, tables })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> LawParams {
        LawParams { alpha: self.alpha, dim: self.dim }
    }

    /// Unit-time radial profile `G(ρ)`.
    pub fn profile(&self, rho: f64) -> f64 {
        self.tables.g.eval(rho)
    }

    /// `G'(ρ)`.
    pub fn profile_derivative(&self, rho: f64) -> f64 {
        -2.0 * PI * rho * self.tables.h.eval(rho)
    }

    /// `p(t, x, y)` as a function of `t` and `r = |x - y|`.
    #[inline]
    pub fn density_radial(&self, t: f64, r: f64) -> f64 {
        let s = t.powf(-1.0 / self.alpha);
        s.powi(self.dim as i32) * self.tables.g.eval(r * s)
    }

    pub fn density(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_args(t, x, y)?;
        Ok(self.density_radial(t, dist2(x, y).sqrt()))
    }

    /// `∇_x p(t, x, y) = -2π t^{-(d+2)/α} G_{d+2}(t^{-1/α}|x-y|) (x - y)`.
    pub fn grad_density(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_args(t, x, y)?;
        let c = self.grad_coefficient(t, dist2(x, y).sqrt());
        for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
            *o = c * (a - b);
        }
        Ok(())
    }

    /// Scalar `c` with `∇_x p(t,x,y) = c (x - y)`.
    #[inline]
    pub fn grad_coefficient(&self, t: f64, r: f64) -> f64 {
        let s = t.powf(-1.0 / self.alpha);
        -2.0 * PI * s.powi(self.dim as i32 + 2) * self.tables.h.eval(r * s)
    }

    /// Scalar `c` with `∇_x ln p(t,x,y) = c (x - y)`.
    #[inline]
    pub fn log_grad_coefficient(&self, t: f64, r: f64) -> f64 {
        let s = t.powf(-1.0 / self.alpha);
        let u = r * s;
        -2.0 * PI * s * s * self.tables.h.eval(u) / self.tables.g.eval(u)
    }

    fn check_args(&self, t: f64, x: &[f64], y: &[f64]) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        if t <= 0.0 {
            return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
        }
        ensure_finite(x, "x")?;
        ensure_finite(y, "y")?;
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::InvalidParameter("point dimension mismatch".into()));
        }
        Ok(())
    }

    /// `t^{-d/α} ∧ t |x-y|^{-d-α}`.
    pub fn comparability_profile(&self, t: f64, r: f64) -> f64 {
        let d = self.dim as f64;
        let a = t.powf(-d / self.alpha);
        if r == 0.0 {
            a
        } else {
            a.min(t * r.powf(-d - self.alpha))
        }
    }

    /// `P(|X_1| ≤ r)`.
    pub fn radial_cdf(&self, r: f64) -> f64 {
        radial_cdf_impl(&self.tables, self.alpha, self.dim, r)
    }

    /// Total mass of the tabulated density (table integral plus analytic tail).
    pub fn table_mass(&self) -> f64 {
        self.tables.cdf[self.tables.cdf.len() - 1] + self.tables.tail_mass
    }

    /// Median of `|X_1|`.
    pub fn median_radius(&self) -> f64 {
        self.tables.median_radius
    }

    /// One draw of the one-sided `(α/2)`-stable variable with Laplace
    /// transform `exp(-λ^{α/2})` (Chambers–Mallows–Stuck).
    pub fn sample_subordinator<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let beta = self.alpha / 2.0;
        for _ in 0..32 {
            let u = PI * rng.random::<f64>();
            let e: f64 = Exp1.sample(rng);
            if u <= 0.0 || u >= PI || e <= 0.0 || !e.is_finite() {
                continue;
            }
            let s =
                (beta * u).sin() / u.sin().powf(1.0 / beta) * (((1.0 - beta) * u).sin() / e).powf((1.0 - beta) / beta);
            if s.is_finite() && s > 0.0 {
                return Ok(s);
            }
        }
        Err(Error::DegenerateStream("32 consecutive degenerate subordinator draws"))
    }

    /// Displacement of the process over a time `t`, written into `out`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, t: f64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
        }
        let s = self.sample_subordinator(rng)?;
        let scale = t.powf(1.0 / self.alpha) * (2.0 * s).sqrt();
        for o in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *o = scale * z;
        }
        Ok(())
    }

    pub fn jump_kernel(&self) -> JumpKernel {
        JumpKernel::new(self.clone())
    }
}

/// Lévy jump intensity `J(x,y) = A(d,-α) |x-y|^{-(d+α)}`.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    law: StableLaw,
    amplitude: f64,
}

impl JumpKernel {
    pub fn new(law: StableLaw) -> Self {
        let a = law.alpha;
        let d = law.dim as f64;
        let amplitude = a * 2f64.powf(a - 1.0) * PI.powf(-d / 2.0) * gamma((d + a) / 2.0) / gamma(1.0 - a / 2.0);
        Self { law, amplitude }
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn law(&self) -> &StableLaw {
        &self.law
    }

    #[inline]
    pub fn intensity_radial(&self, r: f64) -> f64 {
        self.amplitude * r.powf(-(self.law.dim as f64) - self.law.alpha)
    }

    pub fn jump_intensity(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        ensure_finite(x, "x")?;
        ensure_finite(y, "y")?;
        let r = dist2(x, y).sqrt();
        if r == 0.0 {
            return Err(Error::Coincident);
        }
        Ok(self.intensity_radial(r))
    }
}

/// Fitted comparability constant `c` with `density / profile ∈ [1/c, c]` over
/// the given `(t, r)` grid, together with the min and max ratio.
pub fn fit_comparability_constant(law: &StableLaw, ts: &[f64], rs: &[f64]) -> (f64, f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &t in ts {
        for &r in rs {
            let q = law.density_radial(t, r) / law.comparability_profile(t, r);
            lo = lo.min(q);
            hi = hi.max(q);
        }
    }
    (hi.max(1.0 / lo), lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamFamily;

    fn law() -> StableLaw {
        StableLaw::new(1.5, 2).unwrap()
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(StableLaw::new(2.0, 2).is_err());
        assert!(StableLaw::new(1.0, 2).is_err());
        assert!(StableLaw::new(1.5, 1).is_err());
        assert!(StableLaw::new(f64::NAN, 2).is_err());
    }

    #[test]
    fn density_rejects_bad_time_and_nonfinite() {
        let l = law();
        assert!(l.density(0.0, &[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(l.density(1.0, &[f64::NAN, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn profile_positive_and_decreasing() {
        let l = law();
        let mut prev = f64::INFINITY;
        for k in 0..2000 {
            let r = 1e-4 * 1.01f64.powi(k);
            let g = l.profile(r);
            assert!(g > 0.0);
            assert!(g <= prev, "not decreasing at {r}");
            prev = g;
        }
    }

    #[test]
    fn gradient_zero_on_diagonal() {
        let l = law();
        let mut g = [1.0, 1.0];
        l.grad_density(0.3, &[0.2, 0.1], &[0.2, 0.1], &mut g).unwrap();
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn gradient_scaling_law() {
        let l = law();
        let (t, x, y) = (0.37, [0.4, -0.2], [-0.1, 0.5]);
        let mut g = [0.0; 2];
        l.grad_density(t, &x, &y, &mut g).unwrap();
        let s = t.powf(-1.0 / 1.5);
        let xs = [x[0] * s, x[1] * s];
        let ys = [y[0] * s, y[1] * s];
        let mut g1 = [0.0; 2];
        l.grad_density(1.0, &xs, &ys, &mut g1).unwrap();
        for i in 0..2 {
            let expect = t.powf(-3.0 / 1.5) * g1[i];
            assert!((g[i] - expect).abs() < 1e-12 * expect.abs().max(1e-300));
        }
    }

    #[test]
    fn jump_kernel_symmetry_and_homogeneity() {
        let j = law().jump_kernel();
        let x = [0.3, -1.0];
        let y = [1.1, 0.4];
        assert_eq!(j.jump_intensity(&x, &y).unwrap(), j.jump_intensity(&y, &x).unwrap());
        let y2 = [x[0] + 2.0 * (y[0] - x[0]), x[1] + 2.0 * (y[1] - x[1])];
        let ratio = j.jump_intensity(&x, &y).unwrap() / j.jump_intensity(&x, &y2).unwrap();
        assert!((ratio - 2f64.powf(3.5)).abs() < 1e-9);
        assert!(j.jump_intensity(&x, &x).is_err());
        assert!(j.amplitude() > 0.0);
    }

    struct ZeroRng;
    impl rand::RngCore for ZeroRng {
        fn next_u32(&mut self) -> u32 {
            0
        }
        fn next_u64(&mut self) -> u64 {
            0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(0)
        }
    }

    #[test]
    fn degenerate_stream_rejected() {
        let mut out = [0.0; 2];
        let err = law().sample_increment(1.0, &mut ZeroRng, &mut out).unwrap_err();
        assert!(matches!(err, Error::DegenerateStream(_)));
    }

    #[test]
    fn subordinator_laplace_transform() {
        // E exp(-λ S) = exp(-λ^{α/2})
        let l = law();
        let mut rng = StreamFamily::new(5).stream(0);
        let n = 200_000;
        let lam = 1.3f64;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += (-lam * l.sample_subordinator(&mut rng).unwrap()).exp();
        }
        let est = acc / n as f64;
        let exact = (-lam.powf(0.75)).exp();
        assert!((est - exact).abs() < 4.0 * 0.5 / (n as f64).sqrt(), "{est} vs {exact}");
    }

    #[test]
    fn median_radius_is_consistent_with_cdf() {
        let l = law();
        assert!((l.radial_cdf(l.median_radius()) - 0.5).abs() < 1e-9);
    }
}
