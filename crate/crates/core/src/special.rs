//! Special functions and quadrature rules shared by the kernel tables and
//! the estimate templates.

use std::f64::consts::PI;
use std::sync::OnceLock;

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn sphere_area(dim: usize) -> f64 {
    let h = dim as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in `R^d`.
pub fn ball_volume(dim: usize) -> f64 {
    sphere_area(dim) / dim as f64
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Cached rule for common orders.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static CACHE: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
        let table = CACHE.get_or_init(|| (1..=128).map(GaussLegendre::new).collect());
        assert!((1..=128).contains(&n), "cached Gauss-Legendre order must be in 1..=128");
        &table[n - 1]
    }

    /// Integrate `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(mid + half * x)).sum::<f64>() * half
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre over the breakpoints `edges`.
pub fn composite<F: FnMut(f64) -> f64>(edges: &[f64], order: usize, mut f: F) -> f64 {
    let rule = GaussLegendre::cached(order);
    edges.windows(2).map(|w| rule.integrate(w[0], w[1], &mut f)).sum()
}

/// Geometrically graded breakpoints on `[0, b]`: `0, b q^{n-1}, ..., b q, b`.
pub fn graded_edges(b: f64, levels: usize, ratio: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(levels + 2);
    edges.push(0.0);
    for k in (0..=levels).rev() {
        edges.push(b * ratio.powi(k as i32));
    }
    edges.dedup();
    edges
}

/// Tanh–sinh rule on `(a, b)`; endpoint singularities of algebraic type are
/// integrated at an exponential rate.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(a: f64, b: f64, step: f64, mut f: F) -> f64 {
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    let kmax = (4.0 / step).ceil() as i64;
    for k in -kmax..=kmax {
        let s = k as f64 * step;
        let u = 0.5 * PI * s.sinh();
        let ch = u.cosh();
        let x = u.tanh();
        let w = 0.5 * PI * s.cosh() / (ch * ch);
        // Distance to the nearer endpoint, computed without cancellation.
        let comp = 1.0 / (u.abs().exp() * ch);
        if comp * half < f64::MIN_POSITIVE * 1e4 {
            continue;
        }
        let t = if x < 0.0 { a + half * comp } else { b - half * comp };
        let v = f(t);
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * half * step
}

/// `z^{-nu} J_nu(z)`, entire in `z`. Valid for `nu >= 0`, `z >= 0`.
pub fn bessel_j_scaled(nu: f64, z: f64) -> f64 {
    let z = z.abs();
    if z < 13.0 {
        // Power series.
        let q = 0.25 * z * z;
        let mut term = 1.0 / (2f64.powf(nu) * gamma(nu + 1.0));
        let mut sum = term;
        for k in 1..200 {
            let kf = k as f64;
            term *= -q / (kf * (kf + nu));
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        bessel_j_asymptotic(nu, z) / z.powf(nu)
    }
}

fn bessel_j_asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        a *= (mu - odd * odd) / (kf * 8.0 * z);
        if a.abs() > last {
            break;
        }
        last = a.abs();
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `B(a, b) I_x(a, b)`, the unregularised incomplete beta integral.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let lb = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    beta_reg(a, b, x) * lb.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(8);
        let v = rule.integrate(0.0, 2.0, |x| x.powi(15) + 3.0 * x * x);
        let exact = 2f64.powi(16) / 16.0 + 8.0;
        assert!((v - exact).abs() < 1e-9 * exact);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        // \int_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(0.0, 1.0, 0.05, |x| x.powf(-0.5));
        assert!((v - 2.0).abs() < 1e-9, "{v}");
        let v = tanh_sinh(0.0, PI, 0.05, |x| x.sin());
        assert!((v - 2.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bessel_matches_known_values() {
        // J_0(1) = 0.7651976865579666, J_1(2)/2 = 0.5767248077568734/2
        assert!((bessel_j_scaled(0.0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j_scaled(1.0, 2.0) - 0.576_724_807_756_873_4 / 2.0).abs() < 1e-14);
        // J_{1/2}(z) = sqrt(2/(pi z)) sin z, on both sides of the switch.
        for &z in &[0.3, 5.0, 12.9, 13.1, 30.0, 80.0] {
            let exact = (2.0 / (PI * z)).sqrt() * z.sin() / z.sqrt();
            let v = bessel_j_scaled(0.5, z);
            assert!((v - exact).abs() < 1e-11, "z={z} {v} {exact}");
        }
        // J_0(20) = 0.16702466434058316
        assert!((bessel_j_scaled(0.0, 20.0) - 0.167_024_664_340_583_16).abs() < 1e-12);
    }

    #[test]
    fn sphere_area_low_dims() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_complete_limit() {
        let v = incomplete_beta(1.0, 0.75, 0.25);
        let exact = gamma(0.75) * gamma(0.25) / gamma(1.0);
        assert!((v - exact).abs() < 1e-10 * exact);
    }
}
