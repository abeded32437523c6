//! The drifted free kernel `p^b = Σ_k p^b_k` built from the perturbation
//! recursion
//!
//! ```text
//! p^b_0 = p,   p^b_k(t,x,y) = ∫_0^t ∫ p^b_{k-1}(s,x,z) b(z)·∇_z p(t-s,z,y) dz ds.
//! ```
//!
//! Term `k` is a `k`-fold space-time integral. The last time `s` is integrated
//! by Gauss–Legendre after the substitution `t - s = t v^{α/(α-1)}`, which
//! cancels the `(t-s)^{-1/α}` growth of the gradient. The earlier times are
//! drawn from a Dirichlet law whose exponents cancel the same growth on the
//! inner legs, and the spatial chain `x → z_1 → … → z_k` is drawn from the
//! free process with score weights `b·∇ ln p` (sequential importance
//! sampling: the weighted cloud at `z_{k-1}` represents `p^b_{k-1}(s,x,·)`).
//! The last spatial point is drawn from a balance-heuristic mixture of the
//! forward leg and the free law started at `y`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::drift::DriftField;
use crate::error::{ensure_finite, Error, Result};
use crate::kato::nb_functional;
use crate::rng::{par_map, tree_sum, MeanEstimate, Stream, StreamFamily};
use crate::special::{gamma, GaussLegendre};
use crate::stable::{dist2, StableLaw};

/// Work allowed for one series term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Gauss–Legendre nodes for the last time variable.
    pub time_nodes: usize,
    /// Monte Carlo samples per time node.
    pub samples: usize,
    /// Relative standard error (to the `k = 0` term) above which a term is
    /// flagged as partial.
    pub target_rel_stderr: Option<f64>,
}

impl Default for Budget {
    fn default() -> Self {
        Self { time_nodes: 20, samples: 4096, target_rel_stderr: None }
    }
}

impl Budget {
    pub fn new(time_nodes: usize, samples: usize) -> Self {
        Self { time_nodes, samples, target_rel_stderr: None }
    }

    fn check(&self) -> Result<()> {
        if self.time_nodes == 0 || self.samples == 0 {
            return Err(Error::InvalidParameter("budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub k: usize,
    pub value: f64,
    pub stderr: f64,
    /// `[time nodes, samples per node]`.
    pub node_budget: [usize; 2],
    /// Set when the stderr target was not met within the budget.
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeKernelValue {
    pub value: f64,
    pub stderr: f64,
    pub terms: Vec<SeriesTerm>,
    /// Geometric bound on the discarded tail.
    pub truncation_bound: f64,
    /// Envelope ratio `q` used for the tail bound.
    pub ratio: f64,
    /// Number of semigroup halvings applied (0 = direct series).
    pub halvings: usize,
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Fitted surrogate for the term constant `C_4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C4Fit {
    /// Smallest constant with `|p^b_1| ≤ C_4 p N_b(t)` on the sample.
    pub c4: f64,
    /// Least-squares slope of `|p^b_1|` against `p N_b(t)` through the origin.
    pub least_squares: f64,
    /// Set for an identically zero field.
    pub degenerate: bool,
    /// `(t, N_b(t))` on the fit grid.
    pub nb: Vec<(f64, f64)>,
    pub n_points: usize,
}

/// Series horizon and the fit it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub fit: C4Fit,
    pub t_series: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub budget: Budget,
    /// Stop once the tail bound is below `tol` times the `k = 0` term.
    pub tol: f64,
    pub max_order: usize,
    /// Midpoints per semigroup halving.
    pub midpoints: usize,
    /// Budget of each inner kernel evaluation in a halving.
    pub inner_budget: Budget,
    /// Fixed truncation order of the inner evaluations.
    pub inner_order: usize,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        Self {
            budget: Budget::default(),
            tol: 1e-3,
            max_order: 12,
            midpoints: 128,
            inner_budget: Budget::new(8, 64),
            inner_order: 4,
        }
    }
}

/// Largest and smallest dyadic exponents searched for the series horizon.
const DYADIC_MAX: i32 = 4;
const DYADIC_MIN: i32 = -30;

/// Drifted free kernel for one law and one drift field.
#[derive(Debug, Clone)]
pub struct DriftedKernel {
    law: StableLaw,
    drift: DriftField,
    options: SeriesOptions,
    calibration: Option<Calibration>,
}

impl DriftedKernel {
    pub fn new(law: StableLaw, drift: DriftField) -> Result<Self> {
        if law.dim() != drift.dim() {
            return Err(Error::InvalidParameter(format!(
                "drift dimension {} does not match law dimension {}",
                drift.dim(),
                law.dim()
            )));
        }
        Ok(Self { law, drift, options: SeriesOptions::default(), calibration: None })
    }

    pub fn with_options(mut self, options: SeriesOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = Some(calibration);
        self
    }

    pub fn law(&self) -> &StableLaw {
        &self.law
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn options(&self) -> &SeriesOptions {
        &self.options
    }

    pub fn calibration(&self) -> Option<&Calibration> {
        self.calibration.as_ref()
    }

    fn check_point(&self, t: f64, x: &[f64], y: &[f64]) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        if t <= 0.0 {
            return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
        }
        ensure_finite(x, "x")?;
        ensure_finite(y, "y")?;
        if x.len() != self.law.dim() || y.len() != self.law.dim() {
            return Err(Error::InvalidParameter("point dimension mismatch".into()));
        }
        Ok(())
    }

    /// `p^b_k(t, x, y)` with its Monte Carlo standard error.
    pub fn series_term(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        k: usize,
        budget: Budget,
        streams: &StreamFamily,
    ) -> Result<SeriesTerm> {
        self.check_point(t, x, y)?;
        budget.check()?;
        let node_budget = [budget.time_nodes, budget.samples];
        if k == 0 {
            let value = self.law.density(t, x, y)?;
            return Ok(SeriesTerm { k, value, stderr: 0.0, node_budget, partial: false });
        }
        if self.drift.is_zero() {
            return Ok(SeriesTerm { k, value: 0.0, stderr: 0.0, node_budget, partial: false });
        }
        let alpha = self.law.alpha();
        let kappa = alpha / (alpha - 1.0);
        let nodes = time_nodes(budget.time_nodes);
        let family = streams.child(k as u64);
        let chunk = 256usize;
        let chunks = budget.samples.div_ceil(chunk);
        let cells = par_map(nodes.len() * chunks, |i| {
            let (node, c) = (i / chunks, i % chunks);
            let v = nodes[node].0;
            let s = t * (1.0 - v.powf(kappa));
            let tau = t - s;
            let mut rng = family.child(node as u64).stream(c as u64);
            let n = chunk.min(budget.samples - c * chunk);
            let mut chain = Chain::new(&self.law, &self.drift, k);
            (0..n).map(|_| chain.sample(s, tau, x, y, &mut rng)).collect::<Result<Vec<f64>>>()
        });
        let mut value_parts = Vec::with_capacity(nodes.len());
        let mut var_parts = Vec::with_capacity(nodes.len());
        for (node, &(v, w)) in nodes.iter().enumerate() {
            let mut samples = Vec::with_capacity(budget.samples);
            for c in 0..chunks {
                samples.extend_from_slice(cells[node * chunks + c].as_ref().map_err(clone_err)?);
            }
            let est = MeanEstimate::from_samples(&samples);
            // ds = t κ v^{κ-1} dv
            let jac = w * t * kappa * v.powf(kappa - 1.0);
            value_parts.push(jac * est.mean);
            let se = if est.stderr.is_finite() { est.stderr } else { 0.0 };
            var_parts.push((jac * se).powi(2));
        }
        let value = tree_sum(&value_parts);
        let stderr = tree_sum(&var_parts).sqrt();
        let partial = match budget.target_rel_stderr {
            Some(target) => stderr > target * self.law.density(t, x, y)?,
            None => false,
        };
        Ok(SeriesTerm { k, value, stderr, node_budget, partial })
    }

    /// `p^b(t, x, y)`: direct series when `t` lies within the series horizon
    /// (or no calibration is attached), semigroup halvings beyond it.
    pub fn free_kernel(&self, t: f64, x: &[f64], y: &[f64], streams: &StreamFamily) -> Result<FreeKernelValue> {
        self.check_point(t, x, y)?;
        let horizon = self.calibration.as_ref().map(|c| c.t_series).unwrap_or(f64::INFINITY);
        if t <= horizon || self.drift.is_zero() {
            return self.direct_series(t, x, y, self.options.budget, streams);
        }
        let mut halvings = 0;
        while t / 2f64.powi(halvings) > horizon {
            halvings += 1;
        }
        self.compose(t, x, y, halvings as usize, streams)
    }

    fn direct_series(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        budget: Budget,
        streams: &StreamFamily,
    ) -> Result<FreeKernelValue> {
        let opts = &self.options;
        let t0 = self.series_term(t, x, y, 0, budget, streams)?;
        let p0 = t0.value;
        let mut terms = vec![t0];
        let mut q: f64 = 0.0;
        let mut tail = 0.0;
        if !self.drift.is_zero() {
            for k in 1..=opts.max_order {
                let term = self.series_term(t, x, y, k, budget, streams)?;
                // Envelope rate: the smallest q with |p_j| + σ_j ≤ p_0 q^j for all j ≤ k.
                q = q.max(((term.value.abs() + term.stderr) / p0).powf(1.0 / k as f64));
                terms.push(term);
                if q >= 1.0 {
                    return Err(Error::NonContracting { order: k, ratio: q });
                }
                tail = p0 * q.powi(k as i32 + 1) / (1.0 - q);
                // One term alone can vanish by symmetry, so never stop on it.
                if k >= 2 && tail < opts.tol * p0 {
                    break;
                }
            }
        }
        let value = tree_sum(&terms.iter().map(|s| s.value).collect::<Vec<_>>());
        let stderr = terms.iter().map(|s| s.stderr * s.stderr).sum::<f64>().sqrt();
        Ok(FreeKernelValue {
            value,
            stderr,
            terms,
            truncation_bound: tail,
            ratio: q,
            halvings: 0,
            t,
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    /// `Σ_{k ≤ order} p^b_k` without adaptive stopping.
    fn fixed_order(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        order: usize,
        budget: Budget,
        streams: &StreamFamily,
    ) -> Result<FreeKernelValue> {
        let terms = (0..=order).map(|k| self.series_term(t, x, y, k, budget, streams)).collect::<Result<Vec<_>>>()?;
        let value = tree_sum(&terms.iter().map(|s| s.value).collect::<Vec<_>>());
        let stderr = terms.iter().map(|s| s.stderr * s.stderr).sum::<f64>().sqrt();
        Ok(FreeKernelValue {
            value,
            stderr,
            terms,
            truncation_bound: f64::NAN,
            ratio: f64::NAN,
            halvings: 0,
            t,
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    /// `p^b(t) = ∫ p^b(t/2, x, z) p^b(t/2, z, y) dz`, applied `halvings` times,
    /// with midpoints drawn from `½p(t/2,x,·) + ½p(t/2,y,·)`.
    fn compose(
        &self,
        t: f64,
        x: &[f64],
        y: &[f64],
        halvings: usize,
        streams: &StreamFamily,
    ) -> Result<FreeKernelValue> {
        if halvings == 0 {
            return self.fixed_order(t, x, y, self.options.inner_order, self.options.inner_budget, streams);
        }
        let h = 0.5 * t;
        let family = streams.child(0xC0_u64 + halvings as u64);
        let m = self.options.midpoints.max(2);
        let samples = par_map(m, |i| -> Result<f64> {
            let mut rng = family.stream(i as u64);
            let mut z = vec![0.0; x.len()];
            self.law.sample_increment(h, &mut rng, &mut z)?;
            let base = if rng.random::<bool>() { x } else { y };
            z.iter_mut().zip(base).for_each(|(a, b)| *a += b);
            let q = 0.5
                * (self.law.density_radial(h, dist2(x, &z).sqrt()) + self.law.density_radial(h, dist2(y, &z).sqrt()));
            let sub = family.child(i as u64);
            let a = self.compose(h, x, &z, halvings - 1, &sub.child(1))?;
            let b = self.compose(h, &z, y, halvings - 1, &sub.child(2))?;
            Ok(a.value * b.value / q)
        });
        let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
        let est = MeanEstimate::from_samples(&samples);
        Ok(FreeKernelValue {
            value: est.mean,
            stderr: est.stderr,
            terms: Vec::new(),
            truncation_bound: 0.0,
            ratio: f64::NAN,
            halvings,
            t,
            x: x.to_vec(),
            y: y.to_vec(),
        })
    }

    /// Unbiased one-draw estimate of `p^b(t, x, y)`: the exact `k = 0` term
    /// plus terms `1..=K` with `P(K ≥ k) = 2^{1-k}` (randomized truncation),
    /// each from one chain with a uniformly drawn substituted last time.
    pub fn single_shot(&self, t: f64, x: &[f64], y: &[f64], stream: &mut Stream) -> Result<f64> {
        let p0 = self.law.density_radial(t, dist2(x, y).sqrt());
        if self.drift.is_zero() {
            return Ok(p0);
        }
        let alpha = self.law.alpha();
        let kappa = alpha / (alpha - 1.0);
        let mut total = p0;
        let mut survive = 1.0;
        for k in 1..=self.options.max_order {
            let v: f64 = 1.0 - stream.random::<f64>();
            let s = t * (1.0 - v.powf(kappa));
            let jac = t * kappa * v.powf(kappa - 1.0);
            let mut chain = Chain::new(&self.law, &self.drift, k);
            total += jac * chain.sample(s, t - s, x, y, stream)? / survive;
            if stream.random::<bool>() {
                break;
            }
            survive *= 0.5;
        }
        Ok(total)
    }

    /// `∫ p^b(t, x, z) dz` by importance sampling `z ~ p(t, x, ·)`, with one
    /// independent estimate of the terms `k = 1..=order` per draw.
    pub fn conservativeness_check(
        &self,
        t: f64,
        x: &[f64],
        order: usize,
        draws: usize,
        inner: Budget,
        streams: &StreamFamily,
    ) -> Result<MeanEstimate> {
        self.check_point(t, x, x)?;
        inner.check()?;
        if draws < 2 {
            return Err(Error::InvalidParameter("need at least two draws".into()));
        }
        let family = streams.child(0xCA55);
        let samples = par_map(draws, |i| -> Result<f64> {
            let mut rng = family.stream(i as u64);
            let mut z = vec![0.0; x.len()];
            self.law.sample_increment(t, &mut rng, &mut z)?;
            z.iter_mut().zip(x).for_each(|(a, b)| *a += b);
            let p = self.law.density_radial(t, dist2(x, &z).sqrt());
            let sub = family.child(i as u64 + 1);
            let mut total = p;
            for k in 1..=order {
                total += self.series_term(t, x, &z, k, inner, &sub)?.value;
            }
            Ok(total / p)
        });
        let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(MeanEstimate::from_samples(&samples))
    }

    /// Fit of `|p^b_1(t,x,y)| ≤ C_4 p(t,x,y) N_b(t)` over `t_grid` and a
    /// spatial sample of `points_per_time` pairs near the drift hotspots.
    pub fn fit_c4(
        &self,
        t_grid: &[f64],
        points_per_time: usize,
        budget: Budget,
        streams: &StreamFamily,
    ) -> Result<C4Fit> {
        if t_grid.is_empty() || points_per_time == 0 {
            return Err(Error::InvalidParameter("fit needs a nonempty grid".into()));
        }
        if self.drift.is_zero() {
            return Ok(C4Fit { c4: 0.0, least_squares: 0.0, degenerate: true, nb: Vec::new(), n_points: 0 });
        }
        let alpha = self.law.alpha();
        let mut nb = Vec::with_capacity(t_grid.len());
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ratio_max: f64 = 0.0;
        for (ti, &t) in t_grid.iter().enumerate() {
            let n_t = nb_functional(&self.drift, alpha, t, 200)?.value;
            nb.push((t, n_t));
            let pairs = fit_pairs(&self.drift, t.powf(1.0 / alpha), points_per_time);
            let fam = streams.child(0xF17 + ti as u64);
            for (j, (x, y)) in pairs.iter().enumerate() {
                let p1 = self.series_term(t, x, y, 1, budget, &fam.child(j as u64))?;
                let p = self.law.density(t, x, y)?;
                xs.push(p * n_t);
                ys.push(p1.value.abs());
                ratio_max = ratio_max.max(p1.value.abs() / (p * n_t));
            }
        }
        let sxy: f64 = xs.iter().zip(&ys).map(|(a, b)| a * b).sum();
        let sxx: f64 = xs.iter().map(|a| a * a).sum();
        Ok(C4Fit { c4: ratio_max, least_squares: sxy / sxx, degenerate: false, nb, n_points: xs.len() })
    }

    /// Largest dyadic `t ≤ 2^4` with `C_4 N_b(t) < 1/2`.
    pub fn t_series(&self, fit: &C4Fit) -> Result<f64> {
        if fit.degenerate || fit.c4 == 0.0 {
            return Ok(2f64.powi(DYADIC_MAX));
        }
        let alpha = self.law.alpha();
        for j in (DYADIC_MIN..=DYADIC_MAX).rev() {
            let t = 2f64.powi(j);
            if fit.c4 * nb_functional(&self.drift, alpha, t, 200)?.value < 0.5 {
                return Ok(t);
            }
        }
        Err(Error::NonContracting { order: 1, ratio: f64::INFINITY })
    }

    /// Fit `C_4` on `t_grid`, derive the horizon and attach both.
    pub fn calibrate(
        self,
        t_grid: &[f64],
        points_per_time: usize,
        budget: Budget,
        streams: &StreamFamily,
    ) -> Result<Self> {
        let fit = self.fit_c4(t_grid, points_per_time, budget, streams)?;
        let t_series = self.t_series(&fit)?;
        Ok(self.with_calibration(Calibration { fit, t_series }))
    }
}

fn clone_err(e: &Error) -> Error {
    match e {
        Error::DegenerateStream(m) => Error::DegenerateStream(m),
        Error::NonFinite(m) => Error::NonFinite(m),
        other => Error::InvalidParameter(other.to_string()),
    }
}

/// Composite Gauss–Legendre on `v ∈ [0,1]`, graded towards `v = 1` (`s → 0`).
fn time_nodes(n: usize) -> Vec<(f64, f64)> {
    let edges = [0.0, 0.5, 0.8, 0.95, 0.99, 1.0];
    let order = n.div_ceil(edges.len() - 1).max(2);
    let rule = GaussLegendre::cached(order);
    edges.windows(2).flat_map(|w| rule.mapped(w[0], w[1]).collect::<Vec<_>>()).collect()
}

/// Spatial pairs for the `C_4` fit: starting points at the drift hotspots and
/// on a ring around them, end points at distances `{0, ½, 1, 2} t^{1/α}` in
/// four directions.
fn fit_pairs(b: &DriftField, scale: f64, n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = b.dim();
    let mut starts = b.hotspots();
    if starts.is_empty() {
        starts.push(vec![0.0; d]);
    }
    let mut out = Vec::with_capacity(n);
    let mut i = 0usize;
    while out.len() < n {
        let c = &starts[i % starts.len()];
        let ring = i / (4 * starts.len());
        let th = 2.0 * PI * (i as f64 * 0.618_033_988_749_895).fract();
        let mut x = c.clone();
        if ring > 0 {
            x[0] += scale * ring as f64 * th.cos();
            x[1] += scale * ring as f64 * th.sin();
        }
        let r = [0.0, 0.5, 1.0, 2.0][i % 4] * scale;
        let phi = th + PI * (i / 4) as f64 / 2.0;
        let mut y = x.clone();
        y[0] += r * phi.cos();
        y[1] += r * phi.sin();
        out.push((x, y));
        i += 1;
    }
    out
}

/// One draw of the term-`k` integrand at last time `s` (`τ = t - s`).
struct Chain<'a> {
    law: &'a StableLaw,
    b: &'a DriftField,
    k: usize,
    beta: Option<Gamma<f64>>,
    norm: f64,
    z: Vec<f64>,
    next: Vec<f64>,
    bz: Vec<f64>,
    inc: Vec<f64>,
    gaps: Vec<f64>,
}

impl<'a> Chain<'a> {
    fn new(law: &'a StableLaw, b: &'a DriftField, k: usize) -> Self {
        let d = law.dim();
        let beta = 1.0 - 1.0 / law.alpha();
        let km1 = (k - 1) as f64;
        Self {
            law,
            b,
            k,
            beta: Gamma::new(beta, 1.0).ok(),
            // Dirichlet(1, β, …, β) normalizer with k-1 exponents β.
            norm: gamma(beta).powf(km1) / gamma(1.0 + km1 * beta),
            z: vec![0.0; d],
            next: vec![0.0; d],
            bz: vec![0.0; d],
            inc: vec![0.0; d],
            gaps: vec![0.0; k],
        }
    }

    /// `b(a) · ∇_a p(τ, a, c)`.
    fn drift_grad(&mut self, tau: f64, a: &[f64], c: &[f64]) -> f64 {
        self.b.eval(a, &mut self.bz);
        let r = dist2(a, c).sqrt();
        let coef = self.law.grad_coefficient(tau, r);
        coef * self.bz.iter().zip(a).zip(c).map(|((bi, ai), ci)| bi * (ai - ci)).sum::<f64>()
    }

    fn sample(&mut self, s: f64, tau: f64, x: &[f64], y: &[f64], rng: &mut Stream) -> Result<f64> {
        let alpha = self.law.alpha();
        let mut weight = 1.0;
        // Legs before the last: τ_1 (plain) and τ_2..τ_{k-1} (gradient), then τ_k into z_k.
        let k = self.k;
        if k >= 2 {
            let g = self.beta.as_ref().expect("valid Dirichlet exponent");
            self.gaps[0] = -rng.random::<f64>().max(f64::MIN_POSITIVE).ln();
            for j in 1..k {
                self.gaps[j] = g.sample(rng).max(f64::MIN_POSITIVE);
            }
            let total: f64 = self.gaps.iter().sum();
            weight = self.norm * s.powi(k as i32 - 1);
            for j in 1..k {
                let u = self.gaps[j] / total;
                weight *= u.powf(1.0 / alpha);
            }
            for gap in self.gaps.iter_mut() {
                *gap *= s / total;
            }
            self.law.sample_increment(self.gaps[0], rng, &mut self.inc)?;
            for i in 0..x.len() {
                self.z[i] = x[i] + self.inc[i];
            }
            for j in 1..k - 1 {
                let tj = self.gaps[j];
                self.law.sample_increment(tj, rng, &mut self.inc)?;
                for i in 0..x.len() {
                    self.next[i] = self.z[i] + self.inc[i];
                }
                self.b.eval(&self.z, &mut self.bz);
                let r = dist2(&self.z, &self.next).sqrt();
                let c = self.law.log_grad_coefficient(tj, r);
                let score: f64 =
                    self.bz.iter().zip(&self.z).zip(&self.next).map(|((bi, a), n)| bi * (a - n)).sum::<f64>() * c;
                weight *= score;
                std::mem::swap(&mut self.z, &mut self.next);
            }
        } else {
            self.z.copy_from_slice(x);
        }
        if weight == 0.0 {
            return Ok(0.0);
        }
        // Last spatial point: mixture of the forward leg and the law from y,
        // paired antithetically (±increment) about the mixture component's origin.
        let lead = if k >= 2 { self.gaps[k - 1] } else { s };
        let from_start = rng.random::<bool>();
        let (origin, scale_t) = if from_start { (self.z.clone(), lead) } else { (y.to_vec(), tau) };
        self.law.sample_increment(scale_t, rng, &mut self.inc)?;
        let z = self.z.clone();
        let mut acc = 0.0;
        for sign in [1.0, -1.0] {
            let last: Vec<f64> = origin.iter().zip(&self.inc).map(|(o, i)| o + sign * i).collect();
            let p_lead = self.law.density_radial(lead, dist2(&z, &last).sqrt());
            let p_back = self.law.density_radial(tau, dist2(y, &last).sqrt());
            let q = 0.5 * (p_lead + p_back);
            if q <= 0.0 {
                continue;
            }
            let first = if k >= 2 { self.drift_grad(lead, &z, &last) } else { p_lead };
            let tail = self.drift_grad(tau, &last, y);
            acc += 0.5 * first * tail / q;
        }
        Ok(weight * acc)
    }
}

/// Exact drifted kernel for a constant field `b_0`: `p(t, 0, y - x - b_0 t)`.
pub fn constant_drift_kernel(law: &StableLaw, b0: &[f64], t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    let w: Vec<f64> = (0..x.len()).map(|i| y[i] - x[i] - b0[i] * t).collect();
    law.density(t, &vec![0.0; x.len()], &w)
}
