//! Euler simulation of the drifted stable process `dX = dZ + b(X) dt`, its
//! version killed on leaving a domain, and the estimators built on it.
//!
//! Steps have length `dt` away from the boundary. Within reach of the
//! boundary a step is shortened so that its median jump stays below
//! `δ_D(x) / boundary_factor`. A path is killed at the first (sub)step that
//! lands outside the domain, and the landing point is recorded as `X_τ`.
//!
//! The dual process runs the drift `-b` and carries the weight
//! `exp(-∫ div b(X_s) ds)`, so that its weighted law started at `y`
//! represents `z ↦ p^b_D(t, z, y)`. The bridge estimators pair a forward
//! cloud from `x` with a dual cloud from `y` at half time:
//!
//! ```text
//! p^b_D(t,x,y) = ∫ p^b_D(t/2,x,z) p^b_D(t/2,z,y) dz,    G^b_D(x,y) = 2 ∫_0^∞ ∫ p^b_D(s,x,z) p^b_D(s,z,y) dz ds.
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftField;
use crate::duhamel::DriftedKernel;
use crate::error::{ensure_finite, Error, Result};
use crate::geometry::{Domain, DomainKind};
use crate::rng::{par_map, tree_sum, MeanEstimate, Stream, StreamFamily};
use crate::special::{ball_volume, sphere_area, GaussLegendre};
use crate::stable::StableLaw;
use crate::stats::{quantile, weighted_linear_fit};

/// Smallest boundary substep as a fraction of `dt`.
const SUBSTEP_FLOOR: f64 = 1.0 / 65536.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub dt: f64,
    /// Cap on the number of (sub)steps of one path.
    pub max_steps: u64,
    pub seed: u64,
    pub workers: usize,
    /// Pair paths `2i, 2i+1` on one stream with negated increments.
    pub antithetic: bool,
    pub paths: usize,
    /// Boundary substeps keep the median jump below `δ / boundary_factor`.
    pub boundary_factor: f64,
    /// Cells along the longest side of the bridge grid.
    pub grid_bins: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            dt: 1.0 / 1024.0,
            max_steps: 1 << 24,
            seed: 0,
            workers: 0,
            antithetic: false,
            paths: 100_000,
            boundary_factor: 10.0,
            grid_bins: 64,
        }
    }
}

impl PathConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.paths < 2 {
            return Err(Error::InvalidParameter("need at least two paths".into()));
        }
        if !(self.boundary_factor > 0.0) {
            return Err(Error::InvalidParameter("boundary_factor must be positive".into()));
        }
        if self.grid_bins < 4 {
            return Err(Error::InvalidParameter("grid_bins must be at least 4".into()));
        }
        Ok(())
    }

    fn check_horizon(&self, horizon: f64) -> Result<()> {
        self.check()?;
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be finite and nonnegative, got {horizon}")));
        }
        if self.dt * self.max_steps as f64 + 1e-12 * horizon < horizon {
            return Err(Error::InvalidParameter(format!(
                "dt·max_steps = {} is below the horizon {horizon}",
                self.dt * self.max_steps as f64
            )));
        }
        Ok(())
    }

    /// The configuration seen after the space rescaling `x ↦ λx`.
    pub fn scaled(&self, lambda: f64, alpha: f64) -> Self {
        Self { dt: self.dt * lambda.powf(alpha), ..*self }
    }

    fn path_count(&self) -> usize {
        if self.antithetic {
            self.paths + self.paths % 2
        } else {
            self.paths
        }
    }
}

/// Drifted stable process, forward or dual.
#[derive(Debug, Clone)]
pub struct Process {
    law: StableLaw,
    drift: DriftField,
    dual: bool,
    median: f64,
}

impl Process {
    pub fn new(law: StableLaw, drift: DriftField) -> Result<Self> {
        if law.dim() != drift.dim() {
            return Err(Error::InvalidParameter(format!(
                "drift dimension {} does not match law dimension {}",
                drift.dim(),
                law.dim()
            )));
        }
        let median = law.median_radius();
        Ok(Self { law, drift, dual: false, median })
    }

    pub fn free(law: StableLaw) -> Self {
        let drift = DriftField::zero(law.dim());
        Self::new(law, drift).expect("zero drift matches the law dimension")
    }

    /// Drift `-b` with killing weight `exp(-∫ div b)`.
    pub fn dual(&self) -> Result<Self> {
        if self.dual {
            return Err(Error::InvalidParameter("process is already the dual".into()));
        }
        if !self.drift.has_divergence() {
            return Err(Error::InvalidParameter(format!(
                "dual process needs a pointwise divergence, not available for {}",
                self.drift
            )));
        }
        Ok(Self { law: self.law.clone(), drift: self.drift.amplified(-1.0), dual: true, median: self.median })
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    pub fn law(&self) -> &StableLaw {
        &self.law
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    /// The process after `x ↦ λx`, `t ↦ λ^α t`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let drift = self.drift.scaled(lambda, self.law.alpha())?;
        Ok(Self { drift, ..self.clone() })
    }

    /// One Euler step `x + b(x) dt + (Z_{dt} - Z_0)`.
    pub fn step(&self, x: &[f64], dt: f64, rng: &mut Stream) -> Result<Vec<f64>> {
        ensure_finite(x, "x")?;
        if x.len() != self.dim() {
            return Err(Error::InvalidParameter("point dimension mismatch".into()));
        }
        let mut out = vec![0.0; x.len()];
        self.law.sample_increment(dt, rng, &mut out)?;
        self.drift.eval_add(x, dt, &mut out);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("drift"));
        }
        out.iter_mut().zip(x).for_each(|(o, a)| *o += a);
        Ok(out)
    }

    /// Run `w` to time `until` or until it leaves `domain`, calling
    /// `on_step(pre, post, h)` after every (sub)step.
    fn advance<F: FnMut(&[f64], &[f64], f64)>(
        &self,
        w: &mut Walker,
        domain: Option<&Domain>,
        until: f64,
        cfg: &PathConfig,
        on_step: &mut F,
    ) -> Result<()> {
        if !w.alive || w.t >= until {
            return Ok(());
        }
        let alpha = self.law.alpha();
        let kappa = cfg.boundary_factor * self.median;
        let reach = kappa * cfg.dt.powf(1.0 / alpha);
        let h_min = cfg.dt * SUBSTEP_FLOOR;
        let mut next = vec![0.0; w.x.len()];
        while w.alive && w.t < until {
            if w.steps >= cfg.max_steps {
                w.alive = false;
                w.censored = true;
                break;
            }
            let rem = until - w.t;
            let mut h = rem.min(cfg.dt);
            if let Some(dom) = domain {
                let de = dom.delta_estimate(&w.x);
                if de < reach {
                    h = h.min((de / kappa).powf(alpha).max(h_min));
                }
            }
            self.law.sample_increment(h, &mut w.rng, &mut next)?;
            let mut jump2 = 0.0;
            for v in next.iter_mut() {
                *v *= w.sign;
                jump2 += *v * *v;
            }
            self.drift.eval_add(&w.x, h, &mut next);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("drift"));
            }
            next.iter_mut().zip(&w.x).for_each(|(o, a)| *o += a);
            if self.dual {
                // Current drift is -b, so div(-b) = -div b.
                w.log_w += self.drift.divergence(&w.x).unwrap_or(0.0) * h;
            }
            w.t = if h >= rem { until } else { w.t + h };
            w.steps += 1;
            on_step(&w.x, &next, h);
            let inside = domain.is_none_or(|d| d.contains(&next));
            std::mem::swap(&mut w.x, &mut next);
            if !inside {
                w.alive = false;
                let by_jump = jump2.sqrt() > 4.0 * self.median * h.powf(1.0 / alpha);
                w.exit = Some((w.t, by_jump));
            }
        }
        Ok(())
    }
}

/// Exit data of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub tau: f64,
    pub exit_point: Vec<f64>,
    /// The killing step was a jump larger than four median increments.
    pub exited_by_jump: bool,
    pub alive_at_horizon: bool,
    /// The step cap was reached before the horizon.
    pub censored: bool,
}

/// State of one simulated path.
#[derive(Debug, Clone)]
pub struct Walker {
    x: Vec<f64>,
    rng: Stream,
    sign: f64,
    t: f64,
    alive: bool,
    censored: bool,
    log_w: f64,
    steps: u64,
    exit: Option<(f64, bool)>,
}

impl Walker {
    fn new(x0: &[f64], family: &StreamFamily, index: usize, antithetic: bool) -> Self {
        let (stream, sign) = if antithetic {
            ((index / 2) as u64, if index % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (index as u64, 1.0)
        };
        Self {
            x: x0.to_vec(),
            rng: family.stream(stream),
            sign,
            t: 0.0,
            alive: true,
            censored: false,
            log_w: 0.0,
            steps: 0,
            exit: None,
        }
    }

    /// Current position, or the exit point once killed.
    pub fn position(&self) -> &[f64] {
        &self.x
    }

    pub fn is_alive(&self) -> bool {
        self.alive
    }

    /// Feynman–Kac weight of a live path, zero once killed.
    pub fn weight(&self) -> f64 {
        if self.alive {
            self.log_w.exp()
        } else {
            0.0
        }
    }

    pub fn exit_time(&self) -> Option<f64> {
        self.exit.map(|e| e.0)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn record(&self) -> ExitRecord {
        match self.exit {
            Some((tau, by_jump)) => ExitRecord {
                tau,
                exit_point: self.x.clone(),
                exited_by_jump: by_jump,
                alive_at_horizon: false,
                censored: false,
            },
            None => ExitRecord {
                tau: self.t,
                exit_point: self.x.clone(),
                exited_by_jump: false,
                alive_at_horizon: true,
                censored: self.censored,
            },
        }
    }
}

fn check_start(process: &Process, domain: Option<&Domain>, x0: &[f64]) -> Result<()> {
    ensure_finite(x0, "x0")?;
    if x0.len() != process.dim() {
        return Err(Error::InvalidParameter("start point dimension mismatch".into()));
    }
    if let Some(d) = domain {
        if d.dim() != process.dim() {
            return Err(Error::InvalidParameter("domain dimension mismatch".into()));
        }
        if !d.contains(x0) {
            return Err(Error::OutsideDomain);
        }
    }
    Ok(())
}

/// One killed path from `x0` up to `horizon`.
pub fn simulate_killed(
    process: &Process,
    domain: &Domain,
    x0: &[f64],
    horizon: f64,
    cfg: &PathConfig,
    stream: Stream,
) -> Result<ExitRecord> {
    cfg.check_horizon(horizon)?;
    check_start(process, Some(domain), x0)?;
    let mut w = Walker::new(x0, &StreamFamily::new(0), 0, false);
    w.rng = stream;
    process.advance(&mut w, Some(domain), horizon, cfg, &mut |_, _, _| {})?;
    Ok(w.record())
}

/// Mean and variance of the mean of per-path values, averaging antithetic
/// pairs first.
fn mean_var(v: &[f64], antithetic: bool) -> (f64, f64) {
    let m = if antithetic && v.len() >= 4 {
        let pairs: Vec<f64> = v.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        MeanEstimate::from_samples(&pairs)
    } else {
        MeanEstimate::from_samples(v)
    };
    (m.mean, m.stderr * m.stderr)
}

fn estimate_of(v: &[f64], antithetic: bool) -> MeanEstimate {
    let (mean, var) = mean_var(v, antithetic);
    MeanEstimate { mean, stderr: var.sqrt(), n: v.len() }
}

/// A set of persistent paths started at one point.
#[derive(Debug, Clone)]
pub struct Ensemble {
    process: Process,
    domain: Option<Domain>,
    cfg: PathConfig,
    start: Vec<f64>,
    walkers: Vec<Walker>,
    t: f64,
}

impl Ensemble {
    pub fn new(
        process: &Process,
        domain: Option<&Domain>,
        x0: &[f64],
        cfg: &PathConfig,
        family: &StreamFamily,
    ) -> Result<Self> {
        cfg.check()?;
        check_start(process, domain, x0)?;
        let walkers = (0..cfg.path_count()).map(|i| Walker::new(x0, family, i, cfg.antithetic)).collect();
        Ok(Self { process: process.clone(), domain: domain.cloned(), cfg: *cfg, start: x0.to_vec(), walkers, t: 0.0 })
    }

    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        self.advance_with(t, &mut vec![(); self.walkers.len()], &|_, _, _, _| {})
    }

    /// Advance with a per-path accumulator updated after every step.
    pub fn advance_with<A: Send, F: Fn(&mut A, &[f64], &[f64], f64) + Sync>(
        &mut self,
        t: f64,
        acc: &mut [A],
        f: &F,
    ) -> Result<()> {
        if t < self.t {
            return Err(Error::InvalidParameter(format!("cannot move back from {} to {t}", self.t)));
        }
        if acc.len() != self.walkers.len() {
            return Err(Error::InvalidParameter("one accumulator per path is required".into()));
        }
        self.cfg.check_horizon(t)?;
        let (process, domain, cfg) = (&self.process, self.domain.as_ref(), &self.cfg);
        let errors: Vec<Option<Error>> = self
            .walkers
            .par_iter_mut()
            .zip(acc.par_iter_mut())
            .with_min_len(64)
            .map(|(w, a)| process.advance(w, domain, t, cfg, &mut |p, q, h| f(a, p, q, h)).err())
            .collect();
        if let Some(e) = errors.into_iter().flatten().next() {
            return Err(e);
        }
        self.t = t;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn start(&self) -> &[f64] {
        &self.start
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }

    pub fn walkers(&self) -> &[Walker] {
        &self.walkers
    }

    pub fn alive_count(&self) -> usize {
        self.walkers.iter().filter(|w| w.alive).count()
    }

    pub fn censored_count(&self) -> usize {
        self.walkers.iter().filter(|w| w.censored).count()
    }

    /// Mean over all paths of a per-path value.
    pub fn mean_of<F: Fn(&Walker) -> f64 + Sync + Send>(&self, f: F) -> MeanEstimate {
        let v: Vec<f64> = self.walkers.par_iter().map(|w| f(w)).collect();
        estimate_of(&v, self.cfg.antithetic)
    }

    /// `P_x(τ > t)`, or the total weight for the dual process.
    pub fn survival(&self) -> MeanEstimate {
        self.mean_of(|w| w.weight())
    }

    pub fn records(&self) -> Vec<ExitRecord> {
        self.walkers.iter().map(Walker::record).collect()
    }
}

/// Write one JSON line per path: start point and exit record.
pub fn write_path_records(path: &Path, x0: &[f64], records: &[ExitRecord]) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        x0: &'a [f64],
        #[serde(flatten)]
        record: &'a ExitRecord,
    }
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, &Line { x0, record: r })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMethod {
    Kde,
    Hybrid,
    Occupation,
    Series,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub method: KernelMethod,
    /// Too few surviving paths or a fallback was used.
    pub unreliable: bool,
    /// Bound on the bias from censoring (zero when no path was censored).
    pub bias_bound: f64,
}

fn default_horizon(domain: &Domain, alpha: f64) -> f64 {
    10.0 * domain.diameter().powf(alpha)
}

fn check_targets(domain: &Domain, ys: &[Vec<f64>]) -> Result<()> {
    for y in ys {
        ensure_finite(y, "y")?;
        if y.len() != domain.dim() {
            return Err(Error::InvalidParameter("target dimension mismatch".into()));
        }
        if !domain.contains(y) {
            return Err(Error::OutsideDomain);
        }
    }
    Ok(())
}

/// Gaussian kernel density of the surviving endpoints at time `t`.
/// The bandwidth at `y` is the Silverman bandwidth capped by `δ_D(y)`.
pub fn kernel_kde(
    process: &Process,
    domain: &Domain,
    t: f64,
    x: &[f64],
    ys: &[Vec<f64>],
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<Vec<KernelEstimate>> {
    check_targets(domain, ys)?;
    let mut ens = Ensemble::new(process, Some(domain), x, cfg, family)?;
    ens.advance_to(t)?;
    let d = process.dim();
    let alive: Vec<&Walker> = ens.walkers.iter().filter(|w| w.alive).collect();
    let n_alive = alive.len();
    let h0 = if n_alive >= 2 {
        let mut sigma = 0.0;
        for i in 0..d {
            let c: Vec<f64> = alive.iter().map(|w| w.x[i]).collect();
            let m = MeanEstimate::from_samples(&c);
            let sd = m.stderr * (n_alive as f64).sqrt();
            let iqr = quantile(&c, 0.75) - quantile(&c, 0.25);
            let robust = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
            sigma += robust / d as f64;
        }
        sigma * (4.0 / ((d as f64 + 2.0) * n_alive as f64)).powf(1.0 / (d as f64 + 4.0))
    } else {
        domain.diameter()
    };
    let unreliable = n_alive < 100;
    ys.iter()
        .map(|y| {
            let h = h0.min(domain.delta(y)).max(1e-300);
            let norm = (2.0 * std::f64::consts::PI * h * h).powf(-(d as f64) / 2.0);
            let v: Vec<f64> = ens
                .walkers
                .par_iter()
                .map(|w| {
                    if !w.alive {
                        return 0.0;
                    }
                    let r2: f64 = w.x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                    w.log_w.exp() * norm * (-0.5 * r2 / (h * h)).exp()
                })
                .collect();
            let m = estimate_of(&v, cfg.antithetic);
            Ok(KernelEstimate {
                value: m.mean,
                stderr: m.stderr,
                n_paths: v.len(),
                method: KernelMethod::Kde,
                unreliable,
                bias_bound: 0.0,
            })
        })
        .collect()
}

/// `p^b(t,x,y) - E_x[p^b(t-τ, X_τ, y); τ < t]`, the residual kernel drawn by
/// a single randomized series estimate per exited path.
pub fn kernel_hybrid(
    kernel: &DriftedKernel,
    domain: &Domain,
    t: f64,
    x: &[f64],
    ys: &[Vec<f64>],
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<Vec<KernelEstimate>> {
    check_targets(domain, ys)?;
    let process = Process::new(kernel.law().clone(), kernel.drift().clone())?;
    let mut ens = Ensemble::new(&process, Some(domain), x, cfg, &family.child(1))?;
    ens.advance_to(t)?;
    let law = kernel.law();
    let zero = kernel.drift().is_zero();
    ys.iter()
        .enumerate()
        .map(|(j, y)| {
            let (free, free_se) = if zero {
                (law.density(t, x, y)?, 0.0)
            } else {
                let v = kernel.free_kernel(t, x, y, &family.child(2).child(j as u64))?;
                (v.value, v.stderr)
            };
            let streams = family.child(3).child(j as u64);
            let cells: Vec<(f64, bool)> = par_map(ens.walkers.len(), |i| {
                let w = &ens.walkers[i];
                let Some((tau, _)) = w.exit else { return (0.0, false) };
                let s = t - tau;
                if s <= 0.0 {
                    return (0.0, false);
                }
                if zero {
                    return (law.density_radial(s, dist(&w.x, y)), false);
                }
                let mut rng = streams.stream(i as u64);
                match kernel.single_shot(s, &w.x, y, &mut rng) {
                    Ok(v) => (v, false),
                    Err(_) => (law.density_radial(s, dist(&w.x, y)), true),
                }
            });
            let v: Vec<f64> = cells.iter().map(|c| c.0).collect();
            let (m, var) = mean_var(&v, cfg.antithetic);
            Ok(KernelEstimate {
                value: free - m,
                stderr: (free_se * free_se + var).sqrt(),
                n_paths: v.len(),
                method: KernelMethod::Hybrid,
                unreliable: cells.iter().any(|c| c.1),
                bias_bound: 0.0,
            })
        })
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cloud-in-cell grid over the padded bounding box of a domain.
#[derive(Debug, Clone)]
struct Grid {
    lo: Vec<f64>,
    h: f64,
    n: Vec<usize>,
    stride: Vec<usize>,
    len: usize,
    corners: usize,
    offsets: usize,
}

impl Grid {
    fn new(domain: &Domain, bins: usize) -> Self {
        let (lo, hi) = domain.bounding_box();
        let ext = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let h = ext / bins as f64;
        let lo: Vec<f64> = lo.iter().map(|a| a - h).collect();
        let n: Vec<usize> = lo.iter().zip(&hi).map(|(a, b)| ((b - a) / h).ceil() as usize + 2).collect();
        let mut stride = vec![1; n.len()];
        for i in 1..n.len() {
            stride[i] = stride[i - 1] * n[i - 1];
        }
        let len = n.iter().product();
        let d = n.len() as u32;
        Self { lo, h, n, stride, len, corners: 1 << d, offsets: 3usize.pow(d) }
    }

    fn cell_volume(&self) -> f64 {
        self.h.powi(self.n.len() as i32)
    }

    /// Corner cells and weights of `x`, written into `idx`/`wt`.
    fn cic(&self, x: &[f64], idx: &mut [u32], wt: &mut [f64]) {
        let d = self.n.len();
        let mut base = 0usize;
        let mut frac = [0.0f64; 8];
        for i in 0..d {
            let u = (x[i] - self.lo[i]) / self.h - 0.5;
            let k = (u.floor().max(0.0) as usize).min(self.n[i] - 2);
            frac[i.min(7)] = (u - k as f64).clamp(0.0, 1.0);
            base += k * self.stride[i];
        }
        for m in 0..self.corners {
            let mut c = base;
            let mut w = 1.0;
            for (i, f) in frac.iter().enumerate().take(d) {
                if m >> i & 1 == 1 {
                    c += self.stride[i];
                    w *= f;
                } else {
                    w *= 1.0 - f;
                }
            }
            idx[m] = c as u32;
            wt[m] = w;
        }
    }

    /// Offset code of corner `b` seen from corner `a`.
    fn offset_code(&self, a: usize, b: usize) -> usize {
        let mut code = 0;
        let mut p = 1;
        for i in 0..self.n.len() {
            let diff = (b >> i & 1) as isize - (a >> i & 1) as isize;
            code += (diff + 1) as usize * p;
            p *= 3;
        }
        code
    }
}

/// Deposited weighted positions of an ensemble at one time.
struct Snapshot {
    mean: Vec<f64>,
    /// `(1/N) Σ_i w_i² f_{i,c} f_{i,c+o}` for neighbor offsets `o`.
    second: Vec<f64>,
    idx: Vec<u32>,
    wt: Vec<f64>,
    n: usize,
}

impl Snapshot {
    fn take(ens: &Ensemble, grid: &Grid) -> Self {
        let k = grid.corners;
        let n = ens.walkers.len();
        let mut idx = vec![0u32; n * k];
        let mut wt = vec![0.0; n * k];
        let mut mean = vec![0.0; grid.len];
        let mut second = vec![0.0; grid.len * grid.offsets];
        let codes: Vec<usize> = (0..k * k).map(|ab| grid.offset_code(ab / k, ab % k)).collect();
        for (i, w) in ens.walkers.iter().enumerate() {
            if !w.alive {
                continue;
            }
            let (ii, ww) = (&mut idx[i * k..(i + 1) * k], &mut wt[i * k..(i + 1) * k]);
            grid.cic(&w.x, ii, ww);
            let weight = w.log_w.exp();
            for m in 0..k {
                ww[m] *= weight;
                mean[ii[m] as usize] += ww[m];
            }
            for a in 0..k {
                for b in 0..k {
                    second[ii[a] as usize * grid.offsets + codes[a * k + b]] += ww[a] * ww[b];
                }
            }
        }
        let inv = 1.0 / n as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        second.iter_mut().for_each(|v| *v *= inv);
        Self { mean, second, idx, wt, n }
    }

    /// Per-path inner products `w_i f_i · g`.
    fn influence(&self, k: usize, g: &[f64]) -> Vec<f64> {
        par_map(self.n, |i| {
            let mut s = 0.0;
            for m in i * k..(i + 1) * k {
                s += self.wt[m] * g[self.idx[m] as usize];
            }
            s
        })
    }
}

/// `Σ_{c,c'} Cov_F[c,c'] Cov_G[c,c']` from the neighbor second moments.
fn covariance_trace(f: &Snapshot, g: &Snapshot, fa2: f64, gb2: f64, dot: f64) -> f64 {
    let s: f64 = f.second.iter().zip(&g.second).map(|(a, b)| a * b).sum();
    (s - fa2 - gb2 + dot * dot).max(0.0)
}

/// One level of paired clouds: product value, per-path influences and the
/// second-order variance term.
struct PairLevel {
    value: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    trace: f64,
}

fn pair_level(grid: &Grid, f: &Snapshot, g: &Snapshot) -> PairLevel {
    let value: f64 = f.mean.iter().zip(&g.mean).map(|(a, b)| a * b).sum();
    let a = f.influence(grid.corners, &g.mean);
    let b = g.influence(grid.corners, &f.mean);
    let fa2 = tree_sum(&a.iter().map(|v| v * v).collect::<Vec<_>>()) / f.n as f64;
    let gb2 = tree_sum(&b.iter().map(|v| v * v).collect::<Vec<_>>()) / g.n as f64;
    let trace = covariance_trace(f, g, fa2, gb2, value);
    PairLevel { value, a, b, trace }
}

/// Forward clouds from `xs` and dual clouds from `ys` on one grid.
struct Bridge {
    grid: Grid,
    fwd: Vec<Ensemble>,
    dual: Vec<Ensemble>,
    pairs: Vec<(usize, usize)>,
    antithetic: bool,
}

impl Bridge {
    fn new(
        process: &Process,
        domain: &Domain,
        xs: &[Vec<f64>],
        ys: &[Vec<f64>],
        pairs: &[(usize, usize)],
        cfg: &PathConfig,
        family: &StreamFamily,
    ) -> Result<Self> {
        if process.is_dual() {
            return Err(Error::InvalidParameter("bridge estimators take the forward process".into()));
        }
        check_targets(domain, xs)?;
        check_targets(domain, ys)?;
        for &(i, j) in pairs {
            if i >= xs.len() || j >= ys.len() {
                return Err(Error::InvalidParameter(format!("pair ({i},{j}) out of range")));
            }
        }
        let dual = process.dual()?;
        let fwd = xs
            .iter()
            .enumerate()
            .map(|(i, x)| Ensemble::new(process, Some(domain), x, cfg, &family.child(1).child(i as u64)))
            .collect::<Result<_>>()?;
        let dual = ys
            .iter()
            .enumerate()
            .map(|(j, y)| Ensemble::new(&dual, Some(domain), y, cfg, &family.child(2).child(j as u64)))
            .collect::<Result<_>>()?;
        Ok(Self {
            grid: Grid::new(domain, cfg.grid_bins),
            fwd,
            dual,
            pairs: pairs.to_vec(),
            antithetic: cfg.antithetic,
        })
    }

    fn advance_to(&mut self, s: f64) -> Result<()> {
        for e in self.fwd.iter_mut().chain(self.dual.iter_mut()) {
            e.advance_to(s)?;
        }
        Ok(())
    }

    fn levels(&self) -> Vec<PairLevel> {
        let grid = &self.grid;
        let fs: Vec<Snapshot> = self.fwd.par_iter().map(|e| Snapshot::take(e, grid)).collect();
        let gs: Vec<Snapshot> = self.dual.par_iter().map(|e| Snapshot::take(e, grid)).collect();
        self.pairs.iter().map(|&(i, j)| pair_level(grid, &fs[i], &gs[j])).collect()
    }

    fn all_dead(&self) -> bool {
        self.fwd.iter().all(|e| e.alive_count() == 0) || self.dual.iter().all(|e| e.alive_count() == 0)
    }
}

/// Killed heat kernel at every `(t, pair)` from paired forward and dual
/// clouds at `t/2`. Returns `[time index][pair index]`.
pub fn kernel_bridge(
    process: &Process,
    domain: &Domain,
    ts: &[f64],
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    pairs: &[(usize, usize)],
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<Vec<Vec<KernelEstimate>>> {
    for &t in ts {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("time must be positive, got {t}")));
        }
    }
    let mut bridge = Bridge::new(process, domain, xs, ys, pairs, cfg, family)?;
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let vol = bridge.grid.cell_volume();
    let mut out = vec![Vec::new(); ts.len()];
    for k in order {
        bridge.advance_to(0.5 * ts[k])?;
        let alive_f: Vec<usize> = bridge.fwd.iter().map(|e| e.alive_count()).collect();
        let alive_g: Vec<usize> = bridge.dual.iter().map(|e| e.alive_count()).collect();
        out[k] = bridge
            .levels()
            .into_iter()
            .zip(&bridge.pairs)
            .map(|(lv, &(i, j))| {
                let nf = lv.a.len() as f64;
                let ng = lv.b.len() as f64;
                let (_, va) = mean_var(&lv.a, bridge.antithetic);
                let (_, vb) = mean_var(&lv.b, bridge.antithetic);
                let var = va + vb + lv.trace / (nf * ng);
                KernelEstimate {
                    value: lv.value / vol,
                    stderr: var.sqrt() / vol,
                    n_paths: lv.a.len() + lv.b.len(),
                    method: KernelMethod::Bridge,
                    unreliable: alive_f[i] < 100 || alive_g[j] < 100,
                    bias_bound: 0.0,
                }
            })
            .collect();
    }
    Ok(out)
}

/// Half-time levels for the Green bridge: geometric near zero, then uniform.
fn green_levels(scale: f64, horizon: f64) -> Vec<f64> {
    let mut s = 1e-4 * scale;
    let mut v = Vec::new();
    while s < 0.05 * scale && s < horizon {
        v.push(s);
        s *= 2f64.powf(0.25);
    }
    let mut u = 0.05 * scale;
    while u < horizon {
        v.push(u);
        u += 0.02 * scale;
    }
    v.push(horizon);
    v
}

/// Killed Green function at each pair from the time integral of paired
/// forward and dual clouds. Paths still alive at the horizon leave a tail,
/// reported as `bias_bound` from the last observed decay rate.
pub fn green_bridge(
    process: &Process,
    domain: &Domain,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    pairs: &[(usize, usize)],
    horizon: Option<f64>,
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<Vec<KernelEstimate>> {
    let scale = domain.diameter().powf(process.law().alpha());
    let horizon = horizon.unwrap_or(10.0 * scale);
    let mut bridge = Bridge::new(process, domain, xs, ys, pairs, cfg, family)?;
    let levels = green_levels(scale, horizon);
    let vol = bridge.grid.cell_volume();
    let np = pairs.len();
    let mut value = vec![0.0; np];
    let mut trace = vec![0.0; np];
    let mut acc_a: Vec<Vec<f64>> = vec![vec![0.0; cfg.path_count()]; np];
    let mut acc_b: Vec<Vec<f64>> = vec![vec![0.0; cfg.path_count()]; np];
    let mut last = vec![(0.0, 0.0); np];
    let mut prev = vec![(0.0, 0.0); np];
    let mut reached = 0.0;
    for (k, &s) in levels.iter().enumerate() {
        bridge.advance_to(s)?;
        let s_prev = if k == 0 { 0.0 } else { levels[k - 1] };
        let s_next = levels.get(k + 1).copied().unwrap_or(s);
        // Trapezoid weight, times 2 from t = 2s.
        let c = (s_next - s_prev) / vol;
        for (p, lv) in bridge.levels().into_iter().enumerate() {
            value[p] += c * lv.value;
            trace[p] += c * c * lv.trace;
            acc_a[p].iter_mut().zip(&lv.a).for_each(|(x, v)| *x += c * v);
            acc_b[p].iter_mut().zip(&lv.b).for_each(|(x, v)| *x += c * v);
            prev[p] = last[p];
            last[p] = (s, lv.value / vol);
        }
        reached = s;
        if bridge.all_dead() {
            break;
        }
    }
    let censored = !bridge.all_dead();
    Ok((0..np)
        .map(|p| {
            let n = acc_a[p].len() as f64;
            let (_, va) = mean_var(&acc_a[p], bridge.antithetic);
            let (_, vb) = mean_var(&acc_b[p], bridge.antithetic);
            let var = va + vb + trace[p] / (n * n);
            let bias_bound = if censored {
                let (s1, v1) = last[p];
                let (s0, v0) = prev[p];
                let rate = if v0 > 0.0 && v1 > 0.0 && s1 > s0 { (v0 / v1).ln() / (s1 - s0) } else { 0.0 };
                if rate > 0.0 {
                    2.0 * v1 / rate
                } else {
                    2.0 * v1 * reached
                }
            } else {
                0.0
            };
            KernelEstimate {
                value: value[p],
                stderr: var.sqrt(),
                n_paths: acc_a[p].len() + acc_b[p].len(),
                method: KernelMethod::Bridge,
                unreliable: censored,
                bias_bound,
            }
        })
        .collect())
}

/// Occupation-density Green estimates at radius `eps` and `eps/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub eps: f64,
    pub estimate: KernelEstimate,
    pub refined: KernelEstimate,
}

impl OccupationEstimate {
    pub fn refinement_delta(&self) -> f64 {
        (self.estimate.value - self.refined.value).abs()
    }
}

/// Time spent in `B(y, ε)` before exit, divided by `|B(y, ε)|`.
pub fn green_occupation(
    process: &Process,
    domain: &Domain,
    x: &[f64],
    ys: &[Vec<f64>],
    eps: Option<f64>,
    horizon: Option<f64>,
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<Vec<OccupationEstimate>> {
    check_targets(domain, ys)?;
    let eps = eps.unwrap_or(domain.diameter() / 40.0);
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let horizon = horizon.unwrap_or(default_horizon(domain, process.law().alpha()));
    let mut ens = Ensemble::new(process, Some(domain), x, cfg, family)?;
    let m = ys.len();
    let mut acc = vec![vec![0.0; 2 * m]; ens.len()];
    let (e2, e2h) = (eps * eps, 0.25 * eps * eps);
    ens.advance_with(horizon, &mut acc, &|a: &mut Vec<f64>, pre, _post, h| {
        for (j, y) in ys.iter().enumerate() {
            let r2: f64 = pre.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
            if r2 < e2 {
                a[j] += h;
                if r2 < e2h {
                    a[m + j] += h;
                }
            }
        }
    })?;
    let surv = ens.survival().mean;
    let d = process.dim();
    let vol = ball_volume(d) * eps.powi(d as i32);
    let vol_h = vol / 2f64.powi(d as i32);
    let make = |col: usize, v: f64| {
        let s: Vec<f64> = acc.iter().map(|a| a[col] / v).collect();
        let e = estimate_of(&s, cfg.antithetic);
        KernelEstimate {
            value: e.mean,
            stderr: e.stderr,
            n_paths: s.len(),
            method: KernelMethod::Occupation,
            unreliable: surv > 0.0,
            bias_bound: surv * e.mean,
        }
    };
    Ok((0..m).map(|j| OccupationEstimate { eps, estimate: make(j, vol), refined: make(m + j, vol_h) }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicEstimate {
    pub value: MeanEstimate,
    /// Paths that had not exited by the horizon (they contribute zero).
    pub censored: usize,
}

/// `E_x[f(X_τ)]` for the exit from `domain`.
pub fn harmonic_value<F: Fn(&[f64]) -> f64 + Sync>(
    process: &Process,
    domain: &Domain,
    x: &[f64],
    f: F,
    horizon: Option<f64>,
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<HarmonicEstimate> {
    let horizon = horizon.unwrap_or(default_horizon(domain, process.law().alpha()));
    let mut ens = Ensemble::new(process, Some(domain), x, cfg, family)?;
    ens.advance_to(horizon)?;
    let value = ens.mean_of(|w| if w.exit.is_some() { f(&w.x) } else { 0.0 });
    Ok(HarmonicEstimate { value, censored: ens.alive_count() + ens.censored_count() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyCount {
    /// Expected number of jumps from `A` into `B`.
    pub count: MeanEstimate,
    /// `E ∫ 1_A(X_s) J(X_s, B) ds`.
    pub compensator: MeanEstimate,
    /// Path-wise difference of the two.
    pub difference: MeanEstimate,
    /// The median increment per step is not small against `dist(A, B)`.
    pub coarse: bool,
}

fn ball_parts(d: &Domain) -> Result<(Vec<f64>, f64)> {
    match d.kind() {
        DomainKind::Ball { center, radius } => Ok((center.clone(), *radius)),
        _ => Err(Error::InvalidParameter(format!("jump-count windows must be balls, got {d}"))),
    }
}

/// `∫_{B(0,R)} J(z, y) dy` with `|z| = ρ > R`, by integrating each ray's
/// chord `∫_{s1}^{s2} s^{-1-α} ds` over directions.
fn ball_jump_mass(law: &StableLaw, radius: f64, rho: f64) -> f64 {
    let alpha = law.alpha();
    let d = law.dim();
    let amp = law.jump_kernel().amplitude();
    let tmax = (radius / rho).asin();
    let gl = GaussLegendre::cached(64);
    let integral = gl.integrate(0.0, 1.0, |w| {
        let th = tmax * (1.0 - w * w);
        let (sn, cs) = th.sin_cos();
        let root = (radius * radius - rho * rho * sn * sn).max(0.0).sqrt();
        let s1 = rho * cs - root;
        let s2 = rho * cs + root;
        let chord = (s1.powf(-alpha) - s2.powf(-alpha)) / alpha;
        2.0 * tmax * w * sn.powi(d as i32 - 2) * chord
    });
    amp * sphere_area(d - 1) * integral
}

/// Jumps from `A` into `B` over `[0, t]` against their compensator, both
/// from the same paths of the unkilled process.
pub fn levy_jump_count(
    process: &Process,
    a: &Domain,
    b: &Domain,
    t: f64,
    x0: &[f64],
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<LevyCount> {
    let (ca, ra) = ball_parts(a)?;
    let (cb, rb) = ball_parts(b)?;
    let centers = dist(&ca, &cb);
    let gap = centers - ra - rb;
    if gap <= 0.0 {
        return Err(Error::InvalidParameter("windows must be at positive distance".into()));
    }
    let law = process.law();
    let (lo, hi) = (centers - ra, centers + ra);
    let nodes = 2048;
    let table: Vec<f64> =
        (0..=nodes).map(|k| ball_jump_mass(law, rb, lo + (hi - lo) * k as f64 / nodes as f64)).collect();
    let mass = |rho: f64| {
        let u = ((rho - lo) / (hi - lo) * nodes as f64).clamp(0.0, nodes as f64);
        let k = (u.floor() as usize).min(nodes - 1);
        let f = u - k as f64;
        table[k] * (1.0 - f) + table[k + 1] * f
    };
    let mut ens = Ensemble::new(process, None, x0, cfg, family)?;
    let mut acc = vec![[0.0f64; 2]; ens.len()];
    let (ra2, rb2) = (ra * ra, rb * rb);
    let half = 0.5 * gap;
    ens.advance_with(t, &mut acc, &|c: &mut [f64; 2], pre, post, h| {
        let da2: f64 = pre.iter().zip(&ca).map(|(p, q)| (p - q) * (p - q)).sum();
        if da2 >= ra2 {
            return;
        }
        c[1] += h * mass(dist(pre, &cb));
        let db2: f64 = post.iter().zip(&cb).map(|(p, q)| (p - q) * (p - q)).sum();
        if db2 < rb2 && dist(pre, post) > half {
            c[0] += 1.0;
        }
    })?;
    let count: Vec<f64> = acc.iter().map(|c| c[0]).collect();
    let comp: Vec<f64> = acc.iter().map(|c| c[1]).collect();
    let diff: Vec<f64> = acc.iter().map(|c| c[0] - c[1]).collect();
    let coarse = process.median * cfg.dt.powf(1.0 / law.alpha()) > gap / 20.0;
    Ok(LevyCount {
        count: estimate_of(&count, cfg.antithetic),
        compensator: estimate_of(&comp, cfg.antithetic),
        difference: estimate_of(&diff, cfg.antithetic),
        coarse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub lambda: f64,
    /// Half-width of the confidence interval.
    pub ci: f64,
    pub per_probe: Vec<f64>,
    /// Time window of the linear fit (latest start, earliest end over probes).
    pub window: (f64, f64),
}

/// Principal decay rate from the slope of `-log P_x(τ > t)` over the first
/// window where a line fits (`χ²/dof ≤ 2`) with at least 100 survivors.
pub fn eigen_estimate(
    process: &Process,
    domain: &Domain,
    probes: &[Vec<f64>],
    t_grid: &[f64],
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<EigenEstimate> {
    if probes.is_empty() {
        return Err(Error::InvalidParameter("need at least one probe".into()));
    }
    if t_grid.len() < 3 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return Err(Error::InvalidParameter("time grid must be increasing, positive, with 3+ points".into()));
    }
    let mut slopes = Vec::new();
    let mut ses = Vec::new();
    let mut window = (0.0f64, f64::INFINITY);
    for (p, x) in probes.iter().enumerate() {
        let mut ens = Ensemble::new(process, Some(domain), x, cfg, &family.child(p as u64))?;
        let n = ens.len() as f64;
        let mut pts = Vec::new();
        for &t in t_grid {
            ens.advance_to(t)?;
            let alive = ens.alive_count();
            if alive < 100 {
                break;
            }
            let s = alive as f64 / n;
            pts.push((t, -s.ln(), (1.0 - s) / (n * s)));
        }
        if pts.len() < 3 {
            return Err(Error::NoLinearWindow(format!("probe {p}: fewer than 3 times with 100 survivors")));
        }
        let mut found = None;
        for start in 0..=pts.len() - 3 {
            let w = &pts[start..];
            let xs: Vec<f64> = w.iter().map(|q| q.0).collect();
            let ys: Vec<f64> = w.iter().map(|q| q.1).collect();
            let wt: Vec<f64> = w.iter().map(|q| 1.0 / q.2.max(1e-300)).collect();
            let fit = weighted_linear_fit(&xs, &ys, &wt);
            let chi2: f64 = w.iter().zip(&wt).map(|(q, v)| v * (q.1 - fit.intercept - fit.slope * q.0).powi(2)).sum();
            if chi2 / (w.len() - 2) as f64 <= 2.0 {
                found = Some((fit.slope, fit.slope_stderr, xs[0], xs[xs.len() - 1]));
                break;
            }
        }
        let Some((slope, se, a, b)) = found else {
            return Err(Error::NoLinearWindow(format!("probe {p}: log survival is not linear on any tail window")));
        };
        slopes.push(slope);
        ses.push(if se.is_finite() { se } else { 0.0 });
        window = (window.0.max(a), window.1.min(b));
    }
    let np = slopes.len() as f64;
    let lambda = slopes.iter().sum::<f64>() / np;
    let between =
        if slopes.len() > 1 { slopes.iter().map(|s| (s - lambda).powi(2)).sum::<f64>() / (np - 1.0) } else { 0.0 };
    let within = ses.iter().map(|s| s * s).sum::<f64>() / np;
    let ci = 2.0 * ((between + within) / np).sqrt();
    Ok(EigenEstimate { lambda, ci, per_probe: slopes, window })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jump_mass_matches_far_field() {
        let law = StableLaw::new(1.5, 2).unwrap();
        let jk = law.jump_kernel();
        let r = 0.1;
        for rho in [2.0, 5.0, 20.0] {
            let approx = jk.intensity_radial(rho) * std::f64::consts::PI * r * r;
            let exact = ball_jump_mass(&law, r, rho);
            assert!((exact / approx - 1.0).abs() < 1e-2, "{rho}: {exact} vs {approx}");
        }
    }

    #[test]
    fn jump_mass_against_grid_sum() {
        let law = StableLaw::new(1.3, 2).unwrap();
        let jk = law.jump_kernel();
        let (r, rho) = (1.0, 1.6);
        let n = 1200;
        let h = 2.0 * r / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-r + (i as f64 + 0.5) * h, -r + (j as f64 + 0.5) * h];
                if y[0] * y[0] + y[1] * y[1] < r * r {
                    s += jk.intensity_radial(((y[0] - rho).powi(2) + y[1] * y[1]).sqrt()) * h * h;
                }
            }
        }
        let exact = ball_jump_mass(&law, r, rho);
        assert!((s / exact - 1.0).abs() < 5e-3, "{s} vs {exact}");
    }

    #[test]
    fn cic_weights_sum_to_one_and_reproduce_position() {
        let d = Domain::unit_ball(2);
        let g = Grid::new(&d, 16);
        let mut idx = [0u32; 4];
        let mut wt = [0.0; 4];
        let x = [0.31, -0.47];
        g.cic(&x, &mut idx, &mut wt);
        assert!((wt.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for axis in 0..2 {
            let mean: f64 = idx
                .iter()
                .zip(&wt)
                .map(|(&c, w)| {
                    let k = (c as usize / g.stride[axis]) % g.n[axis];
                    w * (g.lo[axis] + (k as f64 + 0.5) * g.h)
                })
                .sum();
            assert!((mean - x[axis]).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_requires_divergence() {
        let law = StableLaw::new(1.5, 2).unwrap();
        let p = Process::new(law.clone(), DriftField::parse("invpow:0.5;1", 2).unwrap()).unwrap();
        assert!(p.dual().is_err());
        let q = Process::new(law, DriftField::parse("bump:0,0;1;0.3", 2).unwrap()).unwrap();
        assert!(q.dual().unwrap().dual().is_err());
    }
}
