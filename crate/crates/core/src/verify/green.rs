use rand::Rng;
use rand_distr::StandardNormal;

use crate::drift::DriftField;
use crate::error::{Error, Result};
use crate::geometry::{g_d, BallGreen, Domain, DomainKind};
use crate::kato::{kato_modulus, SphereRule};
use crate::mc::{green_bridge, green_occupation};
use crate::rng::{par_map, MeanEstimate, Stream};
use crate::special::{sphere_area, GaussLegendre};

use super::kernel::{all_pairs, family, points, stability_check, CellSet};
use super::{sample_points, Cell, Check, Ctx, SuiteReport, Verdict};

const TAG_X: u64 = 31;
const TAG_Y: u64 = 32;
const TAG_MC: u64 = 33;
const TAG_EXACT: u64 = 34;
const TAG_SERIES: u64 = 35;

/// Terms of the Green perturbation series on the unit ball, relative to
/// the unperturbed Green function.
#[derive(Debug, Clone, PartialEq)]
pub struct GreenSeries {
    /// `Ĩ_k / G` for `k = 1..`, each with its standard error.
    pub terms: Vec<MeanEstimate>,
    /// `1 + Σ Ĩ_k / G`.
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Envelope `max_k ((|Ĩ_k| + σ_k)/G)^{1/k}`; below 1 when the series contracts.
    pub contraction: f64,
}

/// Density of `z ~ q_β(·|c)`, which has `|z - c|^{-β}` on `B(c, 2)`.
fn power_density(d: usize, beta: f64, r: f64) -> f64 {
    if r >= 2.0 {
        return 0.0;
    }
    let e = d as f64 - beta;
    e * r.powf(-beta) / (sphere_area(d) * 2f64.powf(e))
}

fn power_sample(rng: &mut Stream, d: usize, beta: f64, c: &[f64], out: &mut [f64]) {
    let e = d as f64 - beta;
    let rho = 2.0 * rng.random::<f64>().powf(1.0 / e);
    let mut norm = 0.0;
    for o in out.iter_mut() {
        *o = rng.sample(StandardNormal);
        norm += *o * *o;
    }
    let s = rho / norm.sqrt();
    for (o, ci) in out.iter_mut().zip(c) {
        *o = ci + s * *o;
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// `G^b_B(x, y) / G_B(x, y)` on the unit ball `B(0, 1)` from the iterated
/// Green perturbation `Ĩ_k(x, y) = ∫ Ĩ_{k-1}(x, z) b(z)·∇_z G_B(z, y) dz`.
///
/// Term `k` is a `k`-fold integral over the chain `x → z_1 → … → z_k → y`,
/// sampled with `|z_1 - x|^{α-d}` and `|z_{i+1} - z_i|^{α-d-1}` proposals;
/// the last point mixes the forward proposal with one centred at `y`.
pub fn green_series_ratio(
    alpha: f64,
    drift: &DriftField,
    x: &[f64],
    y: &[f64],
    k_max: usize,
    samples: usize,
    rng: &mut Stream,
) -> Result<GreenSeries> {
    let d = drift.dim();
    let g = BallGreen::new(vec![0.0; d], 1.0, alpha)?;
    let g0 = g.value(x, y)?;
    if samples < 2 {
        return Err(Error::InvalidParameter("need at least two samples per term".into()));
    }
    if drift.is_zero() {
        let zero = MeanEstimate { mean: 0.0, stderr: 0.0, n: samples };
        return Ok(GreenSeries { terms: vec![zero; k_max], ratio: 1.0, ratio_stderr: 0.0, contraction: 0.0 });
    }
    let b1 = d as f64 - alpha;
    let b2 = d as f64 + 1.0 - alpha;
    let mut z = vec![vec![0.0; d]; k_max];
    let mut grad = vec![0.0; d];
    let mut bz = vec![0.0; d];
    let mut terms = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut w = vec![0.0; samples];
        for wi in w.iter_mut() {
            // Proposal for z_1 .. z_{k-1}.
            let mut q = 1.0;
            let mut inside = true;
            for i in 0..k - 1 {
                let beta = if i == 0 { b1 } else { b2 };
                let (head, tail) = z.split_at_mut(i);
                let c: &[f64] = if i == 0 { x } else { &head[i - 1] };
                power_sample(rng, d, beta, c, &mut tail[0]);
                q *= power_density(d, beta, dist(&tail[0], c));
                if norm2(&tail[0]) >= 1.0 {
                    inside = false;
                    break;
                }
            }
            if !inside {
                continue;
            }
            // Last point: balance mixture of the forward leg and y.
            let (head, tail) = z.split_at_mut(k - 1);
            let (c_fwd, b_fwd) = if k == 1 { (x, b1) } else { (&head[k - 2][..], b2) };
            if rng.random::<bool>() {
                power_sample(rng, d, b_fwd, c_fwd, &mut tail[0]);
            } else {
                power_sample(rng, d, b2, y, &mut tail[0]);
            }
            if norm2(&tail[0]) >= 1.0 {
                continue;
            }
            let zk = &tail[0];
            let mix = 0.5 * power_density(d, b_fwd, dist(zk, c_fwd)) + 0.5 * power_density(d, b2, dist(zk, y));
            q *= mix;
            if !(q > 0.0) {
                continue;
            }
            // Integrand G(x, z_1) Π b(z_i)·∇G(z_i, z_{i+1}) · b(z_k)·∇G(z_k, y).
            let mut f = g.value_unchecked(x, &z[0]);
            for i in 0..k {
                let next: &[f64] = if i + 1 < k { &z[i + 1] } else { y };
                drift.eval(&z[i], &mut bz);
                g.gradient_into(&z[i], next, &mut grad);
                f *= dot(&bz, &grad);
                if f == 0.0 {
                    break;
                }
            }
            *wi = f / q / g0;
        }
        terms.push(MeanEstimate::from_samples(&w));
    }
    let ratio = 1.0 + terms.iter().map(|t| t.mean).sum::<f64>();
    let ratio_stderr = terms.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt();
    let contraction =
        terms.iter().enumerate().map(|(i, t)| (t.mean.abs() + t.stderr).powf(1.0 / (i + 1) as f64)).fold(0.0, f64::max);
    Ok(GreenSeries { terms, ratio, ratio_stderr, contraction })
}

/// Series orders used by the factor-two suite.
const SERIES_ORDERS: usize = 5;

struct RadiusResult {
    r: f64,
    series: Vec<GreenSeries>,
    pass: bool,
}

fn small_ball_sweep(
    ctx: &Ctx,
    drift: &DriftField,
    us: &[Vec<f64>],
    vs: &[Vec<f64>],
    tag: u64,
) -> Result<Vec<RadiusResult>> {
    let cfg = ctx.cfg;
    let center = drift.hotspots().into_iter().next().unwrap_or_else(|| vec![0.0; cfg.dim]);
    let mut radii = cfg.r_grid.clone();
    radii.sort_by(f64::total_cmp);
    let pairs = all_pairs(us.len(), vs.len());
    let fam = family(ctx, tag);
    let mut out = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        let zoomed = drift.zoomed(&center, r, cfg.alpha)?;
        let fr = fam.child(ri as u64);
        let series: Vec<Result<GreenSeries>> = par_map(pairs.len(), |p| {
            let (i, j) = pairs[p];
            let mut rng = fr.stream(p as u64);
            green_series_ratio(cfg.alpha, &zoomed, &us[i], &vs[j], SERIES_ORDERS, cfg.series_samples, &mut rng)
        });
        let series = series.into_iter().collect::<Result<Vec<_>>>()?;
        let pass = series.iter().all(|s| s.contraction < 1.0 && (0.5..=2.0).contains(&s.ratio));
        out.push(RadiusResult { r, series, pass });
    }
    Ok(out)
}

/// Largest radius such that it and every smaller grid radius pass.
fn r_star(results: &[RadiusResult]) -> f64 {
    results.iter().take_while(|r| r.pass).last().map_or(0.0, |r| r.r)
}

pub(super) fn small_ball_factor2(ctx: &Ctx, _gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let alpha = cfg.alpha;
    let mut r =
        ctx.report("small_ball_factor2", "factor-two comparison of drifted and free Green functions of small balls");
    let unit = Domain::unit_ball(cfg.dim);
    let mut rng = family(ctx, TAG_X).stream(0);
    let us = sample_points(&unit, cfg.n_x, &mut rng);
    let mut rng = family(ctx, TAG_Y).stream(0);
    let vs = sample_points(&unit, cfg.n_y, &mut rng);
    let results = small_ball_sweep(ctx, &ctx.drift, &us, &vs, TAG_SERIES)?;
    let rs = r_star(&results);
    r.stat("r_star", rs);
    let g = BallGreen::new(vec![0.0; cfg.dim], 1.0, alpha)?;
    let center = ctx.drift.hotspots().into_iter().next().unwrap_or_else(|| vec![0.0; cfg.dim]);
    let pairs = all_pairs(us.len(), vs.len());
    let mut cells = Vec::new();
    let mut worst_dev: f64 = 0.0;
    for res in &results {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        let mut q: f64 = 0.0;
        for (s, &(i, j)) in res.series.iter().zip(&pairs) {
            let gb = res.r.powf(alpha - cfg.dim as f64) * g.value_unchecked(&us[i], &vs[j]);
            let map = |u: &[f64]| -> Vec<f64> { center.iter().zip(u).map(|(c, v)| c + res.r * v).collect() };
            cells.push(Cell {
                t: None,
                x: map(&us[i]),
                y: map(&vs[j]),
                estimate: s.ratio * gb,
                stderr: s.ratio_stderr * gb,
                template: gb,
                ratio: s.ratio,
            });
            lo = lo.min(s.ratio);
            hi = hi.max(s.ratio);
            q = q.max(s.contraction);
            worst_dev = worst_dev.max((s.ratio - 1.0).abs());
        }
        r.stat(&format!("ratio_min_r_{}", res.r), lo);
        r.stat(&format!("ratio_max_r_{}", res.r), hi);
        r.stat(&format!("contraction_r_{}", res.r), q);
    }
    r.push(Check::new(
        "factor_two_below_r_star",
        Verdict::from_bool(rs > 0.0),
        &format!("G^b/G within [1/2, 2] with a contracting series for every radius up to {rs}"),
    ));
    if ctx.drift.is_zero() {
        r.push(Check::new(
            "zero_drift_identity",
            Verdict::from_bool(worst_dev <= 1e-10),
            &format!("largest |ratio - 1| = {worst_dev:e}"),
        ));
    } else {
        // Term envelope |Ĩ_k| <= c2 G (c2 M(2r))^k over the passing radii.
        let mut c2: f64 = 0.0;
        for res in results.iter().filter(|x| x.r <= rs) {
            let m = kato_modulus(&ctx.drift, alpha, 2.0 * res.r, 200)?.value;
            r.stat(&format!("modulus_2r_{}", res.r), m);
            if !(m > 0.0) {
                continue;
            }
            for s in &res.series {
                for (k, t) in s.terms.iter().enumerate() {
                    let v = t.mean.abs();
                    if v > 0.0 {
                        c2 = c2.max((v / m.powi(k as i32 + 1)).powf(1.0 / (k + 2) as f64));
                    }
                }
            }
        }
        r.stat("fitted_c2", c2);
        let doubled = ctx.drift.amplified(2.0);
        let rs2 = r_star(&small_ball_sweep(ctx, &doubled, &us, &vs, TAG_SERIES + 1)?);
        r.stat("r_star_doubled_amplitude", rs2);
        r.push(Check::new(
            "monotone_in_amplitude",
            Verdict::from_bool(rs2 <= rs),
            &format!("r* with doubled amplitude {rs2} against {rs}"),
        ));
    }
    r.cells = cells;
    r.finish();
    Ok(r)
}

/// Average of the ball Green function `G(x, ·)` over `B(y, ε)`, zero outside the ball.
fn ball_average(g: &BallGreen, x: &[f64], y: &[f64], eps: f64) -> f64 {
    let d = g.dim;
    let sphere = SphereRule::new(d, 64);
    let gl = GaussLegendre::cached(16);
    let mut z = vec![0.0; d];
    let mut s = 0.0;
    for (rho, w) in gl.mapped(0.0, eps) {
        for k in 0..sphere.len() {
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = y[i] + rho * sphere.dir(k)[i];
            }
            if dist(&z, &g.center) < g.radius && dist(&z, x) > 0.0 {
                s += w * sphere.weights[k] * rho.powi(d as i32 - 1) * g.value_unchecked(x, &z);
            }
        }
    }
    s / (sphere_area(d) / d as f64 * eps.powi(d as i32))
}

/// Zero-drift ball: occupation estimates against the averaged closed form.
fn closed_form_check(ctx: &Ctx, r: &mut SuiteReport) -> Result<()> {
    let cfg = ctx.cfg;
    let g = BallGreen::for_domain(&ctx.domain, cfg.alpha)?;
    let eps = ctx.domain.diameter() / 40.0;
    let nx = 4;
    let ny = cfg.closed_form_pairs.div_ceil(nx).max(1);
    let xs = points(ctx, TAG_EXACT, nx);
    let mut rng = family(ctx, TAG_EXACT + 1).stream(0);
    let mut ys = Vec::new();
    while ys.len() < ny {
        let y = sample_points(&ctx.domain, 2, &mut rng).swap_remove(ys.len() % 2);
        if xs.iter().all(|x| dist(x, &y) > 3.0 * eps) {
            ys.push(y);
        }
    }
    let process = ctx.process()?;
    let mut worst: f64 = 0.0;
    let mut n = 0;
    let fam = family(ctx, TAG_EXACT + 2);
    'outer: for (i, x) in xs.iter().enumerate() {
        let est = green_occupation(&process, &ctx.domain, x, &ys, Some(eps), None, &cfg.mc, &fam.child(i as u64))?;
        for (y, e) in ys.iter().zip(&est) {
            if n == cfg.closed_form_pairs {
                break 'outer;
            }
            let exact = ball_average(&g, x, y, eps);
            let sigma = e.estimate.stderr + e.estimate.bias_bound;
            worst = worst.max((e.estimate.value - exact).abs() / sigma);
            n += 1;
        }
    }
    r.stat("closed_form_max_z", worst);
    r.push(Check::new(
        "closed_form_agreement",
        Verdict::from_bool(worst <= 3.0),
        &format!(
            "occupation estimates at {n} pairs against the ε-averaged closed form: largest |z| {worst:.3} (need <= 3)"
        ),
    ));
    Ok(())
}

pub(super) fn green_two_sided(ctx: &Ctx, gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let mut r = ctx.report("green_two_sided", "two-sided bound of the killed drifted Green function by g_D");
    let xs = points(ctx, TAG_X, cfg.n_x);
    let ys = points(ctx, TAG_Y, cfg.n_y);
    let pairs = all_pairs(xs.len(), ys.len());
    let est = green_bridge(&ctx.process()?, &ctx.domain, &xs, &ys, &pairs, None, &cfg.mc, &family(ctx, TAG_MC))?;
    let mut set = CellSet::new();
    for (e, &(i, j)) in est.iter().zip(&pairs) {
        let tmpl = g_d(&ctx.domain, cfg.alpha, &xs[i], &ys[j])?;
        set.push(None, &xs[i], &ys[j], e, tmpl);
    }
    let c = set.two_sided_checks(&mut r, cfg.spread_cap);
    stability_check(&mut r, gate, c);

    if let DomainKind::TwoBalls { c1, r1, .. } = ctx.domain.kind() {
        let side = |p: &[f64]| dist(p, c1) < *r1;
        let cross: Vec<&Cell> = set.cells.iter().filter(|c| side(&c.x) != side(&c.y)).collect();
        let positive = cross.iter().filter(|c| c.estimate > 0.0 && c.ratio.is_finite()).count();
        r.stat("cross_component_pairs", cross.len() as f64);
        let v = if cross.is_empty() || positive < cross.len() { Verdict::Inconclusive } else { Verdict::Pass };
        r.push(Check::new(
            "cross_component_positive",
            v,
            &format!("{positive} of {} cross-component pairs have a positive finite ratio", cross.len()),
        ));
    }
    if ctx.drift.is_zero() && matches!(ctx.domain.kind(), DomainKind::Ball { .. }) {
        let g = BallGreen::for_domain(&ctx.domain, cfg.alpha)?;
        let ratios: Vec<f64> = pairs
            .iter()
            .filter(|&&(i, j)| dist(&xs[i], &ys[j]) > 0.0)
            .map(|&(i, j)| Ok(g.value(&xs[i], &ys[j])? / g_d(&ctx.domain, cfg.alpha, &xs[i], &ys[j])?))
            .collect::<Result<_>>()?;
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        r.stat("closed_form_spread", hi / lo);
        r.push(Check::new(
            "closed_form_envelope",
            Verdict::from_bool(hi / lo < 10.0),
            &format!("exact G_B / g_D spread {:.4} over the pair grid (need < 10)", hi / lo),
        ));
        closed_form_check(ctx, &mut r)?;
    }
    r.cells = set.cells;
    r.finish();
    Ok(r)
}
