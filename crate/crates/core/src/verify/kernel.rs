use crate::error::Result;
use crate::geometry::{f_d, Domain, DomainKind};
use crate::mc::{eigen_estimate, green_bridge, kernel_bridge, EigenEstimate, KernelEstimate, PathConfig, Process};
use crate::rng::StreamFamily;
use crate::stats::{pearson, spearman};

use super::{sample_points, spread, spread_check, Cell, Check, Ctx, SuiteReport, Verdict};

const SIGMAS: f64 = 3.0;

/// Stream tags, one per independent use inside a suite.
const TAG_X: u64 = 1;
const TAG_Y: u64 = 2;
const TAG_MC: u64 = 3;
const TAG_MC_ALT: u64 = 4;
const TAG_EIGEN: u64 = 5;

pub(super) fn points(ctx: &Ctx, tag: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = StreamFamily::new(ctx.cfg.mc.seed).child(tag).stream(0);
    sample_points(&ctx.domain, n, &mut rng)
}

pub(super) fn family(ctx: &Ctx, tag: u64) -> StreamFamily {
    StreamFamily::new(ctx.cfg.mc.seed).child(tag)
}

pub(super) fn all_pairs(nx: usize, ny: usize) -> Vec<(usize, usize)> {
    (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).collect()
}

/// Cells with a positive finite estimate and template; the rest are counted.
pub(super) struct CellSet {
    pub cells: Vec<Cell>,
    pub unresolved: usize,
    pub unreliable: usize,
}

impl CellSet {
    pub fn new() -> Self {
        Self { cells: Vec::new(), unresolved: 0, unreliable: 0 }
    }

    pub fn push(&mut self, t: Option<f64>, x: &[f64], y: &[f64], e: &KernelEstimate, template: f64) {
        let ratio = e.value / template;
        if e.unreliable {
            self.unreliable += 1;
        }
        if !(e.value > 0.0 && ratio.is_finite()) {
            self.unresolved += 1;
        }
        self.cells.push(Cell {
            t,
            x: x.to_vec(),
            y: y.to_vec(),
            estimate: e.value,
            stderr: e.stderr + e.bias_bound,
            template,
            ratio,
        });
    }

    fn resolved(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.estimate > 0.0 && c.ratio.is_finite())
    }

    /// Spread, Spearman and positivity checks shared by the two-sided suites.
    pub fn two_sided_checks(&self, r: &mut SuiteReport, cap: f64) -> Option<f64> {
        let ok: Vec<&Cell> = self.resolved().collect();
        r.stat("cells", self.cells.len() as f64);
        r.stat("cells_unresolved", self.unresolved as f64);
        r.stat("cells_unreliable", self.unreliable as f64);
        let positivity = if self.unresolved == 0 { Verdict::Pass } else { Verdict::Inconclusive };
        r.push(Check::new(
            "ratios_positive",
            positivity,
            &format!("{} of {} cells have a positive finite ratio", ok.len(), self.cells.len()),
        ));
        if ok.len() < 2 {
            r.push(Check::new("spread", Verdict::Inconclusive, "fewer than two resolved cells"));
            return None;
        }
        let ratios: Vec<f64> = ok.iter().map(|c| c.ratio).collect();
        let ses: Vec<f64> = ok.iter().map(|c| c.stderr / c.template).collect();
        let s = spread(&ratios, &ses, SIGMAS);
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        r.stat("ratio_min", s.min);
        r.stat("ratio_median", sorted[sorted.len() / 2]);
        r.stat("ratio_max", s.max);
        r.stat("spread", s.point);
        r.stat("spread_noise_adjusted", s.optimistic);
        r.push(spread_check("spread", s, cap));
        let le: Vec<f64> = ok.iter().map(|c| c.estimate.ln()).collect();
        let lt: Vec<f64> = ok.iter().map(|c| c.template.ln()).collect();
        let rho = spearman(&le, &lt);
        r.stat("spearman_log", rho);
        r.push(Check::new(
            "rank_correlation",
            Verdict::from_bool(rho >= 0.9),
            &format!("Spearman correlation of log estimate and log template {rho:.4} (need >= 0.9)"),
        ));
        // Smallest c with c^{-1} template <= estimate <= c template.
        let c1 = s.max.max(1.0 / s.min);
        r.stat("fitted_c", c1);
        Some(c1)
    }
}

/// Compare a fitted constant with the zero-drift one.
pub(super) fn stability_check(r: &mut SuiteReport, gate: Option<&SuiteReport>, c: Option<f64>) {
    let (Some(g), Some(c)) = (gate, c) else { return };
    let Some(c0) = g.statistics.get("fitted_c").copied() else { return };
    let q = c / c0;
    r.stat("fitted_c_vs_zero_drift", q);
    r.push(Check::new(
        "constant_stability",
        Verdict::from_bool((0.5..=2.0).contains(&q)),
        &format!("fitted constant {c:.4} against zero-drift {c0:.4}, ratio {q:.4} (need within 2x)"),
    ));
}

pub(super) fn heat_two_sided(ctx: &Ctx, gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let mut r = ctx.report("heat_two_sided", "two-sided small-time bound of the killed drifted heat kernel by f_D");
    let xs = points(ctx, TAG_X, cfg.n_x);
    let ys = points(ctx, TAG_Y, cfg.n_y);
    let ts = cfg.t_grid(cfg.n_t);
    let pairs = all_pairs(xs.len(), ys.len());
    let est = kernel_bridge(&ctx.process()?, &ctx.domain, &ts, &xs, &ys, &pairs, &cfg.mc, &family(ctx, TAG_MC))?;
    let mut set = CellSet::new();
    for (k, &t) in ts.iter().enumerate() {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let f = f_d(&ctx.domain, cfg.alpha, t, &xs[i], &ys[j])?;
            set.push(Some(t), &xs[i], &ys[j], &est[k][p], f);
        }
    }
    let c1 = set.two_sided_checks(&mut r, cfg.spread_cap);
    stability_check(&mut r, gate, c1);
    r.cells = set.cells;
    r.finish();
    Ok(r)
}

/// `λ` so that the domain has roughly unit size.
fn unit_time(domain: &Domain, alpha: f64) -> f64 {
    (0.5 * domain.diameter()).powf(alpha)
}

fn eigen_probes(domain: &Domain) -> Vec<Vec<f64>> {
    let c = match domain.kind() {
        DomainKind::Annulus { center, r_in, r_out } => {
            let mut c = center.clone();
            c[0] += 0.5 * (r_in + r_out);
            c
        }
        _ => {
            let (lo, hi) = domain.bounding_box();
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    };
    let h = 0.15 * domain.diameter();
    let mut probes = vec![c.clone()];
    let last = c.len() - 1;
    for (k, s) in [(0, h), (1.min(last), -h)] {
        let mut p = c.clone();
        p[k] += s;
        probes.push(p);
    }
    probes.retain(|p| domain.contains(p));
    probes
}

fn principal_rate(
    process: &Process,
    domain: &Domain,
    cfg: &PathConfig,
    family: &StreamFamily,
) -> Result<EigenEstimate> {
    let s = unit_time(domain, process.law().alpha());
    let grid: Vec<f64> = (1..=30).map(|k| 0.1 * k as f64 * s).collect();
    eigen_estimate(process, domain, &eigen_probes(domain), &grid, cfg, family)
}

/// A domain containing `domain`, for the monotonicity check.
fn enlarged(domain: &Domain) -> Option<Domain> {
    match domain.kind() {
        DomainKind::Ball { center, radius } => Domain::ball(center.clone(), radius * 1.2).ok(),
        DomainKind::Annulus { center, r_in, r_out } => Domain::annulus(center.clone(), r_in / 1.2, r_out * 1.2).ok(),
        _ => None,
    }
}

pub(super) fn large_time(ctx: &Ctx, gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let alpha = cfg.alpha;
    let mut r = ctx.report(
        "large_time",
        "large-time product form e^{-λ0 t} δ(x)^{α/2} δ(y)^{α/2} of the killed drifted heat kernel",
    );
    let process = ctx.process()?;
    let eig = principal_rate(&process, &ctx.domain, &cfg.mc, &family(ctx, TAG_EIGEN))?;
    r.stat("lambda0", eig.lambda);
    r.stat("lambda0_ci", eig.ci);
    let t1 = 3.0 / eig.lambda;
    let ts = [t1, 2.0 * t1];
    r.stat("t1", t1);
    let xs = points(ctx, TAG_X, cfg.n_x);
    let ys = points(ctx, TAG_Y, cfg.n_y);
    let pairs = all_pairs(xs.len(), ys.len());
    let est = kernel_bridge(&process, &ctx.domain, &ts, &xs, &ys, &pairs, &cfg.mc, &family(ctx, TAG_MC))?;
    let cap = if ctx.drift.is_zero() { cfg.large_time_cap_zero } else { cfg.large_time_cap };
    let h = alpha / 2.0;
    let mut spreads = Vec::new();
    let mut all = CellSet::new();
    for (k, &t) in ts.iter().enumerate() {
        let mut set = CellSet::new();
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let tmpl = (-eig.lambda * t).exp() * ctx.domain.delta(&xs[i]).powf(h) * ctx.domain.delta(&ys[j]).powf(h);
            set.push(Some(t), &xs[i], &ys[j], &est[k][p], tmpl);
            all.push(Some(t), &xs[i], &ys[j], &est[k][p], tmpl);
        }
        let ok: Vec<&Cell> = set.resolved().collect();
        let ratios: Vec<f64> = ok.iter().map(|c| c.ratio).collect();
        let ses: Vec<f64> = ok.iter().map(|c| c.stderr / c.template).collect();
        if ok.len() < 2 {
            spreads.push(None);
            continue;
        }
        let s = spread(&ratios, &ses, SIGMAS);
        let tag = if k == 0 { "t1" } else { "t2" };
        r.stat(&format!("spread_{tag}"), s.point);
        r.stat(&format!("spread_{tag}_noise_adjusted"), s.optimistic);
        r.stat(&format!("cells_unresolved_{tag}"), set.unresolved as f64);
        if k == 0 {
            let mut c = spread_check("spread_at_3_over_lambda0", s, cap);
            if set.unresolved > 0 && c.verdict == Verdict::Pass {
                c.verdict = Verdict::Inconclusive;
                c.detail.push_str(&format!("; {} cells unresolved", set.unresolved));
            }
            r.push(c);
            // x ↦ p(t, x, y) against δ(x)^{α/2}, over all pairs.
            let lp: Vec<f64> = ok.iter().map(|c| c.estimate.ln()).collect();
            let ld: Vec<f64> =
                ok.iter().map(|c| h * (ctx.domain.delta(&c.x).ln() + ctx.domain.delta(&c.y).ln())).collect();
            let rho = pearson(&lp, &ld);
            r.stat("log_correlation_with_delta", rho);
            r.push(Check::new(
                "boundary_decay",
                Verdict::from_bool(rho >= 0.9),
                &format!("correlation of log p and log δ(x)^{{α/2}}δ(y)^{{α/2}} {rho:.4} (need >= 0.9)"),
            ));
        }
        spreads.push(Some(s));
    }
    match (spreads[0], spreads[1]) {
        (Some(s1), Some(s2)) => {
            let v = if s2.optimistic <= s1.point { Verdict::Pass } else { Verdict::Fail };
            r.push(Check::new(
                "spread_decreases",
                v,
                &format!(
                    "spread at 2t {:.4} (noise-adjusted {:.4}) against spread at t {:.4}",
                    s2.point, s2.optimistic, s1.point
                ),
            ));
        }
        _ => r.push(Check::new("spread_decreases", Verdict::Inconclusive, "fewer than two resolved cells")),
    }

    if let Some(big) = enlarged(&ctx.domain) {
        let e = principal_rate(&process, &big, &cfg.mc, &family(ctx, TAG_EIGEN + 100))?;
        r.stat("lambda0_enlarged", e.lambda);
        let tol = eig.ci.hypot(e.ci);
        r.push(Check::new(
            "domain_monotonicity",
            Verdict::from_bool(e.lambda <= eig.lambda + tol),
            &format!("λ0 on the enlarged domain {:.4} against {:.4} (tolerance {tol:.4})", e.lambda, eig.lambda),
        ));
    }
    let lam: f64 = 2.0;
    let scaled = principal_rate(
        &process.scaled(lam)?,
        &ctx.domain.scaled(lam)?,
        &cfg.mc.scaled(lam, alpha),
        &family(ctx, TAG_EIGEN + 200),
    )?;
    let back = scaled.lambda * lam.powf(alpha);
    let tol = eig.ci.hypot(scaled.ci * lam.powf(alpha));
    r.stat("lambda0_scaled_by_2", scaled.lambda);
    r.push(Check::new(
        "rate_scaling",
        Verdict::from_bool((back - eig.lambda).abs() <= tol),
        &format!("2^α λ0(2D) = {back:.4} against λ0(D) = {:.4} (tolerance {tol:.4})", eig.lambda),
    ));
    let _ = gate;
    r.cells = all.cells;
    r.finish();
    Ok(r)
}

/// Both sides of the space-time scaling identity at one λ.
fn scaling_at(ctx: &Ctx, lam: f64, index: u64, r: &mut SuiteReport, cells: &mut Vec<Cell>) -> Result<()> {
    let cfg = ctx.cfg;
    let alpha = cfg.alpha;
    let d = cfg.dim as i32;
    let process = ctx.process()?;
    let xs = points(ctx, TAG_X + 10 * index, cfg.scaling_points);
    let ys = points(ctx, TAG_Y + 10 * index, cfg.scaling_points);
    let ts = cfg.t_grid(cfg.scaling_times);
    let pairs = all_pairs(xs.len(), ys.len());
    let up = |v: &Vec<Vec<f64>>| -> Vec<Vec<f64>> { v.iter().map(|p| p.iter().map(|c| c * lam).collect()).collect() };
    let (lxs, lys) = (up(&xs), up(&ys));
    let lts: Vec<f64> = ts.iter().map(|t| t * lam.powf(alpha)).collect();
    let lprocess = process.scaled(lam)?;
    let ldomain = ctx.domain.scaled(lam)?;
    let lcfg = cfg.mc.scaled(lam, alpha);
    let lhs = kernel_bridge(&lprocess, &ldomain, &lts, &lxs, &lys, &pairs, &lcfg, &family(ctx, TAG_MC + 10 * index))?;
    let rhs =
        kernel_bridge(&process, &ctx.domain, &ts, &xs, &ys, &pairs, &cfg.mc, &family(ctx, TAG_MC_ALT + 10 * index))?;
    let jac = lam.powi(-d);
    let mut worst: f64 = 0.0;
    let mut unresolved = 0;
    for (k, &t) in lts.iter().enumerate() {
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let a = &lhs[k][p];
            let b = &rhs[k][p];
            let sigma = a.stderr.hypot(jac * b.stderr);
            let z = (a.value - jac * b.value).abs() / sigma;
            if !z.is_finite() {
                unresolved += 1;
            } else {
                worst = worst.max(z);
            }
            cells.push(Cell {
                t: Some(t),
                x: lxs[i].clone(),
                y: lys[j].clone(),
                estimate: a.value,
                stderr: a.stderr,
                template: jac * b.value,
                ratio: a.value / (jac * b.value),
            });
        }
    }
    let name = format!("heat_identity_lambda_{lam}");
    r.stat(&format!("max_z_heat_lambda_{lam}"), worst);
    let v = if unresolved > 0 { Verdict::Inconclusive } else { Verdict::from_bool(worst <= SIGMAS) };
    r.push(Check::new(
        &name,
        v,
        &format!(
            "largest |LHS - RHS|/σ over {} cells is {worst:.3} (need <= {SIGMAS}); {unresolved} unresolved",
            lts.len() * pairs.len()
        ),
    ));

    // Green version on diagonal pairs.
    let gpairs: Vec<(usize, usize)> = (0..xs.len().min(ys.len())).map(|i| (i, i)).collect();
    let gl =
        green_bridge(&lprocess, &ldomain, &lxs, &lys, &gpairs, None, &lcfg, &family(ctx, TAG_MC + 10 * index + 5))?;
    let gr = green_bridge(
        &process,
        &ctx.domain,
        &xs,
        &ys,
        &gpairs,
        None,
        &cfg.mc,
        &family(ctx, TAG_MC_ALT + 10 * index + 5),
    )?;
    let gjac = lam.powf(alpha - cfg.dim as f64);
    let mut gworst: f64 = 0.0;
    for (a, b) in gl.iter().zip(&gr) {
        let sigma = (a.stderr + a.bias_bound).hypot(gjac * (b.stderr + b.bias_bound));
        gworst = gworst.max((a.value - gjac * b.value).abs() / sigma);
    }
    r.stat(&format!("max_z_green_lambda_{lam}"), gworst);
    r.push(Check::new(
        &format!("green_identity_lambda_{lam}"),
        Verdict::from_bool(gworst <= SIGMAS),
        &format!("largest |LHS - RHS|/σ over {} pairs is {gworst:.3} (need <= {SIGMAS})", gpairs.len()),
    ));
    Ok(())
}

pub(super) fn scaling(ctx: &Ctx, _gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let mut r =
        ctx.report("scaling", "space-time scaling identity of the killed drifted heat kernel and Green function");
    let mut cells = Vec::new();
    for (k, &lam) in ctx.cfg.lambdas.iter().enumerate() {
        scaling_at(ctx, lam, k as u64 + 1, &mut r, &mut cells)?;
    }
    r.cells = cells;
    r.finish();
    Ok(r)
}
