use crate::error::{Error, Result};
use crate::geometry::{three_g_ratio, Domain, DomainKind};
use crate::mc::{kernel_bridge, Ensemble, PathConfig, Process};
use crate::rng::{par_map, MeanEstimate, StreamFamily};

use super::kernel::family;
use super::{sample_points, Cell, Check, Ctx, SuiteReport, Verdict};

const TAG_TRIPLES: u64 = 51;
const TAG_BHP: u64 = 52;
const TAG_SPLIT: u64 = 53;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

/// Running sup of both 3G ratios over the first `n` triples and over all.
fn three_g_sups(domain: &Domain, alpha: f64, triples: &[[Vec<f64>; 3]], n: usize) -> ([f64; 2], [f64; 2]) {
    let vals: Vec<(f64, f64)> = par_map(triples.len(), |i| {
        let [x, z, y] = &triples[i];
        three_g_ratio(domain, alpha, x, z, y).unwrap_or((0.0, 0.0))
    });
    let sup = |v: &[(f64, f64)]| v.iter().fold([0.0f64; 2], |m, r| [m[0].max(r.0), m[1].max(r.1)]);
    (sup(&vals[..n]), sup(&vals))
}

pub(super) fn three_g(ctx: &Ctx, _gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let mut r = ctx.report("three_g", "3G inequalities for the template g_D");
    let n = cfg.n_triples;
    if n < 10_000 {
        return Err(Error::Config(format!("three_g needs at least 10000 triples, got {n}")));
    }
    let mut rng = family(ctx, TAG_TRIPLES).stream(0);
    let triples: Vec<[Vec<f64>; 3]> = (0..2 * n)
        .map(|i| {
            let mut p = sample_points(&ctx.domain, 3, &mut rng);
            // Points 0 and 2 are boundary-biased; rotate so every slot gets both kinds.
            p.rotate_left(i % 3);
            [p[0].clone(), p[1].clone(), p[2].clone()]
        })
        .collect();
    let (first, all) = three_g_sups(&ctx.domain, cfg.alpha, &triples, n);
    for (k, name) in ["first", "second"].iter().enumerate() {
        let growth = all[k] / first[k] - 1.0;
        r.stat(&format!("sup_{name}_n"), first[k]);
        r.stat(&format!("sup_{name}_2n"), all[k]);
        r.stat(&format!("growth_{name}"), growth);
        r.push(Check::new(
            &format!("{name}_inequality_stable"),
            Verdict::from_bool(all[k].is_finite() && first[k] > 0.0 && growth < 0.2),
            &format!(
                "sup over {n} triples {:.5}, over {} triples {:.5}, growth {:.2}%",
                first[k],
                2 * n,
                all[k],
                100.0 * growth
            ),
        ));
    }
    // Both sides are homogeneous of the same degree under x ↦ λx.
    let lam = 0.5;
    let small = ctx.domain.scaled(lam)?;
    let m = triples.len().min(1000);
    let mut worst: f64 = 0.0;
    for t in &triples[..m] {
        let s: Vec<Vec<f64>> = t.iter().map(|p| p.iter().map(|v| v * lam).collect()).collect();
        if let (Ok(a), Ok(b)) = (
            three_g_ratio(&ctx.domain, cfg.alpha, &t[0], &t[1], &t[2]),
            three_g_ratio(&small, cfg.alpha, &s[0], &s[1], &s[2]),
        ) {
            worst = worst.max((a.0 / b.0 - 1.0).abs()).max((a.1 / b.1 - 1.0).abs());
        }
    }
    r.stat("homogeneity_defect", worst);
    r.push(Check::new(
        "scale_invariance",
        Verdict::from_bool(worst < 1e-9),
        &format!("largest relative change of a ratio under x -> x/2 over {m} triples: {worst:e}"),
    ));
    r.finish();
    Ok(r)
}

/// Boundary points examined by the boundary Harnack suite.
fn bhp_points(domain: &Domain) -> Vec<Vec<f64>> {
    let unit = |k: usize, s: f64, c: &[f64], r: f64| {
        let mut p = c.to_vec();
        p[k] += s * r;
        p
    };
    match domain.kind() {
        DomainKind::Ball { center, radius } => {
            vec![unit(0, 1.0, center, *radius), unit(1.min(center.len() - 1), -1.0, center, *radius)]
        }
        DomainKind::Annulus { center, r_in, .. } => vec![unit(0, 1.0, center, *r_in)],
        DomainKind::TwoBalls { c1, r1, .. } => vec![unit(0, -1.0, c1, *r1)],
        DomainKind::LevelSet(_) => {
            let (lo, hi) = domain.bounding_box();
            let c: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
            vec![domain.project_to_boundary(&c).0]
        }
    }
}

/// Six points in `D ∩ B(z, q)` at depths from `0.02 q` to `0.6 q`.
fn bhp_probes(domain: &Domain, z: &[f64], q: f64) -> Vec<Vec<f64>> {
    let probe = domain.project_to_boundary(z);
    let n = probe.1;
    let d = z.len();
    let mut tangent = vec![0.0; d];
    if d >= 2 {
        tangent[0] = -n[1];
        tangent[1] = n[0];
    }
    [(0.02, 0.0), (0.1, 0.3), (0.4, -0.3), (0.05, -0.5), (0.2, 0.5), (0.6, 0.0)]
        .iter()
        .map(|&(a, b)| (0..d).map(|i| z[i] + q * (a * n[i] + b * tangent[i])).collect::<Vec<f64>>())
        .filter(|p| domain.contains(p))
        .collect()
}

struct BoundaryRatio {
    /// `max/min` of `u/δ^{α/2}` over the probes, per boundary-data family.
    stat: [f64; 2],
    /// Same with every `u` moved 3σ to shrink the ratio.
    optimistic: [f64; 2],
    values: Vec<[MeanEstimate; 2]>,
    probes: Vec<Vec<f64>>,
}

fn boundary_ratio(
    process: &Process,
    domain: &Domain,
    z: &[f64],
    radius: f64,
    cfg: &PathConfig,
    fam: &StreamFamily,
) -> Result<BoundaryRatio> {
    let alpha = process.law().alpha();
    let probes = bhp_probes(domain, z, radius / 4.0);
    let n = domain.project_to_boundary(z).1;
    let d = z.len();
    let mut tangent = vec![0.0; d];
    if d >= 2 {
        tangent[0] = -n[1];
        tangent[1] = n[0];
    }
    let horizon = 10.0 * domain.diameter().powf(alpha);
    let mut values = Vec::new();
    for (i, x) in probes.iter().enumerate() {
        let mut ens = Ensemble::new(process, Some(domain), x, cfg, &fam.child(i as u64))?;
        ens.advance_to(horizon)?;
        let fa =
            ens.mean_of(|w| if w.exit_time().is_some() && dist(w.position(), z) >= 2.0 * radius { 1.0 } else { 0.0 });
        let fb = ens.mean_of(|w| {
            let p = w.position();
            let side: f64 = p.iter().zip(z).zip(&tangent).map(|((a, b), t)| (a - b) * t).sum();
            if w.exit_time().is_some() && dist(p, z) >= 3.0 * radius && side >= 0.0 {
                1.0
            } else {
                0.0
            }
        });
        values.push([fa, fb]);
    }
    let mut stat = [f64::INFINITY; 2];
    let mut optimistic = [f64::INFINITY; 2];
    for k in 0..2 {
        let scaled: Vec<(f64, f64)> = probes
            .iter()
            .zip(&values)
            .map(|(x, v)| {
                let s = domain.delta(x).powf(alpha / 2.0);
                (v[k].mean / s, v[k].stderr / s)
            })
            .collect();
        let hi = scaled.iter().map(|v| v.0).fold(0.0, f64::max);
        let lo = scaled.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let hi_opt = scaled.iter().map(|v| (v.0 - 3.0 * v.1).max(0.0)).fold(0.0, f64::max);
        let lo_opt = scaled.iter().map(|v| v.0 + 3.0 * v.1).fold(f64::INFINITY, f64::min);
        if lo > 0.0 {
            stat[k] = hi / lo;
        }
        optimistic[k] = (hi_opt / lo_opt).max(1.0);
    }
    Ok(BoundaryRatio { stat, optimistic, values, probes })
}

/// `a ≤ 2b` as a verdict: fail only if it fails beyond noise.
fn within_two(a: f64, a_opt: f64, b: f64) -> Verdict {
    if a <= 2.0 * b {
        Verdict::Pass
    } else if a_opt <= 2.0 * b {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    }
}

pub(super) fn bhp(ctx: &Ctx, gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let mut r = ctx.report("bhp", "boundary Harnack principle with the δ^{α/2} boundary rate");
    let process = ctx.process()?;
    let fam = family(ctx, TAG_BHP);
    let mut cells = Vec::new();
    let mut fitted: f64 = 0.0;
    for (zi, z) in bhp_points(&ctx.domain).iter().enumerate() {
        let mut res = Vec::new();
        for (ri, rad) in [cfg.bhp_radius, 0.5 * cfg.bhp_radius].into_iter().enumerate() {
            res.push(boundary_ratio(&process, &ctx.domain, z, rad, &cfg.mc, &fam.child((2 * zi + ri) as u64))?);
        }
        let (full, half) = (&res[0], &res[1]);
        let tag = format!("point_{zi}");
        for k in 0..2 {
            r.stat(&format!("{tag}_family_{k}_r"), full.stat[k]);
            r.stat(&format!("{tag}_family_{k}_r_half"), half.stat[k]);
        }
        let finite = res.iter().all(|b| b.stat.iter().all(|s| s.is_finite()));
        r.push(Check::new(
            &format!("{tag}_bounded"),
            if finite { Verdict::Pass } else { Verdict::Inconclusive },
            "every harmonic function is positive at every probe",
        ));
        if !finite {
            continue;
        }
        let (a, b) = (full.stat[0], full.stat[1]);
        let (hi, lo) = if a >= b { (0, 1) } else { (1, 0) };
        r.push(Check::new(
            &format!("{tag}_families_agree"),
            within_two(full.stat[hi], full.optimistic[hi], full.stat[lo]),
            &format!("statistic {a:.4} for far data and {b:.4} for one-sided data (need within 2x)"),
        ));
        for k in 0..2 {
            r.push(Check::new(
                &format!("{tag}_family_{k}_radius_halving"),
                within_two(half.stat[k], half.optimistic[k], full.stat[k]),
                &format!("statistic {:.4} at r/2 against {:.4} at r (need at most 2x)", half.stat[k], full.stat[k]),
            ));
        }
        fitted = fitted.max(a.max(b)).max(half.stat[0].max(half.stat[1]));
        for (x, v) in full.probes.iter().zip(&full.values) {
            cells.push(Cell {
                t: None,
                x: x.clone(),
                y: z.clone(),
                estimate: v[0].mean,
                stderr: v[0].stderr,
                template: ctx.domain.delta(x).powf(cfg.alpha / 2.0),
                ratio: v[0].mean / ctx.domain.delta(x).powf(cfg.alpha / 2.0),
            });
        }
    }
    r.stat("fitted_c", fitted);
    if let Some(g) = gate {
        if let Some(c0) = g.statistics.get("fitted_c").copied() {
            let q = fitted / c0;
            r.stat("fitted_c_vs_zero_drift", q);
            r.push(Check::new(
                "constant_stability",
                Verdict::from_bool((0.5..=2.0).contains(&q)),
                &format!("fitted constant {fitted:.4} against zero-drift {c0:.4} (need within 2x)"),
            ));
        }
    }
    r.cells = cells;
    r.finish();
    Ok(r)
}

/// `U ⊃ U1 ∪ U3` with `U1 = B(c1, ρ1)`, `U3 = B(c3, ρ3)` at positive distance.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingGeometry {
    pub u: Domain,
    pub c1: Vec<f64>,
    pub rho1: f64,
    pub c3: Vec<f64>,
    pub rho3: f64,
}

impl SplittingGeometry {
    pub fn new(u: Domain, c1: Vec<f64>, rho1: f64, c3: Vec<f64>, rho3: f64) -> Result<Self> {
        let gap = dist(&c1, &c3) - rho1 - rho3;
        if !(gap > 0.0) {
            return Err(Error::InvalidParameter(format!("U1 and U3 must be at positive distance, got {gap}")));
        }
        for (c, r) in [(&c1, rho1), (&c3, rho3)] {
            if !(r > 0.0) || !u.contains(c) || u.delta(c) <= r {
                return Err(Error::InvalidParameter("U1 and U3 must be balls inside U".into()));
            }
        }
        // U2 = U \ (U1 ∪ U3) is non-empty: it contains the segment between the balls.
        Ok(Self { u, c1, rho1, c3, rho3 })
    }

    /// Two balls of radius `R/5` at `c ± R/2 e1` inside `B(c, R)`.
    pub fn for_ball(u: &Domain) -> Result<Self> {
        let DomainKind::Ball { center, radius } = u.kind() else {
            return Err(Error::Config("splitting diagnostics need a ball domain".into()));
        };
        let mut c1 = center.clone();
        let mut c3 = center.clone();
        c1[0] -= 0.5 * radius;
        c3[0] += 0.5 * radius;
        Self::new(u.clone(), c1, 0.2 * radius, c3, 0.2 * radius)
    }

    pub fn gap(&self) -> f64 {
        dist(&self.c1, &self.c3) - self.rho1 - self.rho3
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingResult {
    pub t: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
}

impl SplittingResult {
    pub fn slack(&self) -> f64 {
        self.rhs / self.lhs
    }

    pub fn holds(&self, sigmas: f64) -> bool {
        self.lhs <= self.rhs + sigmas * self.lhs_stderr.hypot(self.rhs_stderr)
    }
}

/// Both sides of the splitting bound
/// `p_U(t,x,y) ≤ P_x(X_{τ_U1} ∈ U2) sup_{s<t, z∈U2} p_U(s,z,y) + (t ∧ E_x τ_U1) J(dist(U1, U3))`
/// at `x = c1`, `y = c3`. The sup is taken over probe points near `U3` and a
/// time grid, so it is a lower estimate and the check is conservative.
pub fn splitting_check(
    process: &Process,
    geo: &SplittingGeometry,
    ts: &[f64],
    cfg: &PathConfig,
    fam: &StreamFamily,
) -> Result<Vec<SplittingResult>> {
    let d = process.dim();
    let u1 = Domain::ball(geo.c1.clone(), geo.rho1)?;
    let u3 = Domain::ball(geo.c3.clone(), geo.rho3)?;
    let t_max = ts.iter().copied().fold(0.0, f64::max);

    let mut ens = Ensemble::new(process, Some(&u1), &geo.c1, cfg, &fam.child(0))?;
    ens.advance_to(10.0 * (2.0 * geo.rho1).powf(process.law().alpha()))?;
    let into_u2 = ens.mean_of(|w| {
        let p = w.position();
        if w.exit_time().is_some() && geo.u.contains(p) && !u3.contains(p) {
            1.0
        } else {
            0.0
        }
    });
    let tau = ens.mean_of(|w| w.exit_time().unwrap_or(0.0));

    // Probe points in U2 around U3, and a time grid up to t_max.
    let mut zs = Vec::new();
    for s in [1.05, 1.5] {
        for k in 0..8 {
            let th = std::f64::consts::PI * k as f64 / 4.0;
            let mut z = geo.c3.clone();
            z[0] += s * geo.rho3 * th.cos();
            if d >= 2 {
                z[1] += s * geo.rho3 * th.sin();
            }
            if geo.u.contains(&z) && !u1.contains(&z) {
                zs.push(z);
            }
        }
    }
    let ss: Vec<f64> = (1..=12).map(|k| t_max * k as f64 / 12.0).collect();
    let y = vec![geo.c3.clone()];
    let pairs: Vec<(usize, usize)> = (0..zs.len()).map(|i| (i, 0)).collect();
    let sup_est = kernel_bridge(process, &geo.u, &ss, &zs, &y, &pairs, cfg, &fam.child(1))?;
    let lhs_est = kernel_bridge(process, &geo.u, ts, &[geo.c1.clone()], &y, &[(0, 0)], cfg, &fam.child(2))?;
    let jump = process.law().jump_kernel().intensity_radial(geo.gap());

    Ok(ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            // sup over s < t.
            let mut sup = (0.0, 0.0);
            for (si, &s) in ss.iter().enumerate() {
                if s > t {
                    break;
                }
                for e in &sup_est[si] {
                    if e.value > sup.0 {
                        sup = (e.value, e.stderr);
                    }
                }
            }
            let (tmin, tse) = if t < tau.mean { (t, 0.0) } else { (tau.mean, tau.stderr) };
            let rhs = into_u2.mean * sup.0 + tmin * jump;
            let rhs_stderr = (into_u2.stderr * sup.0).hypot(into_u2.mean * sup.1).hypot(tse * jump);
            SplittingResult { t, lhs: lhs_est[k][0].value, lhs_stderr: lhs_est[k][0].stderr, rhs, rhs_stderr }
        })
        .collect())
}

pub(super) fn splitting_diagnostics(ctx: &Ctx, _gate: Option<&SuiteReport>) -> Result<SuiteReport> {
    let cfg = ctx.cfg;
    let mut r =
        ctx.report("splitting_diagnostics", "splitting bound of the killed kernel between two separated subsets");
    let geo = SplittingGeometry::for_ball(&ctx.domain)?;
    let ts = cfg.t_grid(cfg.n_t);
    let res = splitting_check(&ctx.process()?, &geo, &ts, &cfg.mc, &family(ctx, TAG_SPLIT))?;
    let mut min_slack = f64::INFINITY;
    let mut cells = Vec::new();
    for s in &res {
        min_slack = min_slack.min(s.slack());
        r.push(Check::new(
            &format!("bound_at_t_{}", s.t),
            Verdict::from_bool(s.holds(3.0)),
            &format!("LHS {:.5e} ± {:.1e}, RHS {:.5e} ± {:.1e}", s.lhs, s.lhs_stderr, s.rhs, s.rhs_stderr),
        ));
        cells.push(Cell {
            t: Some(s.t),
            x: geo.c1.clone(),
            y: geo.c3.clone(),
            estimate: s.lhs,
            stderr: s.lhs_stderr,
            template: s.rhs,
            ratio: s.lhs / s.rhs,
        });
    }
    r.stat("min_slack", min_slack);
    r.cells = cells;
    r.finish();
    Ok(r)
}
