//! Drift fields `b: R^d -> R^d` and their textual descriptors.
//!
//! Grammar:
//!
//! ```text
//! zero
//! const:v1,v2,...
//! bump:c1,c2,...;amp;width          amp is a scalar (direction e_1) or a vector
//! invpow:gamma;R[;amp]              amp·|x|^{-gamma} 1_{|x| <= R}, scalar amp along e_1
//! sum:(term)+(term)[+(term)...]
//! ```

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Zero,
    Constant(Vec<f64>),
    Bump { center: Vec<f64>, amp: Vec<f64>, width: f64 },
    InvPow { gamma: f64, radius: f64, amp: Vec<f64> },
    Sum(Vec<Arc<DriftField>>),
}

/// A vector field on `R^d` with metadata used by the modulus probes.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    dim: usize,
    kind: Kind,
}

/// Gaussian bumps are treated as supported in this many widths around the
/// center; the field there is below `e^{-40}` of its peak.
const BUMP_REACH: f64 = 9.0;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn e1_scaled(dim: usize, a: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = a;
    v
}

impl DriftField {
    pub fn zero(dim: usize) -> Self {
        Self { dim, kind: Kind::Zero }
    }

    pub fn constant(v: Vec<f64>) -> Result<Self> {
        check_vec(&v, "constant drift")?;
        Ok(Self { dim: v.len(), kind: Kind::Constant(v) })
    }

    /// `amp · exp(-|x - center|² / (2 width²))`.
    pub fn bump(center: Vec<f64>, amp: Vec<f64>, width: f64) -> Result<Self> {
        check_vec(&center, "bump center")?;
        check_vec(&amp, "bump amplitude")?;
        if amp.len() != center.len() {
            return Err(Error::Descriptor("bump amplitude and center dimensions differ".into()));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Descriptor(format!("bump width must be positive, got {width}")));
        }
        Ok(Self { dim: center.len(), kind: Kind::Bump { center, amp, width } })
    }

    /// `amp · |x|^{-gamma} 1_{|x| <= radius}`; `b(0)` is set to zero.
    pub fn inverse_power(dim: usize, gamma: f64, radius: f64, amp: Vec<f64>) -> Result<Self> {
        check_vec(&amp, "inverse-power amplitude")?;
        if amp.len() != dim {
            return Err(Error::Descriptor("inverse-power amplitude dimension mismatch".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Descriptor(format!("inverse-power exponent must lie in [0,1), got {gamma}")));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Descriptor(format!("inverse-power radius must be positive, got {radius}")));
        }
        Ok(Self { dim, kind: Kind::InvPow { gamma, radius, amp } })
    }

    pub fn sum(parts: Vec<DriftField>) -> Result<Self> {
        let dim = parts.first().map(|p| p.dim).ok_or_else(|| Error::Descriptor("empty sum".into()))?;
        if parts.iter().any(|p| p.dim != dim) {
            return Err(Error::Descriptor("sum of fields with different dimensions".into()));
        }
        Ok(Self { dim, kind: Kind::Sum(parts.into_iter().map(Arc::new).collect()) })
    }

    /// Parse a descriptor for dimension `dim`.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let text = text.trim();
        let field = parse_term(text, dim)?;
        if field.dim != dim {
            return Err(Error::Descriptor(format!("descriptor `{text}` has dimension {}, expected {dim}", field.dim)));
        }
        Ok(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> String {
        self.to_string()
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            Kind::Zero => true,
            Kind::Constant(v) => v.iter().all(|&a| a == 0.0),
            Kind::Bump { amp, .. } | Kind::InvPow { amp, .. } => amp.iter().all(|&a| a == 0.0),
            Kind::Sum(p) => p.iter().all(|f| f.is_zero()),
        }
    }

    /// `out += scale · b(x)`.
    pub fn eval_add(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Zero => {}
            Kind::Constant(v) => {
                for (o, a) in out.iter_mut().zip(v) {
                    *o += scale * a;
                }
            }
            Kind::Bump { center, amp, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let f = scale * (-0.5 * r2 / (width * width)).exp();
                for (o, a) in out.iter_mut().zip(amp) {
                    *o += f * a;
                }
            }
            Kind::InvPow { gamma, radius, amp } => {
                let r = norm(x);
                if r > 0.0 && r <= *radius {
                    let f = scale * r.powf(-gamma);
                    for (o, a) in out.iter_mut().zip(amp) {
                        *o += f * a;
                    }
                }
            }
            Kind::Sum(parts) => {
                for p in parts {
                    p.eval_add(x, scale, out);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.eval_add(x, 1.0, out);
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(x, &mut out);
        out
    }

    /// Pointwise `div b(x)`, or `None` for fields whose distributional
    /// divergence carries a surface part (the cut-off inverse power).
    pub fn divergence(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Zero | Kind::Constant(_) => Some(0.0),
            Kind::Bump { center, amp, width } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let dot: f64 = x.iter().zip(center).zip(amp).map(|((a, c), m)| m * (a - c)).sum();
                Some(-dot / w2 * (-0.5 * r2 / w2).exp())
            }
            Kind::InvPow { amp, .. } => {
                if amp.iter().all(|&a| a == 0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Kind::Sum(parts) => parts.iter().map(|p| p.divergence(x)).sum(),
        }
    }

    pub fn has_divergence(&self) -> bool {
        self.divergence(&vec![0.0; self.dim]).is_some()
    }

    /// `|b(x)|`.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        match &self.kind {
            Kind::Zero => 0.0,
            Kind::Constant(v) => norm(v),
            Kind::Bump { center, amp, width } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                norm(amp) * (-0.5 * r2 / (width * width)).exp()
            }
            Kind::InvPow { gamma, radius, amp } => {
                let r = norm(x);
                if r > 0.0 && r <= *radius {
                    norm(amp) * r.powf(-gamma)
                } else {
                    0.0
                }
            }
            Kind::Sum(_) => norm(&self.eval_vec(x)),
        }
    }

    /// `sup |b|` when finite.
    pub fn magnitude_bound(&self) -> Option<f64> {
        match &self.kind {
            Kind::Zero => Some(0.0),
            Kind::Constant(v) => Some(norm(v)),
            Kind::Bump { amp, .. } => Some(norm(amp)),
            Kind::InvPow { amp, .. } => {
                if amp.iter().all(|&a| a == 0.0) {
                    Some(0.0)
                } else {
                    None
                }
            }
            Kind::Sum(parts) => parts.iter().map(|p| p.magnitude_bound()).sum(),
        }
    }

    /// A ball `(center, radius)` outside of which the field vanishes (or is
    /// negligible for Gaussian bumps). `None` means global support.
    pub fn support(&self) -> Option<(Vec<f64>, f64)> {
        match &self.kind {
            Kind::Zero => Some((vec![0.0; self.dim], 0.0)),
            Kind::Constant(v) => {
                if v.iter().all(|&a| a == 0.0) {
                    Some((vec![0.0; self.dim], 0.0))
                } else {
                    None
                }
            }
            Kind::Bump { center, width, .. } => Some((center.clone(), BUMP_REACH * width)),
            Kind::InvPow { radius, .. } => Some((vec![0.0; self.dim], *radius)),
            Kind::Sum(parts) => {
                let mut balls = Vec::new();
                for p in parts {
                    let s = p.support()?;
                    if s.1 > 0.0 {
                        balls.push(s);
                    }
                }
                if balls.is_empty() {
                    return Some((vec![0.0; self.dim], 0.0));
                }
                // Smallest ball around the first center covering all parts.
                let c = balls[0].0.clone();
                let r = balls
                    .iter()
                    .map(|(cc, rr)| norm(&cc.iter().zip(&c).map(|(a, b)| a - b).collect::<Vec<_>>()) + rr)
                    .fold(0.0, f64::max);
                Some((c, r))
            }
        }
    }

    /// Points where `|b|` peaks or is singular.
    pub fn hotspots(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            Kind::Zero | Kind::Constant(_) => vec![],
            Kind::Bump { center, .. } => vec![center.clone()],
            Kind::InvPow { .. } => vec![vec![0.0; self.dim]],
            Kind::Sum(parts) => parts.iter().flat_map(|p| p.hotspots()).collect(),
        }
    }

    /// Singular points of `|b|` (used to split quadratures).
    pub fn singularities(&self) -> Vec<Vec<f64>> {
        match &self.kind {
            Kind::InvPow { gamma, .. } if *gamma > 0.0 => vec![vec![0.0; self.dim]],
            Kind::Sum(parts) => parts.iter().flat_map(|p| p.singularities()).collect(),
            _ => vec![],
        }
    }

    /// `x ↦ λ^{1-α} b(x/λ)`.
    pub fn scaled(&self, lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {lambda}")));
        }
        let f = lambda.powf(1.0 - alpha);
        let kind = match &self.kind {
            Kind::Zero => Kind::Zero,
            Kind::Constant(v) => Kind::Constant(v.iter().map(|a| a * f).collect()),
            Kind::Bump { center, amp, width } => Kind::Bump {
                center: center.iter().map(|c| c * lambda).collect(),
                amp: amp.iter().map(|a| a * f).collect(),
                width: width * lambda,
            },
            Kind::InvPow { gamma, radius, amp } => {
                let g = f * lambda.powf(*gamma);
                Kind::InvPow { gamma: *gamma, radius: radius * lambda, amp: amp.iter().map(|a| a * g).collect() }
            }
            Kind::Sum(parts) => {
                Kind::Sum(parts.iter().map(|p| p.scaled(lambda, alpha).map(Arc::new)).collect::<Result<_>>()?)
            }
        };
        Ok(Self { dim: self.dim, kind })
    }

    /// Multiply the field by a constant.
    pub fn amplified(&self, factor: f64) -> Self {
        let kind = match &self.kind {
            Kind::Zero => Kind::Zero,
            Kind::Constant(v) => Kind::Constant(v.iter().map(|a| a * factor).collect()),
            Kind::Bump { center, amp, width } => {
                Kind::Bump { center: center.clone(), amp: amp.iter().map(|a| a * factor).collect(), width: *width }
            }
            Kind::InvPow { gamma, radius, amp } => {
                Kind::InvPow { gamma: *gamma, radius: *radius, amp: amp.iter().map(|a| a * factor).collect() }
            }
            Kind::Sum(parts) => Kind::Sum(parts.iter().map(|p| Arc::new(p.amplified(factor))).collect()),
        };
        Self { dim: self.dim, kind }
    }

    /// `x ↦ s^{α-1} b(c + s x)`: the field seen by the process on the ball
    /// `B(c, s)` after rescaling it to the unit ball.
    pub fn zoomed(&self, center: &[f64], s: f64, alpha: f64) -> Result<Self> {
        // b(c + s x) = translate then scale by 1/s.
        let shifted = self.translated(center)?;
        shifted.scaled(1.0 / s, alpha)
    }

    /// `x ↦ b(x + shift)`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        let kind = match &self.kind {
            Kind::Zero => Kind::Zero,
            Kind::Constant(v) => Kind::Constant(v.clone()),
            Kind::Bump { center, amp, width } => Kind::Bump {
                center: center.iter().zip(shift).map(|(c, s)| c - s).collect(),
                amp: amp.clone(),
                width: *width,
            },
            Kind::InvPow { .. } => {
                if shift.iter().all(|&s| s == 0.0) {
                    self.kind.clone()
                } else {
                    return Err(Error::InvalidParameter(
                        "inverse-power fields are centered at the origin and cannot be translated".into(),
                    ));
                }
            }
            Kind::Sum(parts) => {
                Kind::Sum(parts.iter().map(|p| p.translated(shift).map(Arc::new)).collect::<Result<_>>()?)
            }
        };
        Ok(Self { dim: self.dim, kind })
    }
}

fn check_vec(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Descriptor(format!("{what}: empty vector")));
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::Descriptor(format!("{what}: non-finite component")));
    }
    Ok(())
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Descriptor(format!("{what}: cannot parse `{}` as a number", p.trim())))
        })
        .collect()
}

fn parse_amp(s: &str, dim: usize) -> Result<Vec<f64>> {
    let v = parse_list(s, "amplitude")?;
    match v.len() {
        1 => Ok(e1_scaled(dim, v[0])),
        n if n == dim => Ok(v),
        n => Err(Error::Descriptor(format!("amplitude has {n} components, expected 1 or {dim}"))),
    }
}

fn parse_term(text: &str, dim: usize) -> Result<DriftField> {
    if text == "zero" {
        return Ok(DriftField::zero(dim));
    }
    let (head, body) =
        text.split_once(':').ok_or_else(|| Error::Descriptor(format!("`{text}`: expected `kind:parameters`")))?;
    match head.trim() {
        "const" => DriftField::constant(parse_list(body, "const")?),
        "bump" => {
            let parts: Vec<&str> = body.split(';').collect();
            if parts.len() != 3 {
                return Err(Error::Descriptor(format!("`{text}`: bump needs `center;amp;width`")));
            }
            let center = parse_list(parts[0], "bump center")?;
            let amp = parse_amp(parts[1], center.len())?;
            let width = parse_list(parts[2], "bump width")?;
            if width.len() != 1 {
                return Err(Error::Descriptor("bump width must be a scalar".into()));
            }
            DriftField::bump(center, amp, width[0])
        }
        "invpow" => {
            let parts: Vec<&str> = body.split(';').collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(Error::Descriptor(format!("`{text}`: invpow needs `gamma;R[;amp]`")));
            }
            let g = parse_list(parts[0], "invpow gamma")?;
            let r = parse_list(parts[1], "invpow radius")?;
            if g.len() != 1 || r.len() != 1 {
                return Err(Error::Descriptor("invpow gamma and radius must be scalars".into()));
            }
            let amp = if parts.len() == 3 { parse_amp(parts[2], dim)? } else { e1_scaled(dim, 1.0) };
            DriftField::inverse_power(dim, g[0], r[0], amp)
        }
        "sum" => {
            let parts = split_sum(body)?;
            let fields = parts.iter().map(|p| parse_term(p, dim)).collect::<Result<Vec<_>>>()?;
            DriftField::sum(fields)
        }
        other => {
            Err(Error::Descriptor(format!("unknown drift kind `{other}` (expected zero, const, bump, invpow or sum)")))
        }
    }
}

fn split_sum(body: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in body.trim().chars() {
        match ch {
            '(' => {
                if depth > 0 {
                    cur.push(ch);
                }
                depth += 1;
            }
            ')' => {
                depth =
                    depth.checked_sub(1).ok_or_else(|| Error::Descriptor("unbalanced parentheses in sum".into()))?;
                if depth == 0 {
                    out.push(std::mem::take(&mut cur));
                } else {
                    cur.push(ch);
                }
            }
            '+' if depth == 0 => {}
            c if depth == 0 && !c.is_whitespace() => {
                return Err(Error::Descriptor(format!("unexpected `{c}` in sum; wrap terms in parentheses")))
            }
            c => {
                if depth > 0 {
                    cur.push(c)
                }
            }
        }
    }
    if depth != 0 {
        return Err(Error::Descriptor("unbalanced parentheses in sum".into()));
    }
    if out.is_empty() {
        return Err(Error::Descriptor("sum needs at least one `(term)` term".into()));
    }
    Ok(out)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>().join(",")
}

fn fmt_amp(v: &[f64]) -> String {
    if v.iter().skip(1).all(|&a| a == 0.0) {
        format!("{:?}", v[0])
    } else {
        fmt_list(v)
    }
}

impl fmt::Display for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Zero => write!(f, "zero"),
            Kind::Constant(v) => write!(f, "const:{}", fmt_list(v)),
            Kind::Bump { center, amp, width } => {
                write!(f, "bump:{};{};{width:?}", fmt_list(center), fmt_amp(amp))
            }
            Kind::InvPow { gamma, radius, amp } => {
                if amp[0] == 1.0 && amp.iter().skip(1).all(|&a| a == 0.0) {
                    write!(f, "invpow:{gamma:?};{radius:?}")
                } else {
                    write!(f, "invpow:{gamma:?};{radius:?};{}", fmt_amp(amp))
                }
            }
            Kind::Sum(parts) => {
                write!(f, "sum:")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "+")?;
                    }
                    write!(f, "({p})")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_matches_finite_differences() {
        let b = DriftField::parse("sum:(const:0.1,0.2)+(bump:0.2,-0.1;0.7,-0.3;0.3)", 2).unwrap();
        let x = [0.35, 0.05];
        let h = 1e-6;
        let mut fd = 0.0;
        for i in 0..2 {
            let mut p = x;
            let mut m = x;
            p[i] += h;
            m[i] -= h;
            fd += (b.eval_vec(&p)[i] - b.eval_vec(&m)[i]) / (2.0 * h);
        }
        assert!((b.divergence(&x).unwrap() - fd).abs() < 1e-7);
        assert!(DriftField::parse("invpow:0.3;1", 2).unwrap().divergence(&x).is_none());
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in [
            "zero",
            "const:0.3,0.0",
            "bump:0.0,0.0;1.0;0.25",
            "bump:0.5,-0.5;0.3,0.4;0.2",
            "invpow:0.2;1.0",
            "invpow:0.2;1.0;2.0",
            "sum:(const:0.1,0.0)+(bump:0.0,0.0;1.0;0.3)",
        ] {
            let f = DriftField::parse(s, 2).unwrap();
            let again = DriftField::parse(&f.descriptor(), 2).unwrap();
            assert_eq!(f, again, "{s}");
        }
        assert_eq!(DriftField::parse("const:0.3,0", 2).unwrap().descriptor(), "const:0.3,0.0");
    }

    #[test]
    fn parse_errors_are_descriptive() {
        assert!(DriftField::parse("const:0.3", 2).is_err());
        assert!(DriftField::parse("wave:1", 2).is_err());
        assert!(DriftField::parse("bump:0,0;1", 2).is_err());
        assert!(DriftField::parse("sum:const:1,0", 2).is_err());
        assert!(DriftField::parse("invpow:1.5;1", 2).is_err());
    }

    #[test]
    fn evaluation_and_metadata() {
        let f = DriftField::parse("sum:(const:0.1,0)+(bump:1,0;2;0.5)", 2).unwrap();
        let v = f.eval_vec(&[1.0, 0.0]);
        assert!((v[0] - 2.1).abs() < 1e-15 && v[1] == 0.0);
        assert_eq!(f.magnitude_bound(), Some(0.1 + 2.0));
        assert!(f.support().is_none());
        assert_eq!(f.hotspots(), vec![vec![1.0, 0.0]]);
        let g = DriftField::parse("invpow:0.3;1", 2).unwrap();
        assert_eq!(g.eval_vec(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(g.eval_vec(&[2.0, 0.0]), vec![0.0, 0.0]);
        assert!(g.magnitude_bound().is_none());
    }

    #[test]
    fn scaling_matches_definition() {
        let alpha = 1.5;
        for s in ["const:0.3,0.1", "bump:0.2,0.1;1.0;0.3", "invpow:0.3;1.0", "sum:(const:0.1,0)+(bump:0,0;1;0.3)"] {
            let f = DriftField::parse(s, 2).unwrap();
            for &lam in &[0.5, 1.0, 2.0, 4.0] {
                let g = f.scaled(lam, alpha).unwrap();
                for x in [[0.1, 0.2], [0.7, -0.3], [1.5, 0.4]] {
                    let direct: Vec<f64> =
                        f.eval_vec(&[x[0] / lam, x[1] / lam]).iter().map(|v| v * lam.powf(1.0 - alpha)).collect();
                    let viag = g.eval_vec(&x);
                    for i in 0..2 {
                        assert!((direct[i] - viag[i]).abs() < 1e-12 * (1.0 + direct[i].abs()), "{s} {lam}");
                    }
                }
            }
            assert_eq!(f.scaled(1.0, alpha).unwrap(), f);
        }
    }

    #[test]
    fn zoom_matches_definition() {
        let f = DriftField::parse("bump:0.3,0.1;1.0;0.3", 2).unwrap();
        let c = [0.2, -0.1];
        let s = 0.25;
        let g = f.zoomed(&c, s, 1.5).unwrap();
        let x = [0.4, 0.3];
        let direct = f.eval_vec(&[c[0] + s * x[0], c[1] + s * x[1]])[0] * s.powf(0.5);
        assert!((g.eval_vec(&x)[0] - direct).abs() < 1e-14);
    }
}
