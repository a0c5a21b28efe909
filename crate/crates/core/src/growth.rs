//! Generalized exponential nonlinearities `f = e^g`.
//!
//! Everything is evaluated through `g = ln f`; `f` itself is never formed.
//! Derivatives up to order five come from truncated Taylor arithmetic, so
//! they are exact up to rounding for every family, including user-supplied
//! ones.

use crate::error::{Error, Result};
use crate::numerics::jet::Jet;
use crate::numerics::roots;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// User-defined `g`, written once as a function on jets.
#[derive(Clone)]
pub struct CustomG {
    pub name: String,
    pub g: Arc<dyn Fn(Jet) -> Jet + Send + Sync>,
}

impl fmt::Debug for CustomG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Custom({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum Family {
    /// `g(t) = t`.
    PureExp,
    /// `g(t) = m ln t + t^p + c t^pbar`.
    PowerExp { m: f64, p: f64, c: f64, pbar: f64 },
    /// `g(t) = exp_depth(t^m (ln t)^l)`, so `f = exp_{depth+1}(...)`.
    IterExp { depth: u32, m: f64, l: f64 },
    /// `g(t) = e^t + sum_i coeffs[i] t^i`.
    ExpPlusPoly { coeffs: Vec<f64> },
    /// Reference family with an explicit singular solution; `b >= 1`.
    ExplicitSingular { b: f64 },
    Custom(CustomG),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PureExp,
    PowerExp,
    IterExp,
    ExpPlusPoly,
    ExplicitSingular,
}

/// Serializable model description as it appears in configuration files.
/// Only the parameters of the named family may be present.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Option<FamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

impl ModelSpec {
    pub fn to_family(&self) -> Result<Family> {
        let name = self.family.ok_or_else(|| Error::domain("model.family is required"))?;
        let allowed: &[&str] = match name {
            FamilyName::PureExp => &[],
            FamilyName::PowerExp => &["m", "p", "c", "pbar"],
            FamilyName::IterExp => &["depth", "m", "l"],
            FamilyName::ExpPlusPoly => &["coeffs"],
            FamilyName::ExplicitSingular => &["b"],
        };
        let present = [
            ("m", self.m.is_some()),
            ("p", self.p.is_some()),
            ("c", self.c.is_some()),
            ("pbar", self.pbar.is_some()),
            ("depth", self.depth.is_some()),
            ("l", self.l.is_some()),
            ("coeffs", self.coeffs.is_some()),
            ("b", self.b.is_some()),
        ];
        for (key, set) in present {
            if set && !allowed.contains(&key) {
                return Err(Error::domain(format!("parameter `{key}` does not apply to family {name:?}")));
            }
        }
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::domain(format!("family {name:?} requires parameter `{key}`")))
        };
        Ok(match name {
            FamilyName::PureExp => Family::PureExp,
            FamilyName::PowerExp => Family::PowerExp {
                m: self.m.unwrap_or(0.0),
                p: need(self.p, "p")?,
                c: self.c.unwrap_or(0.0),
                pbar: self.pbar.unwrap_or(0.0),
            },
            FamilyName::IterExp => Family::IterExp {
                depth: self
                    .depth
                    .ok_or_else(|| Error::domain("family IterExp requires parameter `depth`"))?,
                m: self.m.unwrap_or(1.0),
                l: self.l.unwrap_or(0.0),
            },
            FamilyName::ExpPlusPoly => Family::ExpPlusPoly { coeffs: self.coeffs.clone().unwrap_or_default() },
            FamilyName::ExplicitSingular => Family::ExplicitSingular { b: need(self.b, "b")? },
        })
    }

    fn from_family(f: &Family) -> Option<ModelSpec> {
        let mut s = ModelSpec::default();
        match f {
            Family::PureExp => s.family = Some(FamilyName::PureExp),
            Family::PowerExp { m, p, c, pbar } => {
                s.family = Some(FamilyName::PowerExp);
                s.m = Some(*m);
                s.p = Some(*p);
                s.c = Some(*c);
                s.pbar = Some(*pbar);
            }
            Family::IterExp { depth, m, l } => {
                s.family = Some(FamilyName::IterExp);
                s.depth = Some(*depth);
                s.m = Some(*m);
                s.l = Some(*l);
            }
            Family::ExpPlusPoly { coeffs } => {
                s.family = Some(FamilyName::ExpPlusPoly);
                s.coeffs = Some(coeffs.clone());
            }
            Family::ExplicitSingular { b } => {
                s.family = Some(FamilyName::ExplicitSingular);
                s.b = Some(*b);
            }
            Family::Custom(_) => return None,
        }
        Some(s)
    }
}

#[derive(Clone, Debug)]
pub struct GrowthModel {
    family: Family,
    t0: f64,
    weight: f64,
}

/// Result of classifying the growth pair `(q, p)`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GrowthClass {
    pub in_class: bool,
    #[serde(with = "crate::ext_f64")]
    pub q: f64,
    #[serde(with = "crate::ext_f64")]
    pub p: f64,
    #[serde(with = "crate::ext_f64")]
    pub conjugacy_residual: f64,
    pub closed_form: bool,
    /// Extrapolated numeric estimates, kept alongside any closed form.
    #[serde(with = "crate::ext_f64")]
    pub numeric_q: f64,
    #[serde(with = "crate::ext_f64")]
    pub numeric_p: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostic: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct H2Report {
    pub pass: bool,
    pub infimum: f64,
    pub argmin: f64,
}

fn ln_pos(t: f64) -> f64 {
    if t > 0.0 {
        t.ln()
    } else if t == 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::NAN
    }
}

impl Family {
    fn validate(&self) -> Result<()> {
        match self {
            Family::PowerExp { p, pbar, .. } => {
                if !(*p > 1.0) {
                    return Err(Error::domain(format!("power_exp requires p > 1, got {p}")));
                }
                if !(pbar < p) {
                    return Err(Error::domain(format!("power_exp requires pbar < p, got pbar = {pbar}")));
                }
            }
            Family::IterExp { depth, m, .. } => {
                if *depth < 1 || !(*m > 0.0) {
                    return Err(Error::domain(format!(
                        "iter_exp requires depth >= 1 and m > 0, got depth = {depth}, m = {m}"
                    )));
                }
            }
            Family::ExplicitSingular { b } => {
                if !(*b >= 1.0) {
                    return Err(Error::domain(format!("explicit_singular requires b >= 1, got {b}")));
                }
            }
            Family::ExpPlusPoly { coeffs } => {
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(Error::domain("exp_plus_poly coefficients must be finite"));
                }
            }
            Family::PureExp | Family::Custom(_) => {}
        }
        Ok(())
    }

    fn jet(&self, t: f64) -> Jet {
        let x = Jet::variable(t);
        match self {
            Family::PureExp => x,
            Family::PowerExp { m, p, c, pbar } => {
                let mut g = x.powf(*p);
                if *m != 0.0 {
                    g = g + x.ln().scale(*m);
                }
                if *c != 0.0 {
                    g = g + x.powf(*pbar).scale(*c);
                }
                g
            }
            Family::IterExp { depth, m, l } => {
                let mut g = x.powf(*m);
                if *l != 0.0 {
                    g = g * x.ln().powf(*l);
                }
                for _ in 0..*depth {
                    g = g.exp();
                }
                g
            }
            Family::ExpPlusPoly { coeffs } => {
                let mut poly = Jet::constant(0.0);
                for c in coeffs.iter().rev() {
                    poly = poly * x + *c;
                }
                x.exp() + poly
            }
            Family::ExplicitSingular { b } => {
                if *b == 1.0 {
                    x.exp() - x.scale(2.0) + 4f64.ln()
                } else {
                    let bp = b / (b - 1.0);
                    x.powf(bp) + x.ln().scale(1.0 - 2.0 * bp) + (4.0 / (b * bp)).ln()
                }
            }
            Family::Custom(c) => (c.g)(x),
        }
    }

    fn g_d1(&self, t: f64) -> (f64, f64) {
        match self {
            Family::PureExp => (t, 1.0),
            Family::PowerExp { m, p, c, pbar } => {
                let mut g = t.powf(*p);
                let mut d = p * t.powf(p - 1.0);
                if *m != 0.0 {
                    g += m * ln_pos(t);
                    d += m / t;
                }
                if *c != 0.0 {
                    g += c * t.powf(*pbar);
                    d += c * pbar * t.powf(pbar - 1.0);
                }
                (g, d)
            }
            Family::IterExp { depth, m, l } => {
                let (mut x, mut dx) = if *l == 0.0 {
                    (t.powf(*m), m * t.powf(m - 1.0))
                } else {
                    let lt = ln_pos(t);
                    let tm = t.powf(*m);
                    (tm * lt.powf(*l), tm / t * (m * lt.powf(*l) + l * lt.powf(l - 1.0)))
                };
                for _ in 0..*depth {
                    let e = x.exp();
                    dx *= e;
                    x = e;
                }
                (x, dx)
            }
            Family::ExpPlusPoly { coeffs } => {
                let (mut pv, mut pd) = (0.0, 0.0);
                for c in coeffs.iter().rev() {
                    pd = pd * t + pv;
                    pv = pv * t + c;
                }
                let e = t.exp();
                (e + pv, e + pd)
            }
            Family::ExplicitSingular { b } => {
                if *b == 1.0 {
                    let e = t.exp();
                    (4f64.ln() + e - 2.0 * t, e - 2.0)
                } else {
                    let bp = b / (b - 1.0);
                    let tb = t.powf(bp);
                    (
                        (4.0 / (b * bp)).ln() + (1.0 - 2.0 * bp) * ln_pos(t) + tb,
                        (1.0 - 2.0 * bp) / t + bp * tb / t,
                    )
                }
            }
            Family::Custom(_) => {
                let j = self.jet(t);
                (j.c[0], j.c[1])
            }
        }
    }

    /// `g(t + h) - g(t)` without cancellation for small `h`.
    fn increment(&self, t: f64, h: f64) -> f64 {
        let rel = |e: f64| -> f64 { e * (h / t).ln_1p() };
        match self {
            Family::PureExp => h,
            Family::PowerExp { m, p, c, pbar } => {
                let mut d = t.powf(*p) * rel(*p).exp_m1();
                if *m != 0.0 {
                    d += m * (h / t).ln_1p();
                }
                if *c != 0.0 {
                    d += c * t.powf(*pbar) * rel(*pbar).exp_m1();
                }
                d
            }
            Family::IterExp { depth, m, l } => {
                let (mut x, mut dx) = if *l == 0.0 {
                    let x = t.powf(*m);
                    (x, x * rel(*m).exp_m1())
                } else {
                    let lt = t.ln();
                    let x = t.powf(*m) * lt.powf(*l);
                    let dl = ((h / t).ln_1p() / lt).ln_1p();
                    (x, x * (rel(*m) + l * dl).exp_m1())
                };
                for _ in 0..*depth {
                    let e = x.exp();
                    dx = e * dx.exp_m1();
                    x = e;
                }
                dx
            }
            Family::ExpPlusPoly { coeffs } => {
                let poly = |s: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c);
                t.exp() * h.exp_m1() + (poly(t + h) - poly(t))
            }
            Family::ExplicitSingular { b } => {
                if *b == 1.0 {
                    t.exp() * h.exp_m1() - 2.0 * h
                } else {
                    let bp = b / (b - 1.0);
                    t.powf(bp) * rel(bp).exp_m1() + (1.0 - 2.0 * bp) * (h / t).ln_1p()
                }
            }
            Family::Custom(_) => {
                let (a, _) = self.g_d1(t + h);
                let (b, _) = self.g_d1(t);
                a - b
            }
        }
    }

    /// Closed-form `(q, p)` where the family admits one.
    fn closed_form_class(&self) -> Option<(f64, f64)> {
        match self {
            Family::PowerExp { p, .. } => Some((p / (p - 1.0), *p)),
            Family::IterExp { .. } | Family::ExpPlusPoly { .. } => Some((1.0, f64::INFINITY)),
            Family::ExplicitSingular { b } => {
                if *b == 1.0 {
                    Some((1.0, f64::INFINITY))
                } else {
                    Some((*b, b / (b - 1.0)))
                }
            }
            Family::PureExp | Family::Custom(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Family::PureExp => "pure_exp",
            Family::PowerExp { .. } => "power_exp",
            Family::IterExp { .. } => "iter_exp",
            Family::ExpPlusPoly { .. } => "exp_plus_poly",
            Family::ExplicitSingular { .. } => "explicit_singular",
            Family::Custom(c) => &c.name,
        }
    }
}

impl GrowthModel {
    /// Builds a model with `t0` located by scan.
    pub fn new(family: Family) -> Result<Self> {
        family.validate()?;
        // Without a convex range, t0 = 0 and classification reports the defect.
        let t0 = match family {
            Family::PureExp => 0.0,
            _ => scan_t0(&family).unwrap_or(0.0),
        };
        Ok(GrowthModel { family, t0, weight: 1.0 })
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let mut m = GrowthModel::new(spec.to_family()?)?;
        if let Some(t0) = spec.t0 {
            m = m.with_t0(t0)?;
        }
        if let Some(w) = spec.weight {
            m = m.with_weight(w)?;
        }
        Ok(m)
    }

    /// Resolved specification; `None` for custom models.
    pub fn spec(&self) -> Option<ModelSpec> {
        let mut s = ModelSpec::from_family(&self.family)?;
        s.t0 = Some(self.t0);
        s.weight = Some(self.weight);
        Some(s)
    }

    pub fn pure_exp() -> Self {
        GrowthModel::new(Family::PureExp).expect("pure exponential is valid")
    }

    pub fn power_exp(m: f64, p: f64, c: f64, pbar: f64) -> Result<Self> {
        GrowthModel::new(Family::PowerExp { m, p, c, pbar })
    }

    pub fn iter_exp(depth: u32, m: f64, l: f64) -> Result<Self> {
        GrowthModel::new(Family::IterExp { depth, m, l })
    }

    pub fn exp_plus_poly(coeffs: Vec<f64>) -> Result<Self> {
        GrowthModel::new(Family::ExpPlusPoly { coeffs })
    }

    pub fn explicit_singular(b: f64) -> Result<Self> {
        GrowthModel::new(Family::ExplicitSingular { b })
    }

    pub fn custom<F>(name: &str, g: F) -> Result<Self>
    where
        F: Fn(Jet) -> Jet + Send + Sync + 'static,
    {
        GrowthModel::new(Family::Custom(CustomG { name: name.to_string(), g: Arc::new(g) }))
    }

    /// Overrides the convexity threshold.
    pub fn with_t0(mut self, t0: f64) -> Result<Self> {
        if !t0.is_finite() || t0 < 0.0 {
            return Err(Error::domain(format!("t0 must be finite and >= 0, got {t0}")));
        }
        self.t0 = t0;
        Ok(self)
    }

    /// Constant radial weight `h`.
    pub fn with_weight(mut self, w: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::domain(format!("weight must be positive and finite, got {w}")));
        }
        self.weight = w;
        Ok(self)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    fn check(&self, t: f64) -> Result<()> {
        if t.is_nan() || t < self.t0 {
            return Err(Error::domain(format!("t = {t} lies below t0 = {}", self.t0)));
        }
        Ok(())
    }

    /// `g(t) = ln f(t)` for `t >= t0`.
    pub fn eval_g(&self, t: f64) -> Result<f64> {
        self.check(t)?;
        Ok(self.g(t))
    }

    /// Derivative of `g` of the given order (0 through 5) for `t >= t0`.
    pub fn eval_g_deriv(&self, t: f64, order: usize) -> Result<f64> {
        self.check(t)?;
        if order > crate::numerics::jet::ORDER {
            return Err(Error::domain(format!("derivative order {order} exceeds 5")));
        }
        Ok(self.jet(t).derivative(order))
    }

    /// `g` without the `t >= t0` check.
    pub fn g(&self, t: f64) -> f64 {
        self.family.g_d1(t).0
    }

    /// `(g, g')` without the `t >= t0` check.
    pub fn g_d1(&self, t: f64) -> (f64, f64) {
        self.family.g_d1(t)
    }

    /// Taylor jet of `g` at `t`.
    pub fn jet(&self, t: f64) -> Jet {
        self.family.jet(t)
    }

    /// `[g, g', ..., g^(5)]` at `t`.
    pub fn derivatives(&self, t: f64) -> [f64; 6] {
        self.jet(t).derivatives()
    }

    /// `g(t + h) - g(t)` computed without cancellation.
    pub fn increment(&self, t: f64, h: f64) -> f64 {
        self.family.increment(t, h)
    }

    /// `ln f'(t) = g + ln g'`.
    pub fn ln_fprime(&self, t: f64) -> f64 {
        let (g, d) = self.g_d1(t);
        g + d.ln()
    }

    /// Solves `g(t) = y` on `[t0, inf)`.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        let lo = self.t0;
        let glo = self.g(lo);
        if !(y >= glo) {
            return Err(Error::domain(format!("g^-1({y}) undefined: g(t0) = {glo}")));
        }
        let mut hi = (2.0 * lo).max(lo + 1.0);
        let mut n = 0;
        while self.g(hi) < y {
            hi *= 2.0;
            n += 1;
            if n > 2000 || !hi.is_finite() {
                return Err(Error::domain(format!("g^-1({y}): no upper bracket")));
            }
        }
        // Overflow past the root is clamped so the bracket stays usable.
        let r = roots::brent(|t| (self.g(t) - y).min(f64::MAX), lo, hi, 0.0)?;
        Ok(r.x)
    }

    /// Probe schedule on which `g` spans `[1e2, 1e60]` geometrically.
    pub fn default_probe(&self) -> Result<Vec<f64>> {
        let lo = self.g(self.t0).max(1e2).ln();
        let hi = 1e60f64.ln();
        let n = 40;
        (0..n)
            .map(|i| self.g_inverse((lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()))
            .collect()
    }

    /// Classifies the growth pair `(q, p)`.
    pub fn classify(&self, probe: &[f64]) -> Result<GrowthClass> {
        if probe.len() < 8 {
            return Err(Error::domain("probe needs at least 8 points"));
        }
        if probe.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("probe must be strictly increasing"));
        }
        if probe[0] < self.t0 {
            return Err(Error::domain(format!("probe starts below t0 = {}", self.t0)));
        }
        let g_first = self.g(probe[0]);
        let g_last = self.g(*probe.last().unwrap());
        if !(g_last >= 1e3 * g_first.abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::domain("probe must span at least three decades of g"));
        }
        let mut diagnostic = None;
        let mut qs = Vec::new();
        let mut inv_ps = Vec::new();
        let mut gs = Vec::new();
        for &t in probe {
            let d = self.derivatives(t);
            if !(d[2] > 0.0) {
                diagnostic = Some(format!("g'' = {:e} <= 0 at t = {t}", d[2]));
                break;
            }
            qs.push(d[1] * d[1] / (d[0] * d[2]));
            inv_ps.push(d[0] / (t * d[1]));
            gs.push(d[0]);
        }
        let (numeric_q, numeric_p) = if diagnostic.is_none() {
            let tail = gs.len() / 2;
            let q = tail_limit(&gs[tail..], &qs[tail..]);
            let ip = tail_limit(&gs[tail..], &inv_ps[tail..]);
            (q, if ip.abs() < 1e-3 { f64::INFINITY } else { 1.0 / ip })
        } else {
            (f64::NAN, f64::NAN)
        };
        let (q, p, closed) = match self.family.closed_form_class() {
            Some((q, p)) => (q, p, true),
            None => (numeric_q, numeric_p, false),
        };
        let residual = (recip(p) + 1.0 / q - 1.0).abs();
        let tol = 1e-3;
        let in_class = diagnostic.is_none() && q >= 1.0 - tol && q < 2.0;
        if diagnostic.is_none() && !in_class {
            diagnostic = Some(format!("estimated q = {q} outside [1, 2)"));
        }
        Ok(GrowthClass {
            in_class,
            q,
            p,
            conjugacy_residual: residual,
            closed_form: closed,
            numeric_q,
            numeric_p,
            diagnostic,
        })
    }

    /// Classification on the default probe; returns the not-in-class flag
    /// when no probe can be built.
    pub fn classify_default(&self) -> Result<GrowthClass> {
        match self.default_probe() {
            Ok(probe) => self.classify(&probe),
            Err(e) => {
                // No convex tail reachable.
                let t = [1.0, 2.0, 3.0];
                let bad = t.iter().map(|&t| self.derivatives(t)[2]).find(|v| !(*v > 0.0));
                Ok(GrowthClass {
                    in_class: false,
                    q: f64::NAN,
                    p: f64::NAN,
                    conjugacy_residual: f64::NAN,
                    closed_form: false,
                    numeric_q: f64::NAN,
                    numeric_p: f64::NAN,
                    diagnostic: Some(match bad {
                        Some(v) => format!("g'' = {v:e} <= 0"),
                        None => e.to_string(),
                    }),
                })
            }
        }
    }

    /// Numeric infimum of `f(t)/t` over the grid.
    pub fn check_h2(&self, grid: &[f64]) -> H2Report {
        let mut best = (f64::INFINITY, f64::NAN, 0usize);
        for (i, &t) in grid.iter().enumerate() {
            let v = self.g(t) - t.ln();
            if v.is_nan() {
                return H2Report { pass: false, infimum: f64::NAN, argmin: t };
            }
            if v < best.0 {
                best = (v, t, i);
            }
        }
        let (lv, t, i) = best;
        // A minimum at the left end that keeps falling is a limit of 0.
        if i == 0 && grid.len() > 1 {
            let v1 = self.g(grid[1]) - grid[1].ln();
            let slope = (v1 - lv) / (grid[1] / grid[0]).ln();
            if slope > 1e-3 {
                return H2Report { pass: false, infimum: 0.0, argmin: 0.0 };
            }
        }
        let inf = lv.exp();
        H2Report { pass: inf > 0.0, infimum: inf, argmin: t }
    }

    /// Default grid for [`check_h2`]: log-spaced near 0, linear beyond 1.
    pub fn default_h2_grid() -> Vec<f64> {
        let mut g: Vec<f64> = (0..=160).map(|i| 10f64.powf(-8.0 + i as f64 * 0.05)).collect();
        g.extend((1..=200).map(|i| 1.0 + i as f64 * 0.05));
        g
    }

    /// Whether `t g'/g` is nondecreasing on the grid (checked numerically).
    pub fn tgg_nondecreasing(&self, grid: &[f64]) -> bool {
        let vals: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let (g, d) = self.g_d1(t);
                t * d / g
            })
            .collect();
        vals.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
    }

    /// Derivative cascade `g_1 = 1/g'`, `g_{i+1} = g_i'/g'` for `i = 1..5`.
    pub fn cascade(&self, t: f64) -> [f64; 5] {
        let gp = self.jet(t).differentiate();
        let mut gi = gp.recip();
        let mut out = [0.0; 5];
        out[0] = gi.value();
        for slot in out.iter_mut().skip(1) {
            gi = gi.differentiate() / gp;
            *slot = gi.value();
        }
        out
    }
}

fn recip(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Least-squares fit of `y = a + b/g + c/ln g + d/ln^2 g`; returns `a`.
fn tail_limit(g: &[f64], y: &[f64]) -> f64 {
    const K: usize = 4;
    let mut ata = [[0.0; K]; K];
    let mut aty = [0.0; K];
    for (&g, &yv) in g.iter().zip(y) {
        let l = g.ln();
        let r = [1.0, 1.0 / g, 1.0 / l, 1.0 / (l * l)];
        for i in 0..K {
            aty[i] += r[i] * yv;
            for j in 0..K {
                ata[i][j] += r[i] * r[j];
            }
        }
    }
    solve(ata, aty).map(|x| x[0]).unwrap_or(*y.last().unwrap())
}

fn solve<const K: usize>(mut a: [[f64; K]; K], mut b: [f64; K]) -> Option<[f64; K]> {
    for col in 0..K {
        let piv = (col..K).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..K {
            let f = a[row][col] / a[col][col];
            for k in col..K {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; K];
    for i in (0..K).rev() {
        let mut s = b[i];
        for k in i + 1..K {
            s -= a[i][k] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Smallest `t` past which `g' > 0` and `g'' > 0` on the scan grid.
fn scan_t0(family: &Family) -> Result<f64> {
    let ok = |t: f64| {
        let d = family.jet(t).derivatives();
        d[0].is_finite() && d[1] > 0.0 && d[2] > 0.0
    };
    let mut grid: Vec<f64> = (0..=160).map(|i| 10f64.powf(-8.0 + i as f64 * 0.05)).collect();
    grid.extend((1..=980).map(|i| 1.0 + i as f64 * 0.05));
    let mut last_bad: Option<usize> = None;
    let mut first_good: Option<usize> = None;
    for (i, &t) in grid.iter().enumerate() {
        let d = family.jet(t).derivatives();
        if !d[0].is_finite() {
            if first_good.is_some() {
                break;
            }
            last_bad = Some(i);
            continue;
        }
        if ok(t) {
            first_good.get_or_insert(i);
        } else {
            last_bad = Some(i);
            first_good = None;
        }
    }
    let good = first_good.ok_or_else(|| {
        Error::domain(format!("{}: no range with g' > 0 and g'' > 0 found", family.name()))
    })?;
    match last_bad {
        None => Ok(0.0),
        Some(b) => {
            let (mut lo, mut hi) = (grid[b], grid[good]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_cubic_growth() {
        assert_eq!(GrowthModel::pure_exp().eval_g(5.0).unwrap(), 5.0);
        let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
        assert!((m.eval_g(10.0).unwrap() - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn double_exponential_value() {
        let m = GrowthModel::iter_exp(1, 1.0, 0.0).unwrap();
        assert!((m.eval_g(3.0).unwrap() - 20.085_536_923_187_668).abs() < 1e-13);
    }

    #[test]
    fn below_threshold_is_domain_error() {
        let m = GrowthModel::explicit_singular(1.5).unwrap();
        assert!(m.eval_g(0.5).unwrap_err().is_domain());
        // g' = -5/t + 3t^2 vanishes at (5/3)^(1/3).
        assert!((m.t0() - (5f64 / 3.0).cbrt()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_classes() {
        let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
        let c = m.classify_default().unwrap();
        assert!(c.in_class && (c.q - 1.5).abs() < 1e-15 && c.p == 3.0);
        assert!(c.conjugacy_residual <= 1e-9);
        let ee = GrowthModel::iter_exp(1, 1.0, 0.0).unwrap().classify_default().unwrap();
        assert!(ee.in_class && ee.q == 1.0 && ee.p.is_infinite());
        assert!((ee.numeric_q - 1.0).abs() < 1e-12);
        let gel = GrowthModel::pure_exp().classify_default().unwrap();
        assert!(!gel.in_class && gel.diagnostic.is_some());
    }

    #[test]
    fn numeric_classification_matches_closed_form() {
        let models = [
            GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap(),
            GrowthModel::power_exp(1.0, 3.0, 0.0, 0.0).unwrap(),
            GrowthModel::power_exp(0.0, 3.0, 1.0, 1.0).unwrap(),
            GrowthModel::power_exp(-2.0, 2.5, 0.5, 1.0).unwrap(),
            GrowthModel::iter_exp(1, 1.0, 0.0).unwrap(),
            GrowthModel::iter_exp(1, 2.0, 1.0).unwrap(),
            GrowthModel::iter_exp(2, 1.0, 0.0).unwrap(),
            GrowthModel::exp_plus_poly(vec![0.0, 0.0, 1.0]).unwrap(),
            GrowthModel::explicit_singular(1.5).unwrap(),
            GrowthModel::explicit_singular(1.0).unwrap(),
        ];
        for m in &models {
            let c = m.classify_default().unwrap();
            assert!(c.in_class, "{:?}", m.family());
            assert!((c.numeric_q - c.q).abs() < 1e-3, "{:?}: q {} vs {}", m.family(), c.numeric_q, c.q);
            let ip = |p: f64| if p.is_infinite() { 0.0 } else { 1.0 / p };
            assert!((ip(c.numeric_p) - ip(c.p)).abs() < 1e-3, "{:?}: p {} vs {}", m.family(), c.numeric_p, c.p);
            assert!(c.conjugacy_residual <= 1e-9);
        }
    }

    #[test]
    fn custom_model_classified_numerically() {
        // g = t^4 gives q = 4/3, p = 4.
        let m = GrowthModel::custom("quartic", |t| t * t * t * t).unwrap();
        let c = m.classify_default().unwrap();
        assert!(!c.closed_form && c.in_class);
        assert!((c.q - 4.0 / 3.0).abs() < 1e-6 && (c.p - 4.0).abs() < 1e-5);
    }

    #[test]
    fn h2_check() {
        let grid = GrowthModel::default_h2_grid();
        let g = GrowthModel::pure_exp().check_h2(&grid);
        assert!(g.pass && (g.infimum - std::f64::consts::E).abs() < 1e-2);
        let sq = GrowthModel::custom("square", |t| t.ln().scale(2.0)).unwrap().check_h2(&grid);
        assert!(!sq.pass && sq.infimum == 0.0);
        let ee = GrowthModel::iter_exp(1, 1.0, 0.0).unwrap().check_h2(&grid);
        assert!(ee.pass);
    }

    #[test]
    fn cascade_power_scaling() {
        // g_i t^{ip-1} tends to a nonzero constant for g = t^3 + c t^pbar + m ln t.
        let m = GrowthModel::power_exp(1.0, 3.0, 1.0, 1.0).unwrap();
        for i in 0..5 {
            let scaled = |t: f64| m.cascade(t)[i] * t.powf((i as f64 + 1.0) * 3.0 - 1.0);
            let (a, b) = (scaled(200.0), scaled(400.0));
            assert!(a.abs() > 1e-6 && ((a - b) / b).abs() < 0.05, "i = {}", i + 1);
        }
        let e = GrowthModel::exp_plus_poly(vec![1.0, 0.0, 1.0]).unwrap();
        for i in 0..5 {
            let scaled = |t: f64| e.cascade(t)[i] * ((i as f64 + 1.0) * t).exp();
            let (a, b) = (scaled(25.0), scaled(30.0));
            assert!(a.abs() > 1e-6 && ((a - b) / b).abs() < 0.05, "i = {}", i + 1);
        }
    }

    #[test]
    fn cascade_matches_explicit_formulas() {
        // g_2 = -g''/g'^3 and g_3 = (3g''^2 - g' g''')/g'^5.
        let m = GrowthModel::iter_exp(1, 1.5, 0.5).unwrap();
        let t = 2.3;
        let d = m.derivatives(t);
        let c = m.cascade(t);
        assert!((c[1] + d[2] / d[1].powi(3)).abs() < 1e-12 * c[1].abs());
        let g3 = (3.0 * d[2] * d[2] - d[1] * d[3]) / d[1].powi(5);
        assert!((c[2] - g3).abs() < 1e-10 * g3.abs());
    }

    #[test]
    fn g_inverse_round_trip() {
        let m = GrowthModel::power_exp(1.0, 3.0, 0.0, 0.0).unwrap();
        let t = m.g_inverse(1234.5).unwrap();
        assert!((m.g(t) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn spec_round_trip_and_unknown_keys() {
        let spec: ModelSpec = serde_json::from_str(r#"{"family":"power_exp","p":3.0,"m":1.0}"#).unwrap();
        let wrong = serde_json::from_str::<ModelSpec>(r#"{"family":"pure_exp","p":3.0}"#).unwrap();
        assert!(GrowthModel::from_spec(&wrong).unwrap_err().is_domain());
        let m = GrowthModel::from_spec(&spec).unwrap();
        assert!(matches!(m.family(), Family::PowerExp { p, m, .. } if *p == 3.0 && *m == 1.0));
        let again: ModelSpec = serde_json::from_str(&serde_json::to_string(&m.spec().unwrap()).unwrap()).unwrap();
        assert_eq!(GrowthModel::from_spec(&again).unwrap().t0(), m.t0());
        let bad = serde_json::from_str::<ModelSpec>(r#"{"family":"pure_exp","zeta":1}"#);
        assert!(bad.is_err());
        let bad_p = GrowthModel::power_exp(0.0, 3.0, 1.0, 4.0);
        assert!(bad_p.unwrap_err().is_domain());
    }

    fn models() -> &'static [GrowthModel] {
        static MODELS: std::sync::OnceLock<Vec<GrowthModel>> = std::sync::OnceLock::new();
        MODELS.get_or_init(|| vec![
            GrowthModel::power_exp(1.0, 3.0, 0.5, 1.0).unwrap(),
            GrowthModel::iter_exp(1, 1.0, 0.0).unwrap(),
            GrowthModel::iter_exp(1, 2.0, 1.0).unwrap(),
            GrowthModel::exp_plus_poly(vec![0.5, -1.0, 1.0]).unwrap(),
            GrowthModel::explicit_singular(1.5).unwrap(),
        ])
    }

    proptest! {
        #[test]
        fn first_derivative_matches_finite_difference(idx in 0usize..5, u in 0.05f64..1.0) {
            let m = &models()[idx];
            let t = m.t0() + 0.1 + 3.0 * u;
            let h = 1e-5 * t.max(1.0);
            for order in 1..=3 {
                let lo = m.eval_g_deriv(t - h, order - 1).unwrap();
                let hi = m.eval_g_deriv(t + h, order - 1).unwrap();
                let fd = (hi - lo) / (2.0 * h);
                let an = m.eval_g_deriv(t, order).unwrap();
                prop_assert!((fd - an).abs() <= 1e-6f64.max(1e-6 * an.abs()), "order {} fd {} an {}", order, fd, an);
            }
        }

        #[test]
        fn fast_path_agrees_with_jets(idx in 0usize..5, u in 0.0f64..1.0) {
            let m = &models()[idx];
            let t = m.t0() + 0.01 + 4.0 * u;
            let (g, d) = m.g_d1(t);
            let j = m.jet(t);
            prop_assert!((g - j.c[0]).abs() <= 1e-13 * g.abs().max(1.0));
            prop_assert!((d - j.c[1]).abs() <= 1e-13 * d.abs().max(1.0));
        }

        #[test]
        fn increment_matches_difference(idx in 0usize..5, u in 0.0f64..1.0, h in 1e-3f64..0.5) {
            let m = &models()[idx];
            let t = m.t0() + 0.5 + 2.0 * u;
            let direct = m.g(t + h) - m.g(t);
            let inc = m.increment(t, h);
            prop_assert!((direct - inc).abs() <= 1e-12 * m.g(t + h).abs().max(1.0));
        }
    }
}
