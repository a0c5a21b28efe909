//! Singular-solution approximants and their outward extension.
//!
//! `F(t) = int_t^inf ds / f(s)` is always handled as `ln F`. With the
//! substitution `s = t + y / g'(t)`,
//! `F(t) = I(t) / (f(t) g'(t))`, `I(t) = int_0^inf exp(-(g(s) - g(t))) dy`,
//! and `I = f' F`. The kernel moments
//! `J1 = int (g''/g'^2)(s) e^{-D} dy = 1 - I` and
//! `J2 = int (3 g''^2/g'^4 - g'''/g'^3)(s) e^{-D} dy`
//! give both functionals without cancellation:
//! `1/B1 = (-ln F) J1` and `1/B2 = I (ln F)^2 (J2 - eps J1)` with
//! `eps = g''/g'^2 (t)`.

use crate::error::{Error, Result};
use crate::growth::GrowthModel;
use crate::numerics::quad::{self, QuadOptions};
use crate::numerics::roots;
use crate::shooting::{self, Shot, SolverConfig};
use serde::{Deserialize, Serialize};

/// Truncation depth of the kernel `e^{-D}` in log units.
const TAIL: f64 = 60.0;

/// Engineering threshold on `sqrt(ln 1/r) (R1 + R2)` for the matching radius.
pub const MATCHING_THRESHOLD: f64 = 0.05;

/// Largest `ln(1/r^2)` tried for the matching radius.
pub const MAX_L: f64 = 1e8;

fn kernel_opts() -> QuadOptions {
    QuadOptions::new(1e-300, 1e-13)
}

/// Upper end `Y` of the kernel integral, where `D(Y) >= TAIL`.
fn kernel_end(model: &GrowthModel, t: f64, gp: f64) -> Result<f64> {
    let mut y = 1.0;
    // Shrink first: a tiny g'(t) makes the kernel a narrow spike in y.
    while y > 1e-300 && model.increment(t, y / gp) >= TAIL {
        y *= 0.5;
    }
    for _ in 0..2000 {
        let d = model.increment(t, y / gp);
        if d.is_nan() {
            return Err(Error::domain(format!("g undefined beyond t = {t}")));
        }
        if d >= TAIL {
            return Ok(y);
        }
        y *= 2.0;
    }
    Err(Error::domain(format!("tail of 1/f does not decay beyond t = {t}; g is not eventually convex")))
}

fn kernel<K: Fn(&[f64; 6]) -> f64>(model: &GrowthModel, t: f64, weight: K) -> Result<(f64, f64, f64)> {
    let d = model.derivatives(t);
    let gp = d[1];
    if !(gp > 0.0) || !d[0].is_finite() {
        return Err(Error::domain(format!("F needs g'(t) > 0, got g'({t}) = {gp}")));
    }
    let y_end = kernel_end(model, t, gp)?;
    let f = |y: f64| {
        let s = t + y / gp;
        let e = (-model.increment(t, y / gp)).exp();
        if e == 0.0 {
            0.0
        } else {
            weight(&model.derivatives(s)) * e
        }
    };
    let q = quad::integrate(f, 0.0, y_end, kernel_opts())?;
    Ok((q.value, d[0], gp))
}

/// `I(t) = f'(t) F(t) = f(t) F(t) g'(t)`, tending to `1`.
pub fn kernel_mass(model: &GrowthModel, t: f64) -> Result<f64> {
    let d = model.derivatives(t);
    let gp = d[1];
    if !(gp > 0.0) {
        return Err(Error::domain(format!("F needs g'(t) > 0, got g'({t}) = {gp}")));
    }
    let y_end = kernel_end(model, t, gp)?;
    let f = |y: f64| (-model.increment(t, y / gp)).exp();
    Ok(quad::integrate(f, 0.0, y_end, kernel_opts())?.value)
}

/// `ln F(t)`.
pub fn big_f(model: &GrowthModel, t: f64) -> Result<f64> {
    model.eval_g(t)?;
    let (g, gp) = model.g_d1(t);
    let i = kernel_mass(model, t)?;
    Ok(-g - gp.ln() + i.ln())
}

/// Smallest `t >= t0` with `g'(t) > 0`.
fn lowest_point(model: &GrowthModel) -> Result<f64> {
    let mut t0 = model.t0();
    if model.derivatives(t0)[1].is_nan() {
        t0 += 1e-9 * t0.abs().max(1.0);
    }
    if model.derivatives(t0)[1] > 0.0 {
        return Ok(t0);
    }
    let mut hi = t0 + 1.0;
    let mut n = 0;
    while !(model.derivatives(hi)[1] > 0.0) {
        hi = 2.0 * hi + 1.0;
        n += 1;
        if n > 64 {
            return Err(Error::domain("g' never becomes positive"));
        }
    }
    let r = roots::bisect(|t| model.derivatives(t)[1], t0, hi, 1e-14 * hi)?;
    let mut t = r.x;
    while !(model.derivatives(t)[1] > 0.0) {
        t += 1e-12 * t.abs().max(1.0);
    }
    Ok(t)
}

/// Solves `ln F(t) = y`.
pub fn big_f_inv(model: &GrowthModel, y: f64) -> Result<f64> {
    let lo = lowest_point(model)?;
    let f_lo = big_f(model, lo)?;
    if !(y <= f_lo) {
        return Err(Error::domain(format!("ln F = {y} exceeds ln F(t0) = {f_lo}")));
    }
    // Asymptotic start: -g - ln g' = y.
    let asym = |t: f64| {
        let (g, gp) = model.g_d1(t);
        (-g - gp.ln() - y).max(-f64::MAX)
    };
    let mut hi = lo + 1.0;
    let mut n = 0;
    while asym(hi) > 0.0 {
        hi *= 2.0;
        n += 1;
        if n > 2000 || !hi.is_finite() {
            return Err(Error::domain(format!("F^-1({y}): no bracket")));
        }
    }
    let mut t = if asym(lo) > 0.0 { roots::brent(asym, lo, hi, 0.0)?.x } else { lo };
    // Safeguarded Newton with (ln F)' = -g'/I.
    let (mut a, mut b) = (lo, f64::INFINITY);
    for _ in 0..60 {
        let i = kernel_mass(model, t)?;
        let (g, gp) = model.g_d1(t);
        let r = -g - gp.ln() + i.ln() - y;
        if r == 0.0 {
            return Ok(t);
        }
        if r > 0.0 {
            a = a.max(t);
        } else {
            b = b.min(t);
        }
        let step = r * i / gp;
        let mut next = t + step;
        if !(next > a && next < b) {
            next = if b.is_finite() { 0.5 * (a + b) } else { 2.0 * t.max(1.0) };
        }
        if (next - t).abs() <= 4.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}

/// `(1/B1[f](t), 1/B2[f](t))`.
pub fn b_functionals(model: &GrowthModel, t: f64) -> Result<(f64, f64)> {
    model.eval_g(t)?;
    let d = model.derivatives(t);
    let eps = d[2] / (d[1] * d[1]);
    let (j1, g, gp) = kernel(model, t, |d| d[2] / (d[1] * d[1]))?;
    let (j2, _, _) = kernel(model, t, |d| {
        let e = d[2] / (d[1] * d[1]);
        3.0 * e * e - d[3] / (d[1] * d[1] * d[1])
    })?;
    let i = kernel_mass(model, t)?;
    let ln_f = -g - gp.ln() + i.ln();
    Ok((-ln_f * j1, i * ln_f * ln_f * (j2 - eps * j1)))
}

/// Singular approximant `u~ = F^-1(F0(u0))` of one growth model.
#[derive(Clone, Debug)]
pub struct SingularApprox {
    pub model: GrowthModel,
    pub reference: GrowthModel,
    /// `B = q`.
    pub b: f64,
    /// `B' = p`, infinite on the `B = 1` branch.
    pub b_prime: f64,
    /// Largest radius with `ln w(r)` inside the range of `ln F`.
    pub r_max: f64,
}

impl SingularApprox {
    pub fn new(model: &GrowthModel) -> Result<Self> {
        let class = model.classify_default()?;
        if !class.in_class {
            return Err(Error::domain(format!("model {} is outside the supercritical class (q = {})", model.family().name(), class.q)));
        }
        Self::with_b(model, class.q)
    }

    /// Approximant with an explicit `B`; `B = 1` selects the double-exponential branch.
    pub fn with_b(model: &GrowthModel, b: f64) -> Result<Self> {
        let b = if (b - 1.0).abs() < 1e-9 { 1.0 } else { b };
        let reference = GrowthModel::explicit_singular(b)?;
        let b_prime = if b == 1.0 { f64::INFINITY } else { b / (b - 1.0) };
        let lo = lowest_point(model)?;
        let cap = big_f(model, lo)?;
        let mut approx = SingularApprox { model: model.clone(), reference, b, b_prime, r_max: 0.0 };
        // ln w is increasing in r on (0, 1).
        let f = |s: f64| approx.ln_w_at_log(s) - cap;
        let s_max = if f(-1e-9) < 0.0 { -1e-9 } else { roots::brent(f, -700.0, -1e-9, 1e-13)?.x };
        approx.r_max = s_max.exp();
        Ok(approx)
    }

    fn ln_w_at_log(&self, s: f64) -> f64 {
        let l = -2.0 * s;
        (self.b / 4.0).ln() + 2.0 * s + (l + 1.0).ln()
    }

    /// `ln w(r)` with `w = (B/4) r^2 (ln(1/r^2) + 1) = F0(u0(r))`.
    pub fn ln_w(&self, r: f64) -> f64 {
        self.ln_w_at_log(r.ln())
    }

    /// Explicit singular solution of the reference nonlinearity.
    pub fn u0(&self, r: f64) -> f64 {
        self.u0_log(r.ln())
    }

    /// `u0` at `r = e^s`.
    pub fn u0_log(&self, s: f64) -> f64 {
        let l = -2.0 * s;
        if self.b == 1.0 {
            l.ln()
        } else {
            l.powf(1.0 / self.b_prime)
        }
    }

    fn check_log(&self, s: f64) -> Result<()> {
        if s.is_finite() && s <= self.r_max.ln() {
            Ok(())
        } else {
            Err(Error::domain(format!("ln r = {s} outside (-inf, ln r_max = {}]", self.r_max.ln())))
        }
    }

    pub fn tilde_u(&self, r: f64) -> Result<f64> {
        self.tilde_u_log(r.ln())
    }

    /// `u~` at `r = e^s`; radii far below the double range stay accessible.
    pub fn tilde_u_log(&self, s: f64) -> Result<f64> {
        self.check_log(s)?;
        big_f_inv(&self.model, self.ln_w_at_log(s))
    }

    /// `(u~, r u~')` at `r = e^s`, with `u~' = -w' f(u~)` and
    /// `w' = (B/2) r ln(1/r^2)`.
    pub fn tilde_u_with_flux_log(&self, s: f64) -> Result<(f64, f64)> {
        let u = self.tilde_u_log(s)?;
        let l = -2.0 * s;
        let p = -(self.b / 2.0) * l * (2.0 * s + self.model.g(u)).exp();
        Ok((u, p))
    }

    /// `R1`, `R2` and `sqrt(ln 1/r) (R1 + R2)` at `r`.
    pub fn remainders(&self, r: f64) -> Result<Remainders> {
        self.remainders_log(r.ln())
    }

    pub fn remainders_log(&self, s: f64) -> Result<Remainders> {
        let u = self.tilde_u_log(s)?;
        let (a1, a2) = b_functionals(&self.model, u)?;
        let (c1, c2) = b_functionals(&self.reference, self.u0_log(s))?;
        let (r1, r2) = ((a1 - c1).abs(), (a2 - c2).abs());
        Ok(Remainders { ln_r: s, r1, r2, weighted: (-s).sqrt() * (r1 + r2) })
    }

    /// Largest radius where the weighted remainder is below `threshold`,
    /// scanning `L = ln(1/r^2)` geometrically (8 points per decade) from
    /// `r_max / 2` up to `L = MAX_L`. Without such a radius the scan point
    /// with the smallest weighted remainder is returned with `met = false`.
    pub fn matching_radius(&self, threshold: f64) -> Result<Matching> {
        let l_start = -2.0 * (0.5 * self.r_max).ln();
        let mut best: Option<Remainders> = None;
        let mut j = 0;
        loop {
            let l = l_start * 10f64.powf(j as f64 / 8.0);
            if l > MAX_L {
                return best
                    .map(|remainders| Matching { remainders, threshold, met: false })
                    .ok_or_else(|| Error::Matching("no admissible matching radius".into()));
            }
            if let Ok(rem) = self.remainders_log(-0.5 * l) {
                if rem.weighted < threshold {
                    return Ok(Matching { remainders: rem, threshold, met: true });
                }
                if best.is_none_or(|b| rem.weighted < b.weighted) {
                    best = Some(rem);
                }
            }
            j += 1;
        }
    }

    /// Extends `u~` outward from `r_bar` to its first zero.
    pub fn extend(&self, r_bar: f64, config: &SolverConfig) -> Result<SingularSolution> {
        self.extend_log(r_bar.ln(), config)
    }

    /// [`Self::extend`] from `r_bar = e^{s_bar}`.
    pub fn extend_log(&self, s_bar: f64, config: &SolverConfig) -> Result<SingularSolution> {
        let (u, p) = self.tilde_u_with_flux_log(s_bar)?;
        if !(p < 0.0) {
            return Err(Error::Matching(format!("u~' = {p} is not negative at ln r_bar = {s_bar}")));
        }
        let ext = shooting::integrate_from(&self.model, s_bar, u, p, config).map_err(|e| match e {
            Error::Domain(m) => Error::Matching(format!("extension from ln r_bar = {s_bar} failed: {m}")),
            other => other,
        })?;
        if !ext.is_monotone() {
            return Err(Error::Matching(format!("extension from ln r_bar = {s_bar} is not decreasing")));
        }
        let last = ext.nodes.last().unwrap();
        Ok(SingularSolution {
            b: self.b,
            b_prime: self.b_prime,
            ln_r_bar: s_bar,
            r_bar: s_bar.exp(),
            r_star: ext.r0,
            lambda_star: ext.r0 * ext.r0,
            slope_star: ext.slope,
            dv_star: last.p / ext.r0,
            approx: self.clone(),
            extension: ext,
            matching: None,
        })
    }

    /// Matching radius by [`Self::matching_radius`], then [`Self::extend_log`].
    pub fn construct(&self, config: &SolverConfig) -> Result<SingularSolution> {
        let m = self.matching_radius(MATCHING_THRESHOLD)?;
        let mut sol = self.extend_log(m.remainders.ln_r, config)?;
        sol.matching = Some(m);
        Ok(sol)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Matching {
    pub remainders: Remainders,
    pub threshold: f64,
    /// Whether the weighted remainder reached `threshold`.
    pub met: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Remainders {
    /// `ln r`; matching radii can lie far below the double range of `r`.
    pub ln_r: f64,
    pub r1: f64,
    pub r2: f64,
    pub weighted: f64,
}

/// `V* = u~` on `(0, r_bar]`, continued by the ODE to `V*(R*) = 0`.
#[derive(Clone, Debug)]
pub struct SingularSolution {
    pub approx: SingularApprox,
    pub b: f64,
    pub b_prime: f64,
    pub ln_r_bar: f64,
    /// `e^{ln_r_bar}`, possibly `0` after underflow.
    pub r_bar: f64,
    pub r_star: f64,
    pub lambda_star: f64,
    /// `R* V*'(R*)`, the disc slope `U*'(1)`.
    pub slope_star: f64,
    /// `V*'(R*)`.
    pub dv_star: f64,
    pub extension: Shot,
    /// Set when `r_bar` came from [`SingularApprox::matching_radius`].
    pub matching: Option<Matching>,
}

impl SingularSolution {
    /// `V*(r)` for `0 < r <= R*`.
    pub fn value(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= self.r_star * (1.0 + 1e-12)) {
            return Err(Error::domain(format!("V* is defined on (0, R* = {}], got r = {r}", self.r_star)));
        }
        if r.ln() <= self.ln_r_bar {
            self.approx.tilde_u(r)
        } else {
            Ok(self.extension.sampler().at(r.min(self.r_star)).0)
        }
    }

    /// [`SingularSolution::value`] at `r = e^s`, usable below the `f64`
    /// range of `r`.
    pub fn value_log(&self, s: f64) -> Result<f64> {
        let top = self.r_star.ln();
        if !(s <= top + 1e-12) {
            return Err(Error::domain(format!("V* is defined for ln r <= ln R* = {top}, got {s}")));
        }
        if s <= self.ln_r_bar {
            self.approx.tilde_u_log(s)
        } else {
            Ok(self.extension.sampler().at_s(s.min(top)).0)
        }
    }

    /// Largest relative flux residual along the extension.
    pub fn ode_residual(&self) -> f64 {
        self.extension.flux_residual(&self.approx.model, 64)
    }

    pub fn summary(&self) -> SingularSummary {
        SingularSummary {
            b: self.b,
            b_prime: self.b_prime,
            ln_r_bar: self.ln_r_bar,
            r_star: self.r_star,
            lambda_star: self.lambda_star,
            slope_star: self.slope_star,
            dv_star: self.dv_star,
            matching: self.matching,
        }
    }
}

/// Serializable digest of a [`SingularSolution`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SingularSummary {
    pub b: f64,
    #[serde(with = "crate::ext_f64")]
    pub b_prime: f64,
    pub ln_r_bar: f64,
    pub r_star: f64,
    pub lambda_star: f64,
    pub slope_star: f64,
    pub dv_star: f64,
    #[serde(default)]
    pub matching: Option<Matching>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AlphaWindow {
    pub alpha: f64,
    /// Largest grid `ln r` below which `alpha ln(1/r) <= g(U)` holds.
    pub ln_r_bar: Option<f64>,
    /// Largest violating `ln r`, if any.
    pub ln_violation: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConditionCReport {
    /// Checked window in `ln r`.
    pub ln_window: (f64, f64),
    pub lower: Vec<AlphaWindow>,
    pub beta: f64,
    /// Largest grid `ln r` below which `g(U) + ln g'(U) <= 2 ln(1/r) + beta`.
    pub upper_ln_r_bar: Option<f64>,
    pub upper_ln_violation: Option<f64>,
    pub pass: bool,
}

/// Checks condition (C) for `u`, given as a function of `ln r`, on
/// `ln_window`. The grid is geometric in `L = 2 ln(1/r)` with 64 points per
/// decade, since the bounds separate on that scale. Each bound must hold
/// on an initial segment of the grid.
pub fn check_condition_c<U>(model: &GrowthModel, u: U, alphas: &[f64], beta: f64, ln_window: (f64, f64)) -> Result<ConditionCReport>
where
    U: Fn(f64) -> Result<f64>,
{
    let (lo, hi) = ln_window;
    if !(lo < hi && hi < 0.0 && lo.is_finite()) {
        return Err(Error::domain(format!("condition (C) window must satisfy ln r_lo < ln r_hi < 0, got ({lo}, {hi})")));
    }
    let (l_lo, l_hi) = (-2.0 * hi, -2.0 * lo);
    let n = ((64.0 * (l_hi / l_lo).log10()).ceil() as usize).max(16);
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        // From the smallest radius outward.
        let s = -0.5 * l_hi * (l_lo / l_hi).powf(i as f64 / n as f64);
        let v = u(s)?;
        let (g, gp) = model.g_d1(v);
        vals.push((s, g, g + gp.ln()));
    }
    let window_of = |ok: &dyn Fn(f64, f64, f64) -> bool| {
        let mut good = None;
        let mut bad = None;
        for &(s, g, h) in &vals {
            if ok(s, g, h) {
                if bad.is_none() {
                    good = Some(s);
                }
            } else {
                bad = Some(s);
            }
        }
        (good, bad)
    };
    let mut lower = Vec::new();
    for &alpha in alphas {
        let (ln_r_bar, ln_violation) = window_of(&|s, g, _| alpha * (-s) <= g);
        lower.push(AlphaWindow { alpha, ln_r_bar, ln_violation });
    }
    let (upper_ln_r_bar, upper_ln_violation) = window_of(&|s, _, h| h <= -2.0 * s + beta);
    let pass = upper_ln_r_bar.is_some() && lower.iter().all(|w| w.ln_r_bar.is_some());
    Ok(ConditionCReport { ln_window, lower, beta, upper_ln_r_bar, upper_ln_violation, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_exp_f_is_exact() {
        let m = GrowthModel::pure_exp();
        assert!((big_f(&m, 5.0).unwrap() + 5.0).abs() < 1e-10);
        assert!((big_f_inv(&m, -5.0).unwrap() - 5.0).abs() < 1e-10);
        let (b1, _) = b_functionals(&m, 5.0).unwrap();
        assert!(b1.abs() < 1e-12);
    }

    #[test]
    fn reference_pipeline_reproduces_u0() {
        let m = GrowthModel::explicit_singular(1.5).unwrap();
        let ap = SingularApprox::with_b(&m, 1.5).unwrap();
        let w = ap.ln_w(0.1).exp();
        assert!((w - 0.375 * 0.01 * (100f64.ln() + 1.0)).abs() < 1e-15);
        assert!((w - 0.021_019_4).abs() < 1e-7);
        assert!((big_f(&m, ap.u0(0.1)).unwrap() - w.ln()).abs() < 1e-10);
        let u = ap.tilde_u(0.05).unwrap();
        assert!((u - 400f64.ln().cbrt()).abs() < 1e-9);
        assert!((u - 1.816_258_520_180_61).abs() < 1e-9);
    }

    #[test]
    fn f_inverse_is_decreasing() {
        let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
        let ts: Vec<f64> = [-10.0, -30.0, -100.0, -1000.0].iter().map(|&y| big_f_inv(&m, y).unwrap()).collect();
        assert!(ts.windows(2).all(|w| w[1] > w[0]));
        for (&y, &t) in [-10.0, -30.0, -100.0, -1000.0].iter().zip(&ts) {
            assert!((big_f(&m, t).unwrap() - y).abs() < 1e-9 * y.abs());
        }
        // sup ln F = ln Gamma(4/3) < 0 for g = t^3.
        assert!(big_f_inv(&m, 1.0).unwrap_err().is_domain());
    }

    #[test]
    fn j1_equals_one_minus_kernel_mass() {
        let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
        for t in [1.5, 3.0] {
            let (j1, _, _) = kernel(&m, t, |d| d[2] / (d[1] * d[1])).unwrap();
            let i = kernel_mass(&m, t).unwrap();
            assert!((j1 - (1.0 - i)).abs() < 1e-12, "{j1} {i}");
        }
    }

    #[test]
    fn condition_c_rejects_slow_growth() {
        let m = GrowthModel::pure_exp();
        // g(U) = ln(1/r): exponent 1 < 1.5.
        let rep = check_condition_c(&m, |s: f64| Ok(-s), &[1.5], 0.0, (-1e4, -4.0)).unwrap();
        assert!(!rep.pass && rep.lower[0].ln_r_bar.is_none());
        let rep = check_condition_c(&m, |s: f64| Ok(-s), &[0.5], 0.0, (-1e4, -4.0)).unwrap();
        assert!(rep.pass);
    }
}
