//! Bump extraction and intersection counting on completed shots.
//!
//! Radii in reports are disc radii `x = r / r0`. The bump statistic
//! `phi = ln(lambda h x^2 f'(u))` equals `ln S + ln g'(v)` in shot
//! variables, so it is evaluated without forming `f`.

use crate::error::{Error, Result};
use crate::growth::GrowthModel;
use crate::numerics::roots;
use crate::recurrence::{Branch, RecurrenceTable};
use crate::shooting::Shot;
use serde::{Deserialize, Serialize};

/// Peaks must exceed the smallest predicted peak by this factor (`e^-2`).
pub const PEAK_MARGIN: f64 = 2.0;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BumpReport {
    pub k: usize,
    pub r_top: f64,
    /// Minimum of `phi` between this top and the next one.
    pub r_bottom: Option<f64>,
    /// Top found at the boundary `x = 1`.
    pub boundary_top: bool,
    /// `lambda h x^2 f'(u)` at the top; predicted `a_k^2 / 2`.
    pub peak: f64,
    /// `(lambda h f'(u(r_top)))^{-1/2}`.
    pub gamma: f64,
    /// `u(r_top) / mu`; predicted `delta_k`.
    pub height_ratio: f64,
    /// `(mu - u(r_top)) g'(mu) / g(mu)`; predicted `ln(1/eta_k)` when `q = 1`.
    pub gap: f64,
    /// `ln(1/r_top) / g(mu)`; predicted `eta_k / 2`.
    pub radius_law: f64,
    /// Curve exponent at the top; predicted `2`.
    pub top_exponent: f64,
    /// Curve exponent at the bottom; predicted `alpha*_k`.
    pub bottom_exponent: Option<f64>,
    /// `g'(u(r_top))` times the source mass between neighboring bottoms;
    /// predicted `2 a_k`.
    pub energy: f64,
    /// `g'(mu)` times the source mass from the bottom to the half-height
    /// point of the next rise.
    pub gap_energy: Option<f64>,
    pub predicted: Option<Prediction>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Prediction {
    pub peak: f64,
    pub height_ratio: f64,
    /// Only on the exponential branch, where heights all tend to `mu`.
    pub gap: Option<f64>,
    pub radius_law: f64,
    pub top_exponent: f64,
    pub bottom_exponent: f64,
    pub energy: f64,
}

impl Prediction {
    pub fn from_table(table: &RecurrenceTable, k: usize) -> Option<Prediction> {
        let row = table.row(k).ok()?;
        Some(Prediction {
            peak: row.a * row.a / 2.0,
            height_ratio: row.delta,
            gap: (table.branch == Branch::Exponential).then(|| -row.eta.ln()),
            radius_law: row.eta / 2.0,
            top_exponent: 2.0,
            bottom_exponent: row.alpha_star,
            energy: 2.0 * row.a,
        })
    }
}

impl BumpReport {
    /// Relative errors of the observed statistics against the prediction,
    /// as `(name, observed, predicted, relative error)`.
    pub fn comparison(&self) -> Vec<(&'static str, f64, f64, f64)> {
        let Some(p) = self.predicted else { return Vec::new() };
        let rel = |o: f64, e: f64| ((o - e) / e).abs();
        let mut out = vec![
            ("peak", self.peak, p.peak, rel(self.peak, p.peak)),
            ("height_ratio", self.height_ratio, p.height_ratio, rel(self.height_ratio, p.height_ratio)),
            ("radius_law", self.radius_law, p.radius_law, rel(self.radius_law, p.radius_law)),
            ("top_exponent", self.top_exponent, p.top_exponent, rel(self.top_exponent, p.top_exponent)),
            ("energy", self.energy, p.energy, rel(self.energy, p.energy)),
        ];
        if let Some(g) = p.gap {
            // ln(1/eta_1) = 0, so the first gap is compared absolutely.
            out.push(("gap", self.gap, g, if g == 0.0 { self.gap.abs() } else { rel(self.gap, g) }));
        }
        if let Some(b) = self.bottom_exponent {
            out.push(("bottom_exponent", b, p.bottom_exponent, rel(b, p.bottom_exponent)));
        }
        out
    }
}

struct Phi<'a> {
    shot: &'a Shot,
    model: &'a GrowthModel,
}

impl Phi<'_> {
    fn at(&self, s: f64) -> f64 {
        let (w, _) = self.shot.sampler().at_s(s);
        let (g, gp) = self.model.g_d1(w);
        let v = 2.0 * s + g + gp.ln();
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

fn node_phi(shot: &Shot, model: &GrowthModel) -> Vec<(f64, f64)> {
    shot.nodes
        .iter()
        .map(|n| {
            let gp = model.g_d1(n.w).1;
            let v = n.ln_source + gp.ln();
            (n.s, if v.is_nan() { f64::NEG_INFINITY } else { v })
        })
        .collect()
}

/// `(s, phi)` at an extremum, in shot log-radius.
type PhiPoint = (f64, f64);

/// Tops and bottoms of `phi`, with one bottom between consecutive tops.
fn extrema(shot: &Shot, model: &GrowthModel, threshold: f64) -> (Vec<PhiPoint>, Vec<PhiPoint>) {
    let ph = Phi { shot, model };
    let pts = node_phi(shot, model);
    let n = pts.len();
    let tol = 1e-10;
    let mut tops = Vec::new();
    for i in 1..n {
        let left = pts[i - 1].1;
        let here = pts[i].1;
        let right = if i + 1 < n { pts[i + 1].1 } else { f64::NEG_INFINITY };
        if here > left && here >= right && here > threshold {
            let a = pts[i - 1].0;
            let b = if i + 1 < n { pts[i + 1].0 } else { pts[i].0 };
            let (s, v) = roots::golden_max(|s| ph.at(s), a, b, tol * (b - a).max(1e-300));
            let (s, v) = if v >= here { (s, v) } else { pts[i] };
            if tops.last().is_none_or(|&(ls, _): &(f64, f64)| s > ls) {
                tops.push((s, v));
            }
        }
    }
    let mut bottoms = Vec::new();
    for w in tops.windows(2) {
        let (a, b) = (w[0].0, w[1].0);
        let (i, &(s_min, v_min)) = pts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.0 > a && p.0 < b)
            .min_by(|x, y| x.1 .1.total_cmp(&y.1 .1))
            .unwrap_or((0, &(0.5 * (a + b), ph.at(0.5 * (a + b)))));
        let lo = if i > 0 { pts[i - 1].0.max(a) } else { a };
        let hi = if i + 1 < n { pts[i + 1].0.min(b) } else { b };
        let (s, v) = roots::golden_min(|s| ph.at(s), lo, hi, tol * (hi - lo).max(1e-300));
        bottoms.push(if v <= v_min { (s, v) } else { (s_min, v_min) });
    }
    (tops, bottoms)
}

/// `g(u(x)) / ln(1/(r0 x))` at disc radius `x`.
pub fn curve_exponent(shot: &Shot, x: f64, model: &GrowthModel) -> Result<f64> {
    let r = x * shot.r0;
    if !(x > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("curve exponent needs 0 < x and r0 x < 1, got x = {x}, r0 = {}", shot.r0)));
    }
    let (w, _) = shot.sampler().at_s(r.ln());
    Ok(model.g(w) / (-r.ln()))
}

/// Source mass `int S ds` over `(-inf, s2]` or `[s1, s2]` in shot variables.
fn mass(shot: &Shot, model: &GrowthModel, s1: Option<f64>, s2: f64) -> f64 {
    let smp = shot.sampler();
    let first = shot.nodes[0].s;
    match s1 {
        None => -shot.nodes[0].p + smp.source_integral(model, first, s2),
        Some(a) => smp.source_integral(model, a, s2),
    }
}

/// Inner and gap energies of bump `k` (1-based) for the given extrema.
fn energies(shot: &Shot, model: &GrowthModel, tops: &[(f64, f64)], bottoms: &[(f64, f64)], k: usize) -> (f64, Option<f64>) {
    let i = k - 1;
    let lo = if i == 0 { None } else { Some(bottoms[i - 1].0) };
    let s_end = shot.nodes.last().unwrap().s;
    let hi = bottoms.get(i).map(|b| b.0).unwrap_or(s_end);
    let (w_top, _) = shot.sampler().at_s(tops[i].0);
    let inner = model.g_d1(w_top).1 * mass(shot, model, lo, hi);
    let gap = bottoms.get(i).map(|&(sb, vb)| {
        let (st, vt) = tops[i + 1];
        let mid = 0.5 * (vb + vt);
        let ph = Phi { shot, model };
        let s_half = roots::brent(|s| ph.at(s) - mid, sb, st, 1e-12).map(|r| r.x).unwrap_or(st);
        model.g_d1(shot.mu).1 * mass(shot, model, Some(sb), s_half)
    });
    (inner, gap)
}

/// Detects bumps of `phi` and compares them with the recurrence `table`.
pub fn detect_bumps(shot: &Shot, model: &GrowthModel, table: &RecurrenceTable) -> Result<Vec<BumpReport>> {
    if shot.mu.is_nan() {
        return Err(Error::domain("bump detection needs a shot from the center"));
    }
    let k_max = table.rows.len();
    if k_max == 0 {
        return Err(Error::domain("empty recurrence table"));
    }
    let a_min = table.rows[k_max - 1].a;
    let threshold = (a_min * a_min / 2.0).ln() - PEAK_MARGIN;
    let (tops, bottoms) = extrema(shot, model, threshold);
    let s0 = shot.s0;
    let (g_mu, gp_mu) = model.g_d1(shot.mu);
    let mut out = Vec::with_capacity(tops.len());
    for (i, &(st, vt)) in tops.iter().enumerate() {
        let k = i + 1;
        let x_top = (st - s0).exp();
        let (w_top, _) = shot.sampler().at_s(st);
        let bottom = bottoms.get(i);
        let x_bottom = bottom.map(|b| (b.0 - s0).exp());
        let (energy, gap_energy) = energies(shot, model, &tops, &bottoms, k);
        let exponent = |s: f64| if s < 0.0 { model.g(shot.sampler().at_s(s).0) / (-s) } else { f64::NAN };
        out.push(BumpReport {
            k,
            r_top: x_top,
            r_bottom: x_bottom,
            boundary_top: (st - shot.nodes.last().unwrap().s).abs() < 1e-9,
            peak: vt.exp(),
            gamma: x_top * (-0.5 * vt).exp(),
            height_ratio: w_top / shot.mu,
            gap: (shot.mu - w_top) * gp_mu / g_mu,
            radius_law: (s0 - st) / g_mu,
            top_exponent: exponent(st),
            bottom_exponent: bottom.map(|b| exponent(b.0)),
            energy,
            gap_energy,
            predicted: Prediction::from_table(table, k),
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IntersectionReport {
    /// Interval in `ln r`.
    pub ln_interval: (f64, f64),
    pub count: usize,
    /// Refined crossings in `ln r`, strictly increasing.
    pub ln_locations: Vec<f64>,
    /// Grid points (in `ln r`) where `|u - U|` fell below the tangency
    /// tolerance without a sign change; first point of each run.
    pub ln_tangencies: Vec<f64>,
}

impl IntersectionReport {
    pub fn locations(&self) -> Vec<f64> {
        self.ln_locations.iter().map(|s| s.exp()).collect()
    }
}

/// Sign changes of `u - U` on `interval` over a log grid with at least 64
/// points per decade; each crossing is refined by bisection to relative
/// width `refine_tol`. Non-finite values are a domain error.
pub fn count_intersections<U, V>(u: U, big_u: V, interval: (f64, f64), refine_tol: f64) -> Result<IntersectionReport>
where
    U: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    let (a, b) = interval;
    if !(a > 0.0 && b > a) {
        return Err(Error::domain(format!("intersection interval must satisfy 0 < a < b, got ({a}, {b})")));
    }
    count_intersections_log(|s| u(s.exp()), |s| big_u(s.exp()), (a.ln(), b.ln()), refine_tol)
}

/// [`count_intersections`] with both functions and the interval given in
/// `ln r`.
pub fn count_intersections_log<U, V>(u: U, big_u: V, ln_interval: (f64, f64), refine_tol: f64) -> Result<IntersectionReport>
where
    U: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    let (a, b) = ln_interval;
    if !(b > a && a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("intersection interval must satisfy a < b in ln r, got ({a}, {b})")));
    }
    let decades = (b - a) / std::f64::consts::LN_10;
    let n = ((64.0 * decades).ceil() as usize).max(64);
    let d = |s: f64| -> Result<(f64, f64)> {
        let (p, q) = (u(s), big_u(s));
        if !(p.is_finite() && q.is_finite()) {
            return Err(Error::domain(format!("sampler undefined at ln r = {s}: u = {p}, U = {q}")));
        }
        Ok((p - q, 1e-12 * (1.0 + p.abs() + q.abs())))
    };
    let mut locations = Vec::new();
    let mut tangencies = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    let mut in_touch = false;
    for i in 0..=n {
        let s = a + (b - a) * i as f64 / n as f64;
        let (v, tol) = d(s)?;
        if v.abs() <= tol {
            if !in_touch {
                tangencies.push(s);
            }
            in_touch = true;
            continue;
        }
        in_touch = false;
        if let Some((sl, vl)) = last {
            if vl.signum() != v.signum() {
                let r = roots::bisect(|t| d(t).map(|p| p.0).unwrap_or(f64::NAN), sl, s, refine_tol)?;
                locations.push(r.x);
                // A touching run that ends in a sign change is a crossing.
                if tangencies.last().is_some_and(|&t| t > sl) {
                    tangencies.pop();
                }
            }
        }
        last = Some((s, v));
    }
    Ok(IntersectionReport { ln_interval, count: locations.len(), ln_locations: locations, ln_tangencies: tangencies })
}

/// Crossings of a shot `v` with a singular solution `V*` in shot
/// coordinates on `(0, min(r0, R*, upper))`. Below the first node `v` is
/// nearly constant while `V*` grows without bound, so the lower end is
/// pushed down until `v < V*`.
pub fn intersections_with_singular(shot: &Shot, sol: &crate::singular::SingularSolution, upper: f64, refine_tol: f64) -> Result<IntersectionReport> {
    let smp = shot.sampler();
    let u = |s: f64| smp.at_s(s).0;
    let big_u = |s: f64| sol.value_log(s).unwrap_or(f64::NAN);
    let mut lo = shot.nodes[0].s;
    for _ in 0..64 {
        if u(lo) < big_u(lo) {
            break;
        }
        lo = 2.0 * lo - 10.0;
    }
    let hi = shot.s0.min(sol.r_star.ln()).min(upper.ln()) - 1e-12;
    count_intersections_log(u, big_u, (lo, hi), refine_tol)
}
