//! Radial shooting for `-v'' - v'/r = f(v)`, `v(0) = mu`, `v'(0) = 0`.
//!
//! The solver works in `s = ln r` with `w(s) = v(e^s)` and `p = r v'`, so that
//! `w_ss = -S` with the balanced source `S = exp(2s + g(w))`. Inner bubbles
//! are log-uniformly spaced, which makes `s` the natural variable, and `S`
//! stays `O(1)` at bumps even when `g(w)` exceeds the double range of `f`.
//!
//! Once `w` drops below a switch level the roles of `s` and `w` are
//! exchanged: with `y = 1/p`, `ds/dw = y` and `dy/dw = S y^3`. Integrating in
//! `w` down to `0` lands on the zero `r0` exactly, with no event search.
//!
//! The sensitivity `psi = dw/dmu` (with `chi = dp/dmu`) is carried along,
//! which yields `d lambda / d mu` from the same integration.

use crate::error::{Error, Result};
use crate::growth::GrowthModel;
use crate::numerics::dd::DoubleDouble;
use crate::numerics::quad::{self, QuadOptions};
use crate::numerics::rk::{dp5_step, error_norm, error_norm_with, PiController};
use crate::numerics::roots;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Double,
    /// State and independent variable accumulated as double-double sums.
    PairedDouble,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Start radius as a multiple of the core scale `f'(mu)^{-1/2}`.
    pub r_init_factor: f64,
    pub max_steps: usize,
    /// Stopping distance from `v = 0` when `ln f(0)` is not finite.
    pub event_tol: f64,
    pub precision: Precision,
    /// Number of log-uniform checkpoints for the flux diagnostic.
    pub checkpoints: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-11,
            atol: 1e-13,
            r_init_factor: 1e-4,
            max_steps: 5_000_000,
            event_tol: 1e-10,
            precision: Precision::Double,
            checkpoints: 64,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::domain("solver tolerances must be positive"));
        }
        if !(self.r_init_factor > 0.0 && self.r_init_factor <= 1e-2) {
            return Err(Error::domain(format!(
                "r_init_factor must lie in (0, 1e-2], got {}",
                self.r_init_factor
            )));
        }
        if self.max_steps == 0 || !(self.event_tol > 0.0 && self.event_tol < 1e-2) {
            return Err(Error::domain("max_steps must be positive and event_tol in (0, 1e-2)"));
        }
        Ok(())
    }

    pub fn with_precision(mut self, p: Precision) -> Self {
        self.precision = p;
        self
    }

    /// Tolerances scaled by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.rtol *= factor;
        self.atol *= factor;
        self
    }
}

/// One stored point of the trajectory.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Node {
    /// `ln r`.
    pub s: f64,
    /// `v(r)`.
    pub w: f64,
    /// `r v'(r)`.
    pub p: f64,
    /// `ln S = 2 ln r + g(v)`, the log of the balanced source.
    pub ln_source: f64,
    /// Node produced by the terminal phase (integrated in `w`).
    pub terminal: bool,
}

impl Node {
    pub fn r(&self) -> f64 {
        self.s.exp()
    }

    /// `v'(r)`.
    pub fn dv(&self) -> f64 {
        self.p * (-self.s).exp()
    }

    pub fn source(&self) -> f64 {
        self.ln_source.exp()
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    pub precision: Precision,
}

/// A complete shot from the center to the first zero.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Diagnostics {
    /// Largest relative residual of `-r v'(r) = int_0^r f t dt`.
    pub flux_residual: f64,
    /// Largest relative residual of the Green representation.
    pub green_residual: f64,
    pub monotone: bool,
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Shot {
    pub mu: f64,
    /// `r0^2 / h` with `h` the constant weight.
    pub lambda: f64,
    pub r0: f64,
    /// `ln r0`.
    pub s0: f64,
    pub weight: f64,
    /// `r0 v'(r0)`, equal to the disc slope `u_r(mu, 1)`.
    pub slope: f64,
    pub dlambda_dmu: f64,
    /// Accumulated local error, converted to `lambda`.
    pub error_estimate: f64,
    /// Value of `g(mu)`, fixing the center expansion.
    pub g_mu: f64,
    pub nodes: Vec<Node>,
    pub stats: SolverStats,
}

struct Acc<const N: usize> {
    hi: [f64; N],
    lo: [f64; N],
    t: DoubleDouble,
    dd: bool,
}

impl<const N: usize> Acc<N> {
    fn new(y: [f64; N], t: f64, dd: bool) -> Self {
        Acc { hi: y, lo: [0.0; N], t: DoubleDouble::from_f64(t), dd }
    }

    fn y(&self) -> [f64; N] {
        let mut y = self.hi;
        for i in 0..N {
            y[i] += self.lo[i];
        }
        y
    }

    fn t(&self) -> f64 {
        self.t.to_f64()
    }

    fn advance(&mut self, h: f64, dy: &[f64; N]) {
        if self.dd {
            self.t += h;
            for i in 0..N {
                let x = DoubleDouble::new(self.hi[i], self.lo[i]).add_f64(dy[i]);
                self.hi[i] = x.hi;
                self.lo[i] = x.lo;
            }
        } else {
            self.t = DoubleDouble::from_f64(self.t.hi + h);
            for i in 0..N {
                self.hi[i] += dy[i];
            }
        }
    }

    fn set_t(&mut self, t: f64) {
        self.t = DoubleDouble::from_f64(t);
    }
}

/// `ln S` and `S g'(w)` with `0 * inf` read as `0`.
fn source(model: &GrowthModel, s: f64, w: f64) -> (f64, f64, f64) {
    let (g, gp) = model.g_d1(w);
    let ln_s = 2.0 * s + g;
    let big_s = ln_s.exp();
    let sg = if big_s == 0.0 { 0.0 } else { big_s * gp };
    (ln_s, big_s, sg)
}

fn check_defined(model: &GrowthModel, mu: f64) -> Result<()> {
    for i in 1..=64 {
        let w = mu * i as f64 / 64.0;
        let (g, gp) = model.g_d1(w);
        if g.is_nan() || gp.is_nan() || g == f64::INFINITY {
            return Err(Error::domain(format!("g is undefined at v = {w} inside [0, mu]")));
        }
    }
    Ok(())
}

/// Shoots from the center with height `mu`.
pub fn integrate(model: &GrowthModel, mu: f64, config: &SolverConfig) -> Result<Shot> {
    config.validate()?;
    if !(mu > model.t0()) || !mu.is_finite() {
        return Err(Error::domain(format!("mu = {mu} must exceed t0 = {}", model.t0())));
    }
    check_defined(model, mu)?;
    let (g_mu, gp_mu) = model.g_d1(mu);
    if !g_mu.is_finite() {
        return Err(Error::Precision(format!("g(mu) = {g_mu} is not representable")));
    }
    let ln_core = g_mu + gp_mu.max(1.0).ln();
    let s_init = config.r_init_factor.ln() - 0.5 * ln_core;
    // Two-term center expansion of v and r v'.
    let e = (g_mu + 2.0 * s_init).exp();
    let fp = gp_mu * e;
    let w0 = mu - e / 4.0 + e * fp / 64.0;
    let p0 = -e / 2.0 + e * fp / 16.0;
    let psi0 = 1.0 - fp / 4.0;
    let chi0 = -fp / 2.0;
    run(model, mu, g_mu, s_init, [w0, p0, psi0, chi0], config)
}

/// Continues an outward solution from `(ln r, v, r v')`; sensitivities are
/// not tracked, so `dlambda_dmu` is `NaN`.
pub fn integrate_from(model: &GrowthModel, s: f64, w: f64, p: f64, config: &SolverConfig) -> Result<Shot> {
    config.validate()?;
    if !(w > 0.0 && p < 0.0) {
        return Err(Error::domain(format!("outward start needs v > 0 and v' < 0, got v = {w}, r v' = {p}")));
    }
    check_defined(model, w)?;
    let mut shot = run(model, f64::NAN, f64::NAN, s, [w, p, 0.0, 0.0], config)?;
    shot.dlambda_dmu = f64::NAN;
    Ok(shot)
}

fn run(model: &GrowthModel, mu: f64, g_mu: f64, s_init: f64, y0: [f64; 4], cfg: &SolverConfig) -> Result<Shot> {
    let dd = cfg.precision == Precision::PairedDouble;
    let mut stats = SolverStats { precision: cfg.precision, ..Default::default() };
    let w_top = y0[0];
    let w_switch = 0.5 * w_top.min(1.0);
    let mut nodes = Vec::new();
    let mut err_main = 0.0;

    let mut rhs = |s: f64, y: &[f64; 4]| -> [f64; 4] {
        let (_, big_s, sg) = source(model, s, y[0]);
        [y[1], -big_s, y[3], -sg * y[2]]
    };

    let mut acc = Acc::new(y0, s_init, dd);
    let push = |nodes: &mut Vec<Node>, s: f64, w: f64, p: f64, terminal: bool| {
        let (g, _) = model.g_d1(w);
        nodes.push(Node { s, w, p, ln_source: 2.0 * s + g, terminal });
    };
    push(&mut nodes, s_init, y0[0], y0[1], false);
    let mut f0 = rhs(s_init, &y0);
    stats.evaluations += 1;
    let mut h: f64 = 0.25;
    let mut ctl = PiController::default();
    // Main phase in s.
    if y0[0] > w_switch {
        loop {
            if stats.steps + stats.rejected >= cfg.max_steps {
                let y = acc.y();
                return Err(Error::Horizon { steps: cfg.max_steps, r: acc.t().exp(), v: y[0], dv: y[1] * (-acc.t()).exp() });
            }
            let s = acc.t();
            let y = acc.y();
            let (ln_src, _, _) = source(model, s, y[0]);
            if ln_src > 700.0 {
                return Err(Error::Precision(format!(
                    "source exp({ln_src:.1}) overflows at ln r = {s}; use paired-double or a smaller mu"
                )));
            }
            let gp = model.g_d1(y[0]).1;
            if gp > 0.0 {
                h = h.min(0.5 * (-0.5 * (ln_src + gp.ln())).exp());
            }
            if h < 1e-13 * s.abs().max(1.0) {
                return Err(Error::StepUnderflow { r: s.exp(), reason: format!("step {h:e} in ln r at v = {}", y[0]) });
            }
            let st = dp5_step(&mut rhs, s, &y, &f0, h);
            stats.evaluations += 6;
            let mut y1 = y;
            for i in 0..4 {
                y1[i] += st.dy[i];
            }
            if !(y1[0] > 0.5 * w_switch) {
                // Never step past the switch band.
                h *= 0.5;
                stats.rejected += 1;
                continue;
            }
            let en = error_norm(&st.err, &y, &y1, cfg.atol, cfg.rtol);
            let (ok, hn) = ctl.decide(en, h);
            if ok {
                acc.advance(h, &st.dy);
                f0 = st.f_new;
                stats.steps += 1;
                err_main += st.err[0].abs();
                let y = acc.y();
                push(&mut nodes, acc.t(), y[0], y[1], false);
                if y[0] <= w_switch {
                    break;
                }
            } else {
                stats.rejected += 1;
            }
            h = hn;
        }
    }

    // Terminal phase in w with state [s, y = 1/p, psi, chi].
    let y_main = acc.y();
    let s_sw = acc.t();
    let w_a = y_main[0];
    let (g0, gp0) = model.g_d1(0.0);
    let w_end = if g0 == f64::INFINITY || gp0.is_nan() || (g0.is_finite() && !gp0.is_finite()) {
        cfg.event_tol * w_switch
    } else {
        0.0
    };
    let mut trhs = |w: f64, z: &[f64; 4]| -> [f64; 4] {
        let (_, big_s, sg) = source(model, z[0], w);
        let y = z[1];
        [y, big_s * y * y * y, z[3] * y, -sg * z[2] * y]
    };
    let z0 = [s_sw, 1.0 / y_main[1], y_main[2], y_main[3]];
    let mut tacc = Acc::new(z0, w_a, dd);
    let mut fz = trhs(w_a, &z0);
    stats.evaluations += 1;
    let mut hw = -(w_a - w_end) / 16.0;
    let mut err_s = 0.0;
    let mut tctl = PiController::default();
    while tacc.t() > w_end {
        if stats.steps + stats.rejected >= cfg.max_steps {
            let z = tacc.y();
            return Err(Error::Horizon { steps: cfg.max_steps, r: z[0].exp(), v: tacc.t(), dv: (-z[0]).exp() / z[1] });
        }
        let w = tacc.t();
        if w - w_end <= 1e-15 * w_a {
            // Rounding-level remainder.
            tacc.set_t(w_end);
            break;
        }
        // Stretch a step that would leave a sliver before w_end.
        let last = w + 1.01 * hw <= w_end;
        if last {
            hw = w_end - w;
        }
        if hw.abs() < 1e-15 * w_a {
            return Err(Error::StepUnderflow { r: tacc.y()[0].exp(), reason: format!("terminal step {hw:e} at v = {w}") });
        }
        let z = tacc.y();
        let st = dp5_step(&mut trhs, w, &z, &fz, hw);
        stats.evaluations += 6;
        let mut z1 = z;
        for i in 0..4 {
            z1[i] += st.dy[i];
        }
        // y = 1/p may shrink to zero; only relative control keeps its sign.
        let en = error_norm_with(&st.err, &z, &z1, &[cfg.atol, f64::MIN_POSITIVE, cfg.atol, cfg.atol], cfg.rtol);
        let (ok, hn) = tctl.decide(en, hw);
        if ok {
            tacc.advance(hw, &st.dy);
            if last {
                tacc.set_t(w_end);
            }
            fz = st.f_new;
            stats.steps += 1;
            err_s += st.err[0].abs();
            let z = tacc.y();
            push(&mut nodes, z[0], tacc.t(), 1.0 / z[1], true);
        } else {
            stats.rejected += 1;
        }
        hw = hn.max(w_end - tacc.t());
        if hw >= 0.0 {
            break;
        }
    }
    let mut z = tacc.y();
    if w_end > 0.0 {
        // Linear extrapolation of ln r and psi across the excluded layer next
        // to v = 0; y and chi keep their values at v = w_end, where the
        // slope is reported.
        let d = trhs(w_end, &z);
        z[0] -= w_end * d[0];
        z[2] -= w_end * d[2];
        nodes.push(Node { s: z[0], w: 0.0, p: 1.0 / z[1], ln_source: f64::INFINITY, terminal: true });
    }
    let s0 = z[0];
    let r0 = s0.exp();
    let lambda = r0 * r0 / model.weight();
    let ds0 = -z[2] * z[1];
    let p_sw = y_main[1].abs();
    let err = 2.0 * lambda * (err_main / p_sw + err_s);
    Ok(Shot {
        mu,
        lambda,
        r0,
        s0,
        weight: model.weight(),
        slope: 1.0 / z[1],
        dlambda_dmu: 2.0 * lambda * ds0,
        error_estimate: err,
        g_mu,
        nodes,
        stats,
    })
}

fn hermite5(t: f64, h: f64, a: [f64; 3], b: [f64; 3]) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 0.5 * (t3 - 2.0 * t4 + t5);
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let d0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let d1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let d2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let d3 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
    let d4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let d5 = -d0;
    let v = a[0] * h0 + h * a[1] * h1 + h * h * a[2] * h2 + b[0] * h5 + h * b[1] * h4 + h * h * b[2] * h3;
    let dv = (a[0] * d0 + b[0] * d5) / h + a[1] * d1 + h * a[2] * d2 + b[1] * d4 + h * b[2] * d3;
    (v, dv)
}

/// Dense evaluation of a shot in its own radial variable.
#[derive(Clone, Copy, Debug)]
pub struct Sampler<'a> {
    shot: &'a Shot,
}

impl Shot {
    pub fn sampler(&self) -> Sampler<'_> {
        Sampler { shot: self }
    }

    /// Sampler of the disc solution `u(x) = v(x r0)`, `x in [0, 1]`.
    pub fn rescale_to_disc(&self) -> DiscSampler<'_> {
        DiscSampler { inner: self.sampler() }
    }

    pub fn s_first(&self) -> f64 {
        self.nodes[0].s
    }

    /// `v' < 0` at every stored node.
    pub fn is_monotone(&self) -> bool {
        self.nodes.iter().all(|n| n.p < 0.0) && self.nodes.windows(2).all(|w| w[1].w <= w[0].w)
    }

    /// Flux identity `-r v'(r) = int_0^r f(v) t dt` checked against a
    /// quadrature of the interpolated source at log-uniform checkpoints.
    /// Returns the largest residual relative to `max(|r v'|, 1e-3 |r0 v'(r0)|)`;
    /// the floor keeps the near-center checkpoints, where `r v'` is far below
    /// the absolute tolerance, from dominating.
    pub fn flux_residual(&self, model: &GrowthModel, checkpoints: usize) -> f64 {
        let smp = self.sampler();
        let last = self.nodes.len() - 1;
        // The closing node may carry an infinite slope.
        let end = if self.nodes[last].p.is_finite() && self.nodes[last].ln_source.is_finite() {
            last
        } else {
            last - 1
        };
        let mut worst: f64 = 0.0;
        let floor = 1e-3 * self.nodes[end].p.abs();
        let mut flux = -self.nodes[0].p;
        let mut seg = 0;
        let n = checkpoints.max(1);
        let (sa, sb) = (self.nodes[0].s, self.nodes[end].s);
        let mut s_prev = sa;
        for c in 1..=n {
            let target = if c == n { sb } else { sa + (sb - sa) * c as f64 / n as f64 };
            while seg < end && self.nodes[seg + 1].s <= target {
                flux += smp.segment_source(model, seg, s_prev);
                s_prev = self.nodes[seg + 1].s;
                seg += 1;
            }
            if target > s_prev {
                flux += smp.source_integral(model, s_prev, target);
                s_prev = target;
            }
            let p = if seg == end { self.nodes[end].p } else { smp.at_s(target).1 };
            worst = worst.max((flux + p).abs() / p.abs().max(floor));
        }
        worst
    }

    /// Flux and Green residuals plus monotonicity. The Green identity is
    /// checked from three interior radii, equispaced in `ln r`, to `r0`.
    pub fn diagnostics(&self, model: &GrowthModel, checkpoints: usize) -> Result<Diagnostics> {
        let (sa, sb) = (self.s_first(), self.s0);
        let mut green: f64 = 0.0;
        for k in 1..=3 {
            let s1 = sa + (sb - sa) * k as f64 / 4.0;
            green = green.max(self.green_residual_log(model, s1, sb)?.1);
        }
        Ok(Diagnostics {
            flux_residual: self.flux_residual(model, checkpoints),
            green_residual: green,
            monotone: self.is_monotone(),
            steps: self.stats.steps,
            rejected: self.stats.rejected,
            evaluations: self.stats.evaluations,
        })
    }

    /// Green identity residual between radii `r < rr` (shot coordinates):
    /// `v(r) - v(rr) = ln(rr/r) int_0^r f t dt + int_r^rr f t ln(rr/t) dt`.
    /// Returns `(absolute, relative to |v(r) - v(rr)|)`.
    pub fn green_residual(&self, model: &GrowthModel, r: f64, rr: f64) -> Result<(f64, f64)> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("Green identity needs 0 < r <= rr <= r0, got ({r}, {rr})")));
        }
        self.green_residual_log(model, r.ln(), rr.ln())
    }

    /// [`Shot::green_residual`] at `r = e^s1`, `rr = e^s2`.
    pub fn green_residual_log(&self, model: &GrowthModel, s1: f64, s2: f64) -> Result<(f64, f64)> {
        let s_end = self.nodes.last().unwrap().s;
        if !(s1 <= s2 && s2 <= s_end + 1e-15 * (1.0 + s_end.abs()) && s1.is_finite()) {
            return Err(Error::domain(format!("Green identity needs ln r <= ln rr <= ln r0, got ({s1}, {s2})")));
        }
        let smp = self.sampler();
        let flux = -self.nodes[0].p + smp.source_integral(model, self.s_first(), s1);
        let weighted = smp.weighted_source_integral(model, s1, s2);
        let lhs = smp.at_s(s1).0 - smp.at_s(s2).0;
        let res = lhs - ((s2 - s1) * flux + weighted);
        Ok((res.abs(), if lhs != 0.0 { (res / lhs).abs() } else { res.abs() }))
    }
}

/// Kernel `s2 - s = offset + (s_last - s)` with accurate terminal distances.
struct Kernel<'d> {
    offset: f64,
    dist: &'d [f64],
}

impl<'a> Sampler<'a> {
    fn seg_index(&self, s: f64) -> usize {
        let n = &self.shot.nodes;
        match n.binary_search_by(|x| x.s.total_cmp(&s)) {
            Ok(i) => i.min(n.len() - 2),
            Err(i) => i.saturating_sub(1).min(n.len() - 2),
        }
    }

    /// `(w, p)` at `s = ln r`.
    pub fn at_s(&self, s: f64) -> (f64, f64) {
        let nodes = &self.shot.nodes;
        let first = nodes[0];
        if s <= first.s {
            if self.shot.mu.is_nan() {
                return (first.w, first.p);
            }
            let e = (self.shot.g_mu + 2.0 * s).exp();
            return (self.shot.mu - e / 4.0, -e / 2.0);
        }
        let last = nodes[nodes.len() - 1];
        if s >= last.s {
            return (last.w, last.p);
        }
        let i = self.seg_index(s);
        let (a, b) = (nodes[i], nodes[i + 1]);
        if !b.terminal {
            let h = b.s - a.s;
            let t = (s - a.s) / h;
            return hermite5(t, h, [a.w, a.p, -a.source()], [b.w, b.p, -b.source()]);
        }
        let w = self.terminal_w(i, s);
        (w, 1.0 / self.terminal_y(i, w, None))
    }

    /// `y = 1/p` on terminal segment `i`, Hermite in `w` with `y' = S y^3`;
    /// quintic when the model supplies `y''`, cubic otherwise. Taking `y`
    /// from `ds/dw` instead fails once the s-steps drop below one ulp.
    fn terminal_y(&self, i: usize, w: f64, model: Option<&GrowthModel>) -> f64 {
        let (a, b) = (self.shot.nodes[i], self.shot.nodes[i + 1]);
        let jet = |n: &Node| {
            let y = 1.0 / n.p;
            let src = n.source();
            if !src.is_finite() {
                return [y, 0.0, 0.0];
            }
            let d1 = src * y * y * y;
            let d2 = match model {
                Some(m) => d1 * (2.0 * y + m.g_d1(n.w).1 + 3.0 * src * y * y),
                None => f64::NAN,
            };
            [y, d1, d2]
        };
        let (ja, jb) = (jet(&a), jet(&b));
        let h = b.w - a.w;
        let t = (w - a.w) / h;
        if ja[2].is_finite() && jb[2].is_finite() {
            return hermite5(t, h, ja, jb).0;
        }
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * ja[0] + (t3 - 2.0 * t2 + t) * h * ja[1] + (-2.0 * t3 + 3.0 * t2) * jb[0] + (t3 - t2) * h * jb[1]
    }

    /// `(s, ds/dw)` on terminal segment `i`, where `s` is Hermite in `w`.
    fn terminal_s(&self, i: usize, w: f64) -> (f64, f64) {
        let nodes = &self.shot.nodes;
        let (a, b) = (nodes[i], nodes[i + 1]);
        let sw = |n: &Node| {
            let y = 1.0 / n.p;
            let src = n.source();
            let d2 = if src.is_finite() { src * y * y * y } else { 0.0 };
            [n.s, y, d2]
        };
        let h = b.w - a.w;
        hermite5((w - a.w) / h, h, sw(&a), sw(&b))
    }

    /// `w` at `s` on terminal segment `i`.
    fn terminal_w(&self, i: usize, s: f64) -> f64 {
        let (a, b) = (self.shot.nodes[i], self.shot.nodes[i + 1]);
        if s <= a.s {
            return a.w;
        }
        if s >= b.s {
            return b.w;
        }
        match roots::brent(|w| self.terminal_s(i, w).0 - s, b.w, a.w, 0.0) {
            Ok(r) => r.x,
            Err(_) => a.w + (b.w - a.w) * (s - a.s) / (b.s - a.s),
        }
    }

    /// `(v, v')` at radius `r` in shot coordinates.
    pub fn at(&self, r: f64) -> (f64, f64) {
        if r <= 0.0 {
            return (self.shot.mu, 0.0);
        }
        let s = r.ln();
        let (w, p) = self.at_s(s);
        (w, p / r)
    }

    /// `int S ds` over `[s1, s2]` along the interpolant.
    pub fn source_integral(&self, model: &GrowthModel, s1: f64, s2: f64) -> f64 {
        self.integrate_weighted(model, s1, s2, None)
    }

    /// `int S (s2 - s) ds` over `[s1, s2]`.
    pub fn weighted_source_integral(&self, model: &GrowthModel, s1: f64, s2: f64) -> f64 {
        let nodes = &self.shot.nodes;
        let dist = self.terminal_distances(model);
        let kernel = Kernel { offset: s2 - nodes[nodes.len() - 1].s, dist: &dist };
        self.integrate_weighted(model, s1, s2, Some(&kernel))
    }

    /// `s_last - s_j` for every node, accumulated from the end as
    /// `int |y| dw` across terminal segments. Near a singular end the
    /// terminal s-steps are below one ulp of s while the source mass they
    /// carry is huge, so differencing node s values is useless there.
    fn terminal_distances(&self, model: &GrowthModel) -> Vec<f64> {
        let nodes = &self.shot.nodes;
        let last = nodes.len() - 1;
        let mut d = vec![0.0; nodes.len()];
        for j in (0..last).rev() {
            d[j] = if nodes[j + 1].terminal {
                d[j + 1] + self.y_integral(model, j, nodes[j + 1].w, nodes[j].w)
            } else {
                nodes[last].s - nodes[j].s
            };
        }
        d
    }

    /// `int |y| dw` over `[w1, w2]` on terminal segment `i`. Three-point
    /// Gauss is exact for the quintic interpolant.
    fn y_integral(&self, model: &GrowthModel, i: usize, w1: f64, w2: f64) -> f64 {
        const X: f64 = 0.774_596_669_241_483_4;
        let (c, h) = (0.5 * (w1 + w2), 0.5 * (w2 - w1));
        let y = |w: f64| self.terminal_y(i, w, Some(model)).abs();
        h * (5.0 * y(c - h * X) + 8.0 * y(c) + 5.0 * y(c + h * X)) / 9.0
    }

    fn integrate_weighted(&self, model: &GrowthModel, s1: f64, s2: f64, kernel: Option<&Kernel>) -> f64 {
        if s2 <= s1 {
            return 0.0;
        }
        let nodes = &self.shot.nodes;
        let last = nodes.len() - 1;
        let s_last = nodes[last].s;
        let mut total = 0.0;
        // Analytic center part below the first node.
        let mut a = s1;
        if a < nodes[0].s {
            let b = s2.min(nodes[0].s);
            let src = |s: f64| {
                let v = (2.0 * s + model.g(self.at_s(s).0)).exp() * kernel.map_or(1.0, |k| k.offset + (s_last - s));
                if v.is_finite() {
                    v
                } else {
                    0.0
                }
            };
            total += quad::integrate(src, a, b, QuadOptions::new(1e-300, 1e-13)).map(|q| q.value).unwrap_or(0.0);
            a = b;
        }
        let mut i = self.seg_index(a);
        while i < last {
            let (na, nb) = (nodes[i], nodes[i + 1]);
            // A terminal cluster sitting exactly at s2 still counts.
            if na.s >= s2 && !(nb.terminal && nb.s <= s2) {
                break;
            }
            total += self.segment_weighted(model, i, a, s2, kernel);
            i += 1;
        }
        total
    }

    /// `int S k ds` over the part of segment `i` inside `[s1, s2]`.
    /// Terminal segments are integrated in w (ds = y dw), where they were
    /// resolved; their s-width can fall below one ulp of s.
    fn segment_weighted(&self, model: &GrowthModel, i: usize, s1: f64, s2: f64, kernel: Option<&Kernel>) -> f64 {
        let (na, nb) = (self.shot.nodes[i], self.shot.nodes[i + 1]);
        let s_last = self.shot.nodes[self.shot.nodes.len() - 1].s;
        let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
        if nb.terminal {
            // The closing step past w_end holds y fixed and carries no source.
            if nb.s < s1 || !nb.ln_source.is_finite() {
                return 0.0;
            }
            let wa = if na.s >= s1 { na.w } else { self.terminal_w(i, s1) };
            let wb = if nb.s <= s2 { nb.w } else { self.terminal_w(i, s2) };
            if wa <= wb {
                return 0.0;
            }
            let mut f = |w: f64| {
                let s = self.terminal_s(i, w).0;
                let y = self.terminal_y(i, w, Some(model));
                let k = kernel.map_or(1.0, |k| k.offset + k.dist[i + 1] + self.y_integral(model, i, nb.w, w));
                finite((2.0 * s + model.g(w)).exp() * k * y.abs())
            };
            return quad::gk15(&mut f, wb, wa).0;
        }
        let (lo, hi) = (s1.max(na.s), nb.s.min(s2));
        if hi <= lo {
            return 0.0;
        }
        let mut f = |s: f64| finite((2.0 * s + model.g(self.at_s(s).0)).exp() * kernel.map_or(1.0, |k| k.offset + (s_last - s)));
        quad::gk15(&mut f, lo, hi).0
    }

    /// `int S ds` over segment `i` from `max(s1, s_i)` to its end.
    fn segment_source(&self, model: &GrowthModel, i: usize, s1: f64) -> f64 {
        self.segment_weighted(model, i, s1, self.shot.nodes[i + 1].s, None)
    }
}

/// The disc solution `u(x) = v(x r0)` on `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub struct DiscSampler<'a> {
    inner: Sampler<'a>,
}

impl<'a> DiscSampler<'a> {
    /// `(u(x), u'(x))`.
    pub fn at(&self, x: f64) -> (f64, f64) {
        let r0 = self.inner.shot.r0;
        if x >= 1.0 {
            let last = self.inner.shot.nodes.last().unwrap();
            return (0.0, last.p);
        }
        let (v, dv) = self.inner.at(x * r0);
        (v, dv * r0)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.at(x).0
    }
}
