//! Energy recurrence sequences and the oscillation constants derived from
//! them.
//!
//! Each step of the recurrence is an implicit scalar equation with a trivial
//! root at ratio 1. Writing the ratio as `1 - x` and dividing the step
//! function by `x` removes that root, leaving a function with exactly one
//! sign change on `(0, 1)`, which is solved by Brent's method to machine
//! precision.

use crate::error::{Error, Result};
use crate::numerics::roots;
use serde::{Deserialize, Serialize};

/// Above this exponent the exponential-growth branch is used instead.
pub const LARGE_P: f64 = 1e6;
const BRACKET_EPS: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `q > 1`: sequences driven by the height ratios `delta`.
    Power,
    /// `q = 1`: sequences driven by the ratios `eta`.
    Exponential,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RecurrenceRow {
    pub k: usize,
    pub a: f64,
    pub delta: f64,
    pub eta: f64,
    pub eta_tilde: f64,
    pub delta_star: f64,
    pub eta_star: f64,
    pub alpha_star: f64,
    /// Ratio to the next row: `delta_{k+1}/delta_k` or `eta_{k+1}/eta_k`.
    pub next_ratio: f64,
    /// Absolute value of the step function at the ratio that produced this row.
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RecurrenceTable {
    pub q: f64,
    #[serde(with = "crate::ext_f64")]
    pub p: f64,
    pub branch: Branch,
    pub rows: Vec<RecurrenceRow>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RowCheck {
    pub k: usize,
    pub identity_residual: f64,
    pub partial_sum: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableReport {
    pub rows: Vec<RowCheck>,
    pub max_identity_residual: f64,
    pub a_strictly_decreasing: bool,
    pub heights_strictly_decreasing: bool,
    pub ratios_in_unit_interval: bool,
    pub alpha_star_increasing_below_two: bool,
}

/// Conjugate exponent of `q`, with `q = 1` mapped to infinity.
pub fn conjugate(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else {
        q / (q - 1.0)
    }
}

/// `(step(x)/x, step(x))` for the power branch with ratio `d = 1 - x`.
fn power_step(p: f64, a: f64, x: f64) -> (f64, f64) {
    let c = 2.0 * p / (2.0 + a);
    // 1 - (1 - x)^p without cancellation.
    let m = -(p * (-x).ln_1p()).exp_m1();
    (c - m / x, c * x - m)
}

/// `(step(x)/x, step(x))` for the exponential branch with ratio `y = 1 - x`.
fn exp_step(a: f64, x: f64) -> (f64, f64) {
    let c = 2.0 / (2.0 + a);
    let l = -(-x).ln_1p();
    (c * l / x - 1.0, c * l - x)
}

fn solve_ratio(branch: Branch, p: f64, a: f64) -> Result<(f64, f64)> {
    let chi = |x: f64| match branch {
        Branch::Power => power_step(p, a, x).0,
        Branch::Exponential => exp_step(a, x).0,
    };
    let root = roots::brent(chi, BRACKET_EPS, 1.0 - BRACKET_EPS, 0.0)
        .map_err(|e| Error::Bracket(format!("recurrence step with a = {a:e}: {e}")))?;
    let x = root.x;
    let resid = match branch {
        Branch::Power => power_step(p, a, x).1,
        Branch::Exponential => exp_step(a, x).1,
    };
    Ok((x, resid.abs()))
}

impl RecurrenceTable {
    /// Builds rows `k = 1..=k_max`.
    pub fn build(q: f64, k_max: usize, tol: f64) -> Result<Self> {
        if !(1.0..2.0).contains(&q) {
            return Err(Error::domain(format!("q must lie in [1, 2), got {q}")));
        }
        if k_max < 1 {
            return Err(Error::domain("k_max must be at least 1"));
        }
        if !(tol > 0.0) {
            return Err(Error::domain(format!("tol must be positive, got {tol}")));
        }
        let p = conjugate(q);
        let branch = if p > LARGE_P { Branch::Exponential } else { Branch::Power };
        let mut rows = Vec::with_capacity(k_max);
        let (mut a, mut h) = (2.0, 1.0);
        let mut residual = 0.0;
        for k in 1..=k_max {
            let (x, next_res) = solve_ratio(branch, p, a)?;
            if next_res > tol {
                return Err(Error::Bracket(format!(
                    "recurrence row {}: residual {next_res:e} exceeds {tol:e}",
                    k + 1
                )));
            }
            let ratio = 1.0 - x;
            rows.push(make_row(branch, p, q, k, a, h, ratio, residual));
            // Next a from the step identity; algebraically equal to the
            // defining update but free of the 2 - (...) cancellation.
            a = match branch {
                Branch::Power => (2.0 * (p - 1.0) * x - a) / (1.0 - x),
                Branch::Exponential => (2.0 + a) * x - a,
            };
            h *= ratio;
            residual = next_res;
        }
        Ok(RecurrenceTable { q, p, branch, rows })
    }

    pub fn row(&self, k: usize) -> Result<&RecurrenceRow> {
        k.checked_sub(1)
            .and_then(|i| self.rows.get(i))
            .ok_or_else(|| Error::domain(format!("row {k} not in table of {} rows", self.rows.len())))
    }

    /// Admissible interval `[lower, upper]` for [`alpha`](Self::alpha) at row `k`.
    pub fn alpha_interval(&self, k: usize) -> Result<(f64, f64)> {
        let r = self.row(k)?;
        let top = match self.branch {
            Branch::Power => r.delta,
            Branch::Exponential => r.eta,
        };
        Ok((top * r.next_ratio, top))
    }

    /// The curve exponent function between the `k`-th top and the next one.
    pub fn alpha(&self, k: usize, x: f64) -> Result<f64> {
        let r = self.row(k)?;
        let (lo, hi) = self.alpha_interval(k)?;
        let slack = 1e-12 * hi;
        if !(x >= lo - slack && x <= hi + slack) {
            return Err(Error::domain(format!("x = {x} outside [{lo}, {hi}] for k = {k}")));
        }
        let s = x / hi;
        Ok(match self.branch {
            Branch::Power => {
                let p = self.p;
                2.0 * s.powf(p) / (1.0 - (2.0 * p / (2.0 + r.a)) * (1.0 - s))
            }
            Branch::Exponential => 2.0 * s / (1.0 - (2.0 / (2.0 + r.a)) * (1.0 / s).ln()),
        })
    }

    /// Identity residuals, partial sums and monotonicity flags.
    pub fn verify(&self) -> TableReport {
        let mut rows = Vec::with_capacity(self.rows.len());
        let (mut sum_ratio, mut partial) = (0.0, 0.0);
        let mut max_res: f64 = 0.0;
        for r in &self.rows {
            sum_ratio += 2.0 * r.a / r.eta_tilde;
            partial += r.a;
            let res = (r.eta_tilde * sum_ratio - (2.0 + r.a)).abs();
            max_res = max_res.max(res);
            rows.push(RowCheck { k: r.k, identity_residual: res, partial_sum: partial });
        }
        let dec = |f: &dyn Fn(&RecurrenceRow) -> f64| self.rows.windows(2).all(|w| f(&w[1]) < f(&w[0]));
        let heights = match self.branch {
            Branch::Power => dec(&|r| r.delta),
            Branch::Exponential => dec(&|r| r.eta) && self.rows.iter().all(|r| r.delta == 1.0),
        };
        TableReport {
            rows,
            max_identity_residual: max_res,
            a_strictly_decreasing: dec(&|r| r.a) && self.rows.iter().all(|r| r.a > 0.0 && r.a <= 2.0),
            heights_strictly_decreasing: heights,
            ratios_in_unit_interval: self.rows.iter().all(|r| r.next_ratio > 0.0 && r.next_ratio < 1.0),
            alpha_star_increasing_below_two: self.rows.windows(2).all(|w| w[1].alpha_star > w[0].alpha_star)
                && self.rows.iter().all(|r| r.alpha_star < 2.0),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn make_row(branch: Branch, p: f64, q: f64, k: usize, a: f64, h: f64, ratio: f64, residual: f64) -> RecurrenceRow {
    match branch {
        Branch::Power => {
            let s = 1.0 - a / (2.0 * (p - 1.0));
            let delta_star = s * h;
            let eta = h.powf(p);
            RecurrenceRow {
                k,
                a,
                delta: h,
                eta,
                eta_tilde: eta.powf(1.0 / q),
                delta_star,
                eta_star: delta_star.powf(p),
                alpha_star: (2.0 + a) * s.powf(p - 1.0),
                next_ratio: ratio,
                residual,
            }
        }
        Branch::Exponential => {
            let e = (-a / 2.0).exp();
            RecurrenceRow {
                k,
                a,
                delta: 1.0,
                eta: h,
                eta_tilde: h,
                delta_star: 1.0,
                eta_star: e * h,
                alpha_star: (2.0 + a) * e,
                next_ratio: ratio,
                residual,
            }
        }
    }
}
