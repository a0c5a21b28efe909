//! Limit profiles of the rescaled bubbles.
//!
//! With `X = ln b + a ln r` and `sigma` the logistic function,
//! `z = ln(2a^2 b) - (2-a) ln r - 2 softplus(X)`,
//! `r z' = -(2-a) - 2a sigma(X)`, `r^2 e^z = 2a^2 sigma(1-sigma)` and the
//! cumulative mass is `2a sigma(X)`. These forms never overflow, even for
//! tiny `a` where `b` is huge.

use crate::error::{Error, Result};
use crate::numerics::quad::{self, QuadOptions};
use crate::numerics::{logistic, softplus};
use crate::recurrence::RecurrenceTable;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LimitProfile {
    pub k: usize,
    pub a: f64,
    pub b: f64,
    pub ln_b: f64,
}

impl LimitProfile {
    pub fn new(k: usize, a: f64) -> Result<Self> {
        if !(a > 0.0 && a <= 2.0) {
            return Err(Error::domain(format!("profile exponent a must lie in (0, 2], got {a}")));
        }
        let ln_b = a * (std::f64::consts::SQRT_2 / a).ln();
        Ok(LimitProfile { k, a, b: ln_b.exp(), ln_b })
    }

    pub fn from_table(table: &RecurrenceTable, k: usize) -> Result<Self> {
        LimitProfile::new(k, table.row(k)?.a)
    }

    /// Normalization point `a / sqrt 2`, where `b r^a = 1`.
    pub fn center(&self) -> f64 {
        self.a / std::f64::consts::SQRT_2
    }

    fn x(&self, r: f64) -> f64 {
        self.ln_b + self.a * r.ln()
    }

    fn check(&self, r: f64) -> Result<()> {
        if r > 0.0 || (r == 0.0 && self.a == 2.0) {
            Ok(())
        } else {
            Err(Error::domain(format!("profile with a = {} is singular at r = {r}", self.a)))
        }
    }

    pub fn z(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        let base = (2.0 * self.a * self.a).ln() + self.ln_b;
        if r == 0.0 {
            return Ok(base);
        }
        Ok(base - (2.0 - self.a) * r.ln() - 2.0 * softplus(self.x(r)))
    }

    pub fn z_prime(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok((-(2.0 - self.a) - 2.0 * self.a * logistic(self.x(r))) / r)
    }

    pub fn z_double_prime(&self, r: f64) -> Result<f64> {
        self.check(r)?;
        if r == 0.0 {
            return Ok(-2.0 * self.a * self.a * self.b);
        }
        let s = logistic(self.x(r));
        let a = self.a;
        Ok(((2.0 - a) + 2.0 * a * s - 2.0 * a * a * s * (1.0 - s)) / (r * r))
    }

    /// `-z'' - z'/r - e^z`, each term from its own closed form.
    pub fn ode_residual(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::domain(format!("ODE residual needs r > 0, got {r}")));
        }
        Ok(-self.z_double_prime(r)? - self.z_prime(r)? / r - self.z(r)?.exp())
    }

    /// `r^2 e^{z(r)}`, maximal with value `a^2/2` at the center.
    pub fn r2_ez(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let s = logistic(self.x(r));
        2.0 * self.a * self.a * s * (1.0 - s)
    }

    /// `(argmax, max)` of `r^2 e^z`.
    pub fn peak(&self) -> (f64, f64) {
        (self.center(), self.a * self.a / 2.0)
    }

    /// `int_0^R e^z r dr`; `R = inf` gives exactly `2a`.
    pub fn mass(&self, r: f64) -> Result<f64> {
        if r.is_nan() || r < 0.0 {
            return Err(Error::domain(format!("mass radius must be >= 0, got {r}")));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        if r.is_infinite() {
            return Ok(2.0 * self.a);
        }
        Ok(2.0 * self.a * logistic(self.x(r)))
    }

    /// Quadrature of `e^z r dr` over `[lo, hi]`, computed as `r^2 e^{z(r)}`
    /// in `s = ln r` from the value formula only. Infinite ends are allowed.
    pub fn mass_quadrature(&self, lo: f64, hi: f64, opts: QuadOptions) -> Result<f64> {
        let f = |s: f64| {
            let r = s.exp();
            (2.0 * s + self.z(r).unwrap_or(f64::NEG_INFINITY)).exp()
        };
        let (sl, sh) = (lo.ln(), hi.ln());
        let mid = if sl.is_finite() && sh.is_finite() {
            quad::integrate(f, sl, sh, opts)?.value
        } else {
            // Split at the center so each tail is semi-infinite.
            let c = self.center().ln().clamp(sl, sh);
            let left = if sl.is_finite() {
                quad::integrate(f, sl, c, opts)?.value
            } else {
                quad::integrate_from_neg_inf(f, c, opts)?.value
            };
            let right = if sh.is_finite() {
                quad::integrate(f, c, sh, opts)?.value
            } else {
                quad::integrate_to_inf(f, c, opts)?.value
            };
            left + right
        };
        Ok(mid)
    }
}
