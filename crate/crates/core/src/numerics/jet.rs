//! Truncated Taylor arithmetic.
//!
//! A `Jet` stores normalized Taylor coefficients `c[j] = f^(j)(t) / j!` of a
//! function at a fixed point, up to order `ORDER`. Arithmetic on jets is
//! exact up to that order, which gives analytic derivatives of composite
//! nonlinearities (iterated exponentials in particular) without symbolic
//! algebra or finite differences.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Highest derivative order carried by a jet.
pub const ORDER: usize = 5;
const LEN: usize = ORDER + 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; LEN],
}

const FACTORIAL: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];

impl Jet {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = x;
        Jet { c }
    }

    /// The identity function expanded at `t`.
    pub fn variable(t: f64) -> Self {
        let mut c = [0.0; LEN];
        c[0] = t;
        c[1] = 1.0;
        Jet { c }
    }

    /// Builds a jet from plain derivative values `[f, f', f'', ...]`.
    pub fn from_derivatives(d: &[f64]) -> Self {
        let mut c = [0.0; LEN];
        for (j, v) in d.iter().take(LEN).enumerate() {
            c[j] = v / FACTORIAL[j];
        }
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// `order`-th derivative at the expansion point.
    pub fn derivative(&self, order: usize) -> f64 {
        self.c[order] * FACTORIAL[order]
    }

    pub fn derivatives(&self) -> [f64; LEN] {
        let mut d = [0.0; LEN];
        for j in 0..LEN {
            d[j] = self.derivative(j);
        }
        d
    }

    /// Jet of the derivative function; loses the top order.
    pub fn differentiate(&self) -> Self {
        let mut c = [0.0; LEN];
        for j in 0..ORDER {
            c[j] = (j as f64 + 1.0) * self.c[j + 1];
        }
        Jet { c }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut c = self.c;
        c.iter_mut().for_each(|x| *x *= s);
        Jet { c }
    }

    pub fn exp(&self) -> Self {
        let mut e = [0.0; LEN];
        e[0] = self.c[0].exp();
        for n in 1..LEN {
            let mut acc = 0.0;
            for k in 1..=n {
                acc += k as f64 * self.c[k] * e[n - k];
            }
            e[n] = acc / n as f64;
        }
        Jet { c: e }
    }

    pub fn ln(&self) -> Self {
        let a0 = self.c[0];
        let mut l = [0.0; LEN];
        l[0] = a0.ln();
        for n in 1..LEN {
            let mut acc = 0.0;
            for k in 1..n {
                acc += k as f64 * l[k] * self.c[n - k];
            }
            l[n] = (self.c[n] - acc / n as f64) / a0;
        }
        Jet { c: l }
    }

    /// `self^x` for a positive base.
    pub fn powf(&self, x: f64) -> Self {
        (self.ln().scale(x)).exp()
    }

    pub fn recip(&self) -> Self {
        Jet::constant(1.0) / *self
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(o.c) {
            *a += b;
        }
        Jet { c }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.c[0] += o;
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; LEN];
        for n in 0..LEN {
            for i in 0..=n {
                c[n] += self.c[i] * o.c[n - i];
            }
        }
        Jet { c }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, o: f64) -> Jet {
        self.scale(o)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, b: Jet) -> Jet {
        let mut q = [0.0; LEN];
        for n in 0..LEN {
            let mut acc = self.c[n];
            for i in 1..=n {
                acc -= b.c[i] * q[n - i];
            }
            q[n] = acc / b.c[0];
        }
        Jet { c: q }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn exp_of_exp_matches_hand_derivatives() {
        // h(t) = e^{e^t}: h' = e^t h, h'' = (e^t + e^{2t}) h,
        // h''' = (e^t + 3e^{2t} + e^{3t}) h.
        let t = 0.7f64;
        let h = Jet::variable(t).exp().exp();
        let e = t.exp();
        let h0 = e.exp();
        assert!(close(h.derivative(0), h0, 1e-15));
        assert!(close(h.derivative(1), e * h0, 1e-15));
        assert!(close(h.derivative(2), (e + e * e) * h0, 1e-14));
        assert!(close(h.derivative(3), (e + 3.0 * e * e + e * e * e) * h0, 1e-14));
    }

    #[test]
    fn powf_matches_falling_factorials() {
        let t = 1.3f64;
        let p = 3.5;
        let j = Jet::variable(t).powf(p);
        let mut coef = 1.0;
        for k in 0..=ORDER {
            let expected = coef * t.powf(p - k as f64);
            assert!(close(j.derivative(k), expected, 1e-13), "order {k}");
            coef *= p - k as f64;
        }
    }

    #[test]
    fn ln_inverts_exp() {
        let j = (Jet::variable(0.4) * Jet::variable(0.4) + 1.0).exp().ln();
        let expect = Jet::variable(0.4) * Jet::variable(0.4) + 1.0;
        for k in 0..=ORDER {
            assert!(close(j.c[k], expect.c[k], 1e-14));
        }
    }

    #[test]
    fn division_and_differentiation() {
        // d/dt (1/t) = -1/t^2 and the third derivative of 1/t is -6/t^4.
        let t = 2.0;
        let r = Jet::variable(t).recip();
        assert!(close(r.differentiate().value(), -0.25, 1e-15));
        assert!(close(r.derivative(3), -6.0 / 16.0, 1e-15));
    }
}
