//! Paired-double ("double-double") arithmetic.
//!
//! A value is the unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`,
//! giving roughly 106 bits of significand. Only the operations the
//! integrator needs for compensated state accumulation are provided.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum: `a + b == s + e` exactly.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Error-free sum assuming `|a| >= |b|`.
#[inline]
pub fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// Error-free product via fused multiply-add.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };

    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        DoubleDouble { hi, lo }
    }

    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        let (hi, lo) = quick_two_sum(s, e + self.lo);
        DoubleDouble { hi, lo }
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        DoubleDouble { hi, lo }
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleDouble::from_f64(self.hi.sqrt());
        }
        // One Newton step on the double approximation.
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let r = ((self.hi - p) - e + self.lo) / (2.0 * x);
        let (hi, lo) = quick_two_sum(x, r);
        DoubleDouble { hi, lo }
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
}

impl Neg for DoubleDouble {
    type Output = DoubleDouble;
    fn neg(self) -> Self {
        DoubleDouble { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, b: DoubleDouble) -> DoubleDouble {
        let (s1, s2) = two_sum(self.hi, b.hi);
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        DoubleDouble { hi, lo }
    }
}

impl Add<f64> for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, b: f64) -> DoubleDouble {
        self.add_f64(b)
    }
}

impl AddAssign<f64> for DoubleDouble {
    fn add_assign(&mut self, b: f64) {
        *self = self.add_f64(b);
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, b: DoubleDouble) {
        *self = *self + b;
    }
}

impl Sub for DoubleDouble {
    type Output = DoubleDouble;
    fn sub(self, b: DoubleDouble) -> DoubleDouble {
        self + (-b)
    }
}

impl Sub<f64> for DoubleDouble {
    type Output = DoubleDouble;
    fn sub(self, b: f64) -> DoubleDouble {
        self.add_f64(-b)
    }
}

impl Mul for DoubleDouble {
    type Output = DoubleDouble;
    fn mul(self, b: DoubleDouble) -> DoubleDouble {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Mul<f64> for DoubleDouble {
    type Output = DoubleDouble;
    fn mul(self, b: f64) -> DoubleDouble {
        self.mul_f64(b)
    }
}

impl Div for DoubleDouble {
    type Output = DoubleDouble;
    fn div(self, b: DoubleDouble) -> DoubleDouble {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo }.add_f64(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} + {:e}", self.hi, self.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn keeps_bits_lost_by_plain_double() {
        let one = DoubleDouble::from_f64(1.0);
        let x = one + 1e-20;
        assert_eq!(x.hi, 1.0);
        assert_eq!(x.lo, 1e-20);
        assert_eq!((x - 1.0).to_f64(), 1e-20);
    }

    #[test]
    fn third_times_three_is_one() {
        let third = DoubleDouble::from_f64(1.0) / DoubleDouble::from_f64(3.0);
        let back = third * 3.0;
        assert!((back - 1.0).to_f64().abs() < 1e-31);
    }

    #[test]
    fn sqrt_two_squared() {
        let r = DoubleDouble::from_f64(2.0).sqrt();
        assert!(((r * r) - 2.0).to_f64().abs() < 1e-30);
    }

    #[test]
    fn compensated_accumulation_beats_naive_sum() {
        let mut naive = 1.0f64;
        let mut dd = DoubleDouble::from_f64(1.0);
        for _ in 0..1_000_000 {
            naive += 1e-17;
            dd += 1e-17;
        }
        assert_eq!(naive, 1.0);
        assert!(((dd - 1.0).to_f64() - 1e-11).abs() < 1e-24);
    }

    proptest! {
        #[test]
        fn add_then_subtract_is_exact_to_106_bits(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let x = DoubleDouble::from_f64(a) + DoubleDouble::from_f64(b);
            let back = (x - DoubleDouble::from_f64(b)).to_f64();
            prop_assert!((back - a).abs() <= 1e-25 * (1.0 + a.abs().max(b.abs())));
        }

        #[test]
        fn two_prod_is_error_free(a in -1e100f64..1e100, b in -1e100f64..1e100) {
            let (p, e) = two_prod(a, b);
            prop_assert!(e.abs() <= p.abs() * f64::EPSILON);
        }
    }
}
