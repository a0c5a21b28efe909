//! Bracketed scalar root finding and one-dimensional extremum search.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

const MAX_ITER: usize = 500;

/// Brent's method: bisection safeguarded by secant and inverse quadratic
/// interpolation. `f(a)` and `f(b)` must have opposite signs (or one of them
/// vanish). Terminates when the bracket is narrower than
/// `xtol + 4 eps |x|`.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if !fa.is_finite() || !fb.is_finite() {
        return Err(Error::Bracket(format!(
            "non-finite value at bracket end: f({a:e}) = {fa:e}, f({b:e}) = {fb:e}"
        )));
    }
    if fa == 0.0 {
        return Ok(Root { x: a, fx: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: 0.0, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{a:e}, {b:e}]: f = ({fa:e}, {fb:e})"
        )));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(Root { x: b, fx: fb, iterations: iter });
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Bracket(format!("non-finite value f({b:e}) = {fb:e}")));
        }
    }
    Err(Error::Bracket(format!(
        "Brent iteration did not converge in {MAX_ITER} steps"
    )))
}

/// Plain bisection to an absolute bracket width `xtol`.
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let mut fa = f(a);
    let fb = f(b);
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(Error::Bracket(format!(
            "no sign change on [{a:e}, {b:e}]: f = ({fa:e}, {fb:e})"
        )));
    }
    let mut iterations = 0;
    while (b - a).abs() > xtol && iterations < 2000 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Ok(Root { x: m, fx: 0.0, iterations });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        iterations += 1;
    }
    let x = 0.5 * (a + b);
    Ok(Root { x, fx: f(x), iterations })
}

/// Golden-section search for a maximum of a unimodal function on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > xtol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Golden-section search for a minimum. Returns `(argmin, min)`.
pub fn golden_min<F>(mut f: F, a: f64, b: f64, xtol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (x, v) = golden_max(|x| -f(x), a, b, xtol);
    (x, -v)
}
