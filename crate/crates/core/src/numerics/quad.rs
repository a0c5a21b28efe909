//! Adaptive Gauss–Kronrod quadrature.

use crate::error::{Error, Result};
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { abs_tol: 1e-14, rel_tol: 1e-12, max_intervals: 2000 }
    }
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions { abs_tol, rel_tol, ..Default::default() }
    }
}

/// One 15-point Kronrod panel; returns (Kronrod value, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = WGK[7] * fc;
    let mut rg = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * h, ((rk - rg) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Panel {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive integration of `f` over a finite interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, evals: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand on [{a:e}, {b:e}]")));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature(format!(
                "no convergence on [{a:e}, {b:e}] after {} panels: value {total:e}, error {err:e}",
                heap.len()
            )));
        }
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a.min(p.b) || m >= p.a.max(p.b) {
            // Panel cannot be split further; accept the current estimate.
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Panel { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Panel { a: m, b: p.b, value: v2, error: e2 });
    }
    // Re-sum to shed the drift of incremental updates.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Quad { value, error, evals })
}

/// Integral over `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_inf<F: FnMut(f64) -> f64>(mut f: F, a: f64, opts: QuadOptions) -> Result<Quad> {
    integrate(
        |t| {
            let u = 1.0 - t;
            let v = f(a + t / u) / (u * u);
            if v.is_finite() { v } else { 0.0 }
        },
        0.0,
        1.0,
        opts,
    )
}

/// Integral over `(-inf, b]`.
pub fn integrate_from_neg_inf<F: FnMut(f64) -> f64>(mut f: F, b: f64, opts: QuadOptions) -> Result<Quad> {
    integrate_to_inf(|x| f(-x), -b, opts)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton's
/// method on the three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_panel_is_exact_for_degree_22() {
        let mut f = |x: f64| x.powi(22) + 3.0 * x.powi(7);
        let (v, _) = gk15(&mut f, 0.0, 1.0);
        assert!((v - (1.0 / 23.0 + 3.0 / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let q = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::new(1e-13, 1e-13)).unwrap();
        assert!((q.value - 2.0).abs() < 1e-12, "{}", q.value);
    }

    #[test]
    fn semi_infinite_tails() {
        let q = integrate_to_inf(|x: f64| (-x).exp(), 0.0, QuadOptions::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-13);
        let g = integrate_from_neg_inf(|x: f64| (-x * x).exp(), 0.0, QuadOptions::default()).unwrap();
        assert!((g.value - 0.5 * std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn gauss_legendre_weights_and_exactness() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            let deg = 2 * n - 2;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert!((s - 2.0 / (deg as f64 + 1.0)).abs() < 1e-14, "n = {n}");
        }
    }
}
