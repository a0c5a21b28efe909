//! Dormand–Prince 5(4) embedded Runge–Kutta pair with PI step control.
//!
//! The stepper returns increments rather than updated states so that the
//! caller can accumulate the state in extended precision.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
// Fifth-order minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Step<const N: usize> {
    /// Fifth-order increment `y(t + h) - y(t)`.
    pub dy: [f64; N],
    /// Local error estimate.
    pub err: [f64; N],
    /// Derivative at the new point (first stage of the next step).
    pub f_new: [f64; N],
}

/// One Dormand–Prince step from `(t, y)` with derivative `f0 = f(t, y)`.
pub fn dp5_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], f0: &[f64; N], h: f64) -> Step<N>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    k[0] = *f0;
    for s in 1..7 {
        let mut ys = *y;
        for (i, yi) in ys.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..s {
                acc += A[s][j] * k[j][i];
            }
            *yi += h * acc;
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut dy = [0.0; N];
    let mut err = [0.0; N];
    for i in 0..N {
        let (mut b, mut e) = (0.0, 0.0);
        for s in 0..7 {
            b += B[s] * k[s][i];
            e += E[s] * k[s][i];
        }
        dy[i] = h * b;
        err[i] = h * e;
    }
    Step { dy, err, f_new: k[6] }
}

/// Scaled RMS error norm; `NaN` components yield `inf`.
pub fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], atol: f64, rtol: f64) -> f64 {
    error_norm_with(err, y0, y1, &[atol; N], rtol)
}

/// [`error_norm`] with a separate absolute tolerance per component.
pub fn error_norm_with<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], atol: &[f64; N], rtol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = atol[i] + rtol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        if !r.is_finite() {
            return f64::INFINITY;
        }
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

/// Proportional-integral step size controller.
#[derive(Clone, Copy, Debug)]
pub struct PiController {
    pub safety: f64,
    pub alpha: f64,
    pub beta: f64,
    pub min_factor: f64,
    pub max_factor: f64,
    prev_err: f64,
}

impl Default for PiController {
    fn default() -> Self {
        PiController {
            safety: 0.9,
            alpha: 0.7 / 5.0,
            beta: 0.4 / 5.0,
            min_factor: 0.2,
            max_factor: 5.0,
            prev_err: 1e-4,
        }
    }
}

impl PiController {
    /// Returns `(accept, next_h)` for an error norm from a step of size `h`.
    pub fn decide(&mut self, err: f64, h: f64) -> (bool, f64) {
        if !err.is_finite() {
            return (false, 0.25 * h);
        }
        if err <= 1.0 {
            let e = err.max(1e-10);
            let fac = self.safety * e.powf(-self.alpha) * self.prev_err.powf(self.beta);
            self.prev_err = e;
            (true, h * fac.clamp(self.min_factor, self.max_factor))
        } else {
            let fac = (self.safety * err.powf(-0.2)).max(self.min_factor);
            (false, h * fac)
        }
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
/// Returns the final state and the number of accepted steps.
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    atol: f64,
    rtol: f64,
) -> crate::error::Result<([f64; N], usize)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let dir = (t1 - t0).signum();
    let mut t = t0;
    let mut y = y0;
    let mut fy = f(t, &y);
    let mut h = dir * (t1 - t0).abs().min(1e-2 * (1.0 + t0.abs()));
    let mut ctl = PiController::default();
    let mut steps = 0;
    while (t1 - t) * dir > 0.0 {
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < 1e-14 * (1.0 + t.abs()) && (t1 - t).abs() > h.abs() {
            return Err(crate::error::Error::StepUnderflow {
                r: t,
                reason: "generic integrator step underflow".into(),
            });
        }
        let st = dp5_step(&mut f, t, &y, &fy, h);
        let mut y1 = y;
        for i in 0..N {
            y1[i] += st.dy[i];
        }
        let (ok, hn) = ctl.decide(error_norm(&st.err, &y, &y1, atol, rtol), h);
        if ok {
            t = if (t + h - t1) * dir >= 0.0 { t1 } else { t + h };
            y = y1;
            fy = st.f_new;
            steps += 1;
        }
        h = hn;
    }
    Ok((y, steps))
}
