//! The solution curve `mu -> (lambda(mu), u_r(mu, 1))` and its oscillations.
//!
//! Shots for distinct `mu` run on the rayon pool; the diagram is assembled
//! in grid order, so identical inputs give identical diagrams.

use crate::analysis;
use crate::error::{Error, Result};
use crate::growth::GrowthModel;
use crate::numerics::roots;
use crate::shooting::{integrate, Shot, SolverConfig};
use crate::singular::SingularSolution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DiagramPoint {
    pub mu: f64,
    pub lambda: f64,
    pub r0: f64,
    /// `u_r(mu, 1)`.
    pub slope: f64,
    pub dlambda_dmu: f64,
    pub error_estimate: f64,
    /// Crossings with the reference `V*` on `(0, min(r0, R*))`.
    pub crossings: Option<usize>,
    /// Error kind and message when the shot failed.
    pub failure: Option<(String, String)>,
}

impl DiagramPoint {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    fn failed(mu: f64, e: &Error) -> Self {
        DiagramPoint {
            mu,
            lambda: f64::NAN,
            r0: f64::NAN,
            slope: f64::NAN,
            dlambda_dmu: f64::NAN,
            error_estimate: f64::NAN,
            crossings: None,
            failure: Some((e.kind().to_string(), e.to_string())),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Diagram {
    pub points: Vec<DiagramPoint>,
    pub lambda_star: Option<f64>,
    pub slope_star: Option<f64>,
}

impl Diagram {
    /// Points whose shots succeeded, in grid order.
    pub fn accepted(&self) -> impl Iterator<Item = &DiagramPoint> {
        self.points.iter().filter(|p| p.ok())
    }

    pub fn failures(&self) -> usize {
        self.points.len() - self.accepted().count()
    }
}

fn point(model: &GrowthModel, mu: f64, cfg: &SolverConfig, reference: Option<&SingularSolution>) -> DiagramPoint {
    let shot = match integrate(model, mu, cfg) {
        Ok(s) => s,
        Err(e) => return DiagramPoint::failed(mu, &e),
    };
    let crossings = match reference {
        Some(sol) => match analysis::intersections_with_singular(&shot, sol, f64::INFINITY, 1e-10) {
            Ok(rep) => Some(rep.count),
            Err(e) => return DiagramPoint::failed(mu, &e),
        },
        None => None,
    };
    from_shot(&shot, crossings)
}

fn from_shot(shot: &Shot, crossings: Option<usize>) -> DiagramPoint {
    DiagramPoint {
        mu: shot.mu,
        lambda: shot.lambda,
        r0: shot.r0,
        slope: shot.slope,
        dlambda_dmu: shot.dlambda_dmu,
        error_estimate: shot.error_estimate,
        crossings,
        failure: None,
    }
}

/// Shoots every `mu` in `mu_grid` (strictly increasing, above `t0`).
pub fn trace(model: &GrowthModel, mu_grid: &[f64], cfg: &SolverConfig, reference: Option<&SingularSolution>) -> Result<Diagram> {
    cfg.validate()?;
    if mu_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("mu grid must be strictly increasing"));
    }
    if let Some(&m) = mu_grid.first() {
        if !(m > model.t0()) {
            return Err(Error::domain(format!("mu grid starts at {m}, not above t0 = {}", model.t0())));
        }
    }
    let points: Vec<DiagramPoint> = mu_grid.par_iter().map(|&mu| point(model, mu, cfg, reference)).collect();
    Ok(Diagram {
        points,
        lambda_star: reference.map(|s| s.lambda_star),
        slope_star: reference.map(|s| s.slope_star),
    })
}

/// `n` values of `mu` with `ln g(mu)` uniformly spaced; needs `g > 0` on
/// the range.
pub fn g_grid(model: &GrowthModel, mu_min: f64, mu_max: f64, n: usize) -> Result<Vec<f64>> {
    if !(mu_max > mu_min) || n < 2 {
        return Err(Error::domain("g grid needs mu_min < mu_max and at least 2 points"));
    }
    let (a, b) = (model.eval_g(mu_min)?, model.eval_g(mu_max)?);
    if !(a > 0.0 && b > a) {
        return Err(Error::domain(format!("g grid needs 0 < g(mu_min) < g(mu_max), got {a}, {b}")));
    }
    let (la, lb) = (a.ln(), b.ln());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let y = (la + (lb - la) * i as f64 / (n - 1) as f64).exp();
        let mu = if i == 0 {
            mu_min
        } else if i == n - 1 {
            mu_max
        } else {
            model.g_inverse(y)?
        };
        out.push(mu);
    }
    if out.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("g grid is not strictly increasing; g is not monotone on the range"));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TurningPoint {
    pub mu: f64,
    pub lambda: f64,
    pub kind: Extremum,
    /// Grid interval containing the sign change of `d lambda / d mu`.
    pub bracket: (f64, f64),
    pub bracket_lambda: (f64, f64),
    /// The extremum value dominates both bracket ends and the derivative
    /// was resolved.
    pub resolved: bool,
}

/// Grid derivative: the variational `d lambda / d mu` where finite,
/// otherwise central differences.
fn slopes(pts: &[&DiagramPoint]) -> Vec<f64> {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let d = pts[i].dlambda_dmu;
            if d.is_finite() {
                return d;
            }
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (pts[b].lambda - pts[a].lambda) / (pts[b].mu - pts[a].mu)
        })
        .collect()
}

/// Local extrema of `lambda(mu)` on the accepted points. With `refine`,
/// each is relocated by a Brent solve of `d lambda / d mu = 0` on its
/// bracket using fresh shots.
pub fn turning_points(diagram: &Diagram, refine: Option<(&GrowthModel, &SolverConfig)>) -> Vec<TurningPoint> {
    let pts: Vec<&DiagramPoint> = diagram.accepted().collect();
    if pts.len() < 3 {
        return Vec::new();
    }
    let d = slopes(&pts);
    let mut out = Vec::new();
    for i in 0..pts.len() - 1 {
        let (da, db) = (d[i], d[i + 1]);
        if !(da.signum() != db.signum() && da != 0.0) {
            continue;
        }
        let kind = if da > 0.0 { Extremum::Max } else { Extremum::Min };
        let (a, b) = (pts[i], pts[i + 1]);
        // Plateau: both ends below the accumulated error scale.
        let res = 10.0 * a.error_estimate.max(b.error_estimate) / (b.mu - a.mu);
        let plateau = da.abs() < res && db.abs() < res;
        let t = (da / (da - db)).clamp(0.0, 1.0);
        let mut mu = a.mu + t * (b.mu - a.mu);
        let mut lambda = match kind {
            Extremum::Max => a.lambda.max(b.lambda),
            Extremum::Min => a.lambda.min(b.lambda),
        };
        let mut ok = !plateau;
        if let Some((model, cfg)) = refine {
            let f = |m: f64| integrate(model, m, cfg).map(|s| s.dlambda_dmu).unwrap_or(f64::NAN);
            match roots::brent(f, a.mu, b.mu, 1e-13 * b.mu.abs().max(1.0)) {
                Ok(r) => match integrate(model, r.x, cfg) {
                    Ok(s) => {
                        mu = r.x;
                        lambda = s.lambda;
                    }
                    Err(_) => ok = false,
                },
                Err(_) => ok = false,
            }
        }
        let dominates = match kind {
            Extremum::Max => lambda >= a.lambda && lambda >= b.lambda,
            Extremum::Min => lambda <= a.lambda && lambda <= b.lambda,
        };
        out.push(TurningPoint {
            mu,
            lambda,
            kind,
            bracket: (a.mu, b.mu),
            bracket_lambda: (a.lambda, b.lambda),
            resolved: ok && dominates,
        });
    }
    out
}

/// Median of `lambda` over the last full oscillation period, i.e. between
/// the last three turning points (the last two if only two exist).
pub fn estimate_lambda_star(diagram: &Diagram, turns: &[TurningPoint]) -> Option<f64> {
    if turns.len() < 2 {
        return None;
    }
    let from = turns[turns.len().saturating_sub(3)].mu;
    let to = turns[turns.len() - 1].mu;
    let mut v: Vec<f64> = diagram.accepted().filter(|p| p.mu >= from && p.mu <= to).map(|p| p.lambda).collect();
    for t in &turns[turns.len().saturating_sub(3)..] {
        v.push(t.lambda);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Crossing {
    /// Linearly interpolated location.
    pub mu: f64,
    /// `+1` when the tracked difference turns positive.
    pub direction: i8,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OscillationSummary {
    pub lambda_star: f64,
    pub slope_star: Option<f64>,
    pub lambda_crossings: Vec<Crossing>,
    /// Sign changes of `|slope| - |slope_star|`.
    pub slope_crossings: Vec<Crossing>,
    pub turning_points: usize,
    /// `(mu, count)` for points carrying intersection counts.
    pub intersections: Vec<(f64, usize)>,
    pub intersections_nondecreasing: bool,
    /// Largest drop of the count between adjacent grid points.
    pub max_intersection_drop: usize,
    pub failed_points: usize,
}

fn crossings(xs: &[(f64, f64)]) -> Vec<Crossing> {
    let mut out = Vec::new();
    let mut last: Option<(f64, f64)> = None;
    for &(mu, d) in xs {
        if d == 0.0 || !d.is_finite() {
            continue;
        }
        if let Some((m0, d0)) = last {
            if d0.signum() != d.signum() {
                out.push(Crossing { mu: m0 + (mu - m0) * d0 / (d0 - d), direction: d.signum() as i8 });
            }
        }
        last = Some((mu, d));
    }
    out
}

pub fn oscillation_summary(diagram: &Diagram, lambda_star: f64, slope_star: Option<f64>) -> Result<OscillationSummary> {
    if !(lambda_star > 0.0) {
        return Err(Error::domain(format!("lambda* must be positive, got {lambda_star}")));
    }
    let pts: Vec<&DiagramPoint> = diagram.accepted().collect();
    let lam: Vec<(f64, f64)> = pts.iter().map(|p| (p.mu, p.lambda - lambda_star)).collect();
    let slope_crossings = match slope_star {
        Some(s) => crossings(&pts.iter().map(|p| (p.mu, p.slope.abs() - s.abs())).collect::<Vec<_>>()),
        None => Vec::new(),
    };
    let intersections: Vec<(f64, usize)> = pts.iter().filter_map(|p| p.crossings.map(|c| (p.mu, c))).collect();
    let max_drop = intersections.windows(2).map(|w| w[0].1.saturating_sub(w[1].1)).max().unwrap_or(0);
    Ok(OscillationSummary {
        lambda_star,
        slope_star,
        lambda_crossings: crossings(&lam),
        slope_crossings,
        turning_points: turning_points(diagram, None).len(),
        intersections_nondecreasing: max_drop == 0,
        intersections,
        max_intersection_drop: max_drop,
        failed_points: diagram.failures(),
    })
}
