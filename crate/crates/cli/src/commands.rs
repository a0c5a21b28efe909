use crate::config::{GridKind, InputError, RunConfig};
use crate::output::{json_doc, num, Csv, Provenance, Sink};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use supercrit_core::analysis::{detect_bumps, intersections_with_singular, BumpReport, IntersectionReport};
use supercrit_core::diagram::{self, OscillationSummary, TurningPoint};
use supercrit_core::growth::H2Report;
use supercrit_core::profiles::LimitProfile;
use supercrit_core::recurrence::RecurrenceTable;
use supercrit_core::shooting::{integrate, Diagnostics, Shot};
use supercrit_core::singular::{check_condition_c, ConditionCReport, SingularApprox, SingularSolution, SingularSummary};
use supercrit_core::{GrowthClass, GrowthModel};

pub const DEFAULT_ALPHAS: [f64; 4] = [0.5, 1.0, 1.5, 1.9];
pub const DEFAULT_BETA: f64 = 2.0;
const K_MAX: usize = 10;
const TABLE_TOL: f64 = 1e-12;

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| InputError(format!("missing required parameter `{name}` (flag or [task] key)")).into())
}

/// Provenance from the resolved configuration, with the model block
/// replaced by its fully resolved form.
fn provenance(command: &str, cfg: &RunConfig, model: Option<&GrowthModel>) -> Result<Provenance> {
    let mut resolved = cfg.clone();
    if let Some(m) = model {
        resolved.model = m.spec();
    }
    resolved.output.prefix = None;
    Ok(Provenance::new(command, serde_json::to_value(&resolved)?))
}

#[derive(Serialize)]
struct ClassifyReport {
    #[serde(with = "supercrit_core::ext_f64")]
    q: f64,
    #[serde(with = "supercrit_core::ext_f64")]
    p: f64,
    #[serde(with = "supercrit_core::ext_f64")]
    residual: f64,
    class: GrowthClass,
    h2: H2Report,
}

pub fn classify(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let model = cfg.model()?;
    let class = model.classify_default()?;
    let h2 = model.check_h2(&GrowthModel::default_h2_grid());
    let prov = provenance("classify", cfg, Some(&model))?;
    let rep = ClassifyReport { q: class.q, p: class.p, residual: class.conjugacy_residual, class, h2 };
    sink.emit(None, Some(json_doc(&prov, &rep)?), true)
}

pub fn sequences(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let q = need(cfg.task.q, "q")?;
    let k = *cfg.task.k.get_or_insert(K_MAX);
    let tol = *cfg.task.tol.get_or_insert(TABLE_TOL);
    let table = RecurrenceTable::build(q, k, tol)?;
    let prov = provenance("sequences", cfg, None)?;
    let mut csv = Csv::new(&prov, &["k", "a", "delta", "eta", "eta_tilde", "delta_star", "eta_star", "alpha_star", "residual"]);
    for r in &table.rows {
        csv.row(&[
            r.k.to_string(),
            num(r.a),
            num(r.delta),
            num(r.eta),
            num(r.eta_tilde),
            num(r.delta_star),
            num(r.eta_star),
            num(r.alpha_star),
            num(r.residual),
        ]);
    }
    sink.emit(Some(csv.into_string()), None, false)
}

pub fn profile(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let q = need(cfg.task.q, "q")?;
    let k = *cfg.task.k.get_or_insert(1);
    let rmin = *cfg.task.rmin.get_or_insert(1e-8);
    let rmax = *cfg.task.rmax.get_or_insert(1e8);
    let n = *cfg.task.samples.get_or_insert(401);
    if !(rmin > 0.0 && rmax > rmin) || n < 2 {
        return Err(InputError(format!("profile needs 0 < rmin < rmax and samples >= 2, got {rmin}, {rmax}, {n}")).into());
    }
    let table = RecurrenceTable::build(q, k, TABLE_TOL)?;
    let prof = LimitProfile::from_table(&table, k)?;
    let prov = provenance("profile", cfg, None)?;
    let mut csv = Csv::new(&prov, &["r", "z", "z_prime", "r2_ez", "mass"]);
    for i in 0..n {
        let r = rmin * (rmax / rmin).powf(i as f64 / (n - 1) as f64);
        csv.row(&[num(r), num(prof.z(r)?), num(prof.z_prime(r)?), num(prof.r2_ez(r)), num(prof.mass(r)?)]);
    }
    sink.emit(Some(csv.into_string()), None, false)
}

#[derive(Serialize)]
struct ShotSummary {
    mu: f64,
    lambda: f64,
    r0: f64,
    slope: f64,
    dlambda_dmu: f64,
    error_estimate: f64,
    nodes: usize,
    diagnostics: Diagnostics,
}

fn shot_summary(shot: &Shot, model: &GrowthModel, checkpoints: usize) -> Result<ShotSummary> {
    Ok(ShotSummary {
        mu: shot.mu,
        lambda: shot.lambda,
        r0: shot.r0,
        slope: shot.slope,
        dlambda_dmu: shot.dlambda_dmu,
        error_estimate: shot.error_estimate,
        nodes: shot.nodes.len(),
        diagnostics: shot.diagnostics(model, checkpoints)?,
    })
}

/// `r v'` as `v'` without forming `r`, which may underflow.
fn dv(s: f64, p: f64) -> f64 {
    if p == 0.0 || !p.is_finite() {
        return p;
    }
    p.signum() * (p.abs().ln() - s).exp()
}

pub fn shoot(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let model = cfg.model()?;
    let mu = need(cfg.task.mu, "mu")?;
    let shot = integrate(&model, mu, &cfg.solver)?;
    let prov = provenance("shoot", cfg, Some(&model))?;
    let mut csv = Csv::new(&prov, &["ln_r", "r", "v", "v_prime", "log_source"]);
    for n in &shot.nodes {
        csv.row(&[num(n.s), num(n.s.exp()), num(n.w), num(dv(n.s, n.p)), num(n.ln_source)]);
    }
    let summary = shot_summary(&shot, &model, cfg.solver.checkpoints)?;
    sink.emit(Some(csv.into_string()), Some(json_doc(&prov, &summary)?), true)
}

/// The JSON document written by `singular`, read back by `sweep`.
#[derive(Serialize, Deserialize)]
pub struct SingularReport {
    pub summary: SingularSummary,
    pub condition_c: ConditionCReport,
    pub ode_residual: f64,
}

/// Lower end of the condition (C) window in `ln r`.
pub const CONDITION_C_LN_LO: f64 = -1e6;

fn condition_c(model: &GrowthModel, sol: &SingularSolution, alphas: &[f64], beta: f64) -> Result<ConditionCReport> {
    let hi = 1e-2f64.min(0.5 * sol.r_star).ln();
    Ok(check_condition_c(model, |s| sol.value_log(s), alphas, beta, (CONDITION_C_LN_LO, hi))?)
}

pub fn singular(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let model = cfg.model()?;
    let alphas = cfg.task.alphas.get_or_insert_with(|| DEFAULT_ALPHAS.to_vec()).clone();
    let beta = *cfg.task.beta.get_or_insert(DEFAULT_BETA);
    let approx = SingularApprox::new(&model)?;
    let sol = match cfg.task.rbar {
        Some(r) => approx.extend(r, &cfg.solver)?,
        None => approx.construct(&cfg.solver)?,
    };
    let prov = provenance("singular", cfg, Some(&model))?;
    let mut csv = Csv::new(&prov, &["ln_r", "r", "v", "v_prime"]);
    // Approximant below the matching radius, then the extension nodes.
    let n = 64;
    for i in 0..n {
        let s = sol.ln_r_bar - 50.0 * (n - i) as f64 / n as f64;
        let (u, p) = sol.approx.tilde_u_with_flux_log(s)?;
        csv.row(&[num(s), num(s.exp()), num(u), num(dv(s, p))]);
    }
    for nd in &sol.extension.nodes {
        csv.row(&[num(nd.s), num(nd.s.exp()), num(nd.w), num(dv(nd.s, nd.p))]);
    }
    let rep = SingularReport {
        summary: sol.summary(),
        condition_c: condition_c(&model, &sol, &alphas, beta)?,
        ode_residual: sol.ode_residual(),
    };
    sink.emit(Some(csv.into_string()), Some(json_doc(&prov, &rep)?), true)
}

/// Rebuilds `V*` from a `singular` report for the same model and solver.
fn load_reference(path: &str, model: &GrowthModel, cfg: &RunConfig) -> Result<SingularSolution> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading reference {path}"))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| InputError(format!("reference {path}: {e}")))?;
    let summary: SingularSummary = serde_json::from_value(doc["summary"].clone())
        .map_err(|e| InputError(format!("reference {path} has no valid summary: {e}")))?;
    let sol = SingularApprox::with_b(model, summary.b)?.extend_log(summary.ln_r_bar, &cfg.solver)?;
    if ((sol.lambda_star - summary.lambda_star) / summary.lambda_star).abs() > 1e-6 {
        return Err(InputError(format!(
            "reference {path} does not match this model and solver: lambda* {} vs {}",
            summary.lambda_star, sol.lambda_star
        ))
        .into());
    }
    Ok(sol)
}

#[derive(Serialize)]
struct SweepReport {
    lambda_star_source: &'static str,
    turning_points: Vec<TurningPoint>,
    oscillation: Option<OscillationSummary>,
}

pub fn sweep(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let model = cfg.model()?;
    let mu_min = need(cfg.task.mu_min, "mu_min")?;
    let mu_max = need(cfg.task.mu_max, "mu_max")?;
    let points = *cfg.task.points.get_or_insert(200);
    let kind = *cfg.task.grid.get_or_insert(if model.g(mu_min) > 0.0 { GridKind::G } else { GridKind::Mu });
    let grid = match kind {
        GridKind::G => diagram::g_grid(&model, mu_min, mu_max, points)?,
        GridKind::Mu => {
            if !(mu_max > mu_min) || points < 2 {
                return Err(InputError("sweep needs mu_min < mu_max and points >= 2".into()).into());
            }
            (0..points).map(|i| mu_min + (mu_max - mu_min) * i as f64 / (points - 1) as f64).collect()
        }
    };
    let reference = match cfg.task.reference.clone() {
        Some(p) => Some(load_reference(&p, &model, cfg)?),
        None => None,
    };
    let d = diagram::trace(&model, &grid, &cfg.solver, reference.as_ref())?;
    let turns = diagram::turning_points(&d, Some((&model, &cfg.solver)));
    let (star, source) = match (&reference, diagram::estimate_lambda_star(&d, &turns)) {
        (Some(r), _) => (Some((r.lambda_star, Some(r.slope_star))), "reference"),
        (None, Some(l)) => (Some((l, None)), "median_of_last_period"),
        (None, None) => (None, "none"),
    };
    let oscillation = match star {
        Some((l, s)) => Some(diagram::oscillation_summary(&d, l, s)?),
        None => None,
    };
    let prov = provenance("sweep", cfg, Some(&model))?;
    let mut csv = Csv::new(&prov, &["mu", "lambda", "r0", "slope", "crossings", "status"]);
    for p in &d.points {
        csv.row(&[
            num(p.mu),
            num(p.lambda),
            num(p.r0),
            num(p.slope),
            p.crossings.map(|c| c.to_string()).unwrap_or_default(),
            p.failure.as_ref().map(|f| f.0.clone()).unwrap_or_else(|| "ok".into()),
        ]);
    }
    let rep = SweepReport { lambda_star_source: source, turning_points: turns, oscillation };
    sink.emit(Some(csv.into_string()), Some(json_doc(&prov, &rep)?), true)
}

#[derive(Serialize)]
struct Comparison {
    statistic: &'static str,
    observed: f64,
    predicted: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct BumpEntry {
    #[serde(flatten)]
    report: BumpReport,
    comparison: Vec<Comparison>,
}

#[derive(Serialize)]
struct SingularCheck {
    summary: SingularSummary,
    intersections: IntersectionReport,
}

#[derive(Serialize)]
struct VerifyReport {
    shot: ShotSummary,
    q: f64,
    #[serde(with = "supercrit_core::ext_f64")]
    p: f64,
    bumps: Vec<BumpEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    singular: Option<SingularCheck>,
}

pub fn verify(cfg: &mut RunConfig, sink: &Sink) -> Result<()> {
    let model = cfg.model()?;
    let mu = need(cfg.task.mu, "mu")?;
    let against = *cfg.task.against_singular.get_or_insert(false);
    let class = model.classify_default()?;
    if !class.in_class {
        return Err(supercrit_core::Error::domain(format!(
            "model is outside the supported growth class: {}",
            class.diagnostic.clone().unwrap_or_default()
        ))
        .into());
    }
    let table = RecurrenceTable::build(class.q, K_MAX, TABLE_TOL)?;
    let shot = integrate(&model, mu, &cfg.solver)?;
    let bumps = detect_bumps(&shot, &model, &table)?
        .into_iter()
        .map(|b| {
            let comparison = b
                .comparison()
                .into_iter()
                .map(|(statistic, observed, predicted, relative_error)| Comparison { statistic, observed, predicted, relative_error })
                .collect();
            BumpEntry { report: b, comparison }
        })
        .collect();
    let singular = if against {
        let sol = SingularApprox::new(&model)?.construct(&cfg.solver)?;
        let intersections = intersections_with_singular(&shot, &sol, f64::INFINITY, 1e-10)?;
        Some(SingularCheck { summary: sol.summary(), intersections })
    } else {
        None
    };
    let rep = VerifyReport { shot: shot_summary(&shot, &model, cfg.solver.checkpoints)?, q: class.q, p: class.p, bumps, singular };
    let prov = provenance("verify", cfg, Some(&model))?;
    sink.emit(None, Some(json_doc(&prov, &rep)?), true)
}
