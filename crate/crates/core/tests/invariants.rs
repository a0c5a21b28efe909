use proptest::prelude::*;
use supercrit_core::analysis::{count_intersections, count_intersections_log, detect_bumps};
use supercrit_core::diagram::{g_grid, trace};
use supercrit_core::recurrence::RecurrenceTable;
use supercrit_core::shooting::{integrate, SolverConfig};
use supercrit_core::singular::SingularApprox;
use supercrit_core::GrowthModel;

fn models() -> [(GrowthModel, f64, f64); 3] {
    [
        (GrowthModel::pure_exp(), 0.5, 6.0),
        (GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap(), 0.6, 12.0),
        (GrowthModel::iter_exp(1, 1.0, 0.0).unwrap(), 1.0, 5.0),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gelfand_branch_matches_closed_form(mu in 0.1f64..8.0) {
        let s = integrate(&GrowthModel::pure_exp(), mu, &SolverConfig::default()).unwrap();
        let lambda = 8.0 * ((0.5 * mu).exp() - 1.0) * (-mu).exp();
        let dlambda = 8.0 * (-mu).exp() * (1.0 - 0.5 * (0.5 * mu).exp());
        prop_assert!(((s.lambda - lambda) / lambda).abs() < 1e-8);
        prop_assert!((s.dlambda_dmu - dlambda).abs() < 1e-6 * (1.0 + dlambda.abs()));
    }

    #[test]
    fn shots_are_monotone_and_balanced(which in 0usize..3, frac in 0.0f64..1.0) {
        let (m, lo, hi) = &models()[which];
        let mu = lo + (hi - lo) * frac;
        let cfg = SolverConfig::default();
        let s = integrate(m, mu, &cfg).unwrap();
        let d = s.diagnostics(m, cfg.checkpoints).unwrap();
        prop_assert!(d.monotone);
        prop_assert!(d.flux_residual < 1e-6, "flux {}", d.flux_residual);
        prop_assert!(d.green_residual < 1e-6, "green {}", d.green_residual);
        prop_assert!(s.lambda > 0.0 && s.slope < 0.0);
        let disc = s.rescale_to_disc();
        prop_assert_eq!(disc.value(0.0), mu);
        prop_assert_eq!(disc.value(1.0), 0.0);
        let xs: Vec<f64> = (0..=64).map(|i| i as f64 / 64.0).collect();
        prop_assert!(xs.windows(2).all(|w| disc.value(w[1]) <= disc.value(w[0])));
    }

    #[test]
    fn halving_tolerance_moves_lambda_within_estimate(which in 0usize..3, frac in 0.0f64..1.0) {
        let (m, lo, hi) = &models()[which];
        let mu = lo + (hi - lo) * frac;
        let cfg = SolverConfig::default();
        let a = integrate(m, mu, &cfg).unwrap();
        let b = integrate(m, mu, &cfg.scaled(0.5)).unwrap();
        prop_assert!((a.lambda - b.lambda).abs() <= 10.0 * a.error_estimate);
    }

    #[test]
    fn intersections_are_symmetric(c0 in -1.0f64..1.0, c1 in -3.0f64..3.0, c2 in -3.0f64..3.0) {
        let u = |x: f64| x.sin();
        let v = move |x: f64| c0 + c1 * x + c2 * x * x;
        let ab = count_intersections(u, v, (0.1, 4.0), 1e-12).unwrap();
        let ba = count_intersections(v, u, (0.1, 4.0), 1e-12).unwrap();
        prop_assert_eq!(ab.count, ba.count);
        let shifted = count_intersections_log(|s: f64| s.cos(), move |s: f64| s.cos() + 0.5 + c0.abs(), (-3.0, 3.0), 1e-12).unwrap();
        prop_assert_eq!(shifted.count, 0);
    }

    #[test]
    fn bumps_interleave_with_bottoms(mu in 2.0f64..8.0) {
        let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
        let tab = RecurrenceTable::build(1.5, 10, 1e-13).unwrap();
        let s = integrate(&m, mu, &SolverConfig::default()).unwrap();
        let b = detect_bumps(&s, &m, &tab).unwrap();
        prop_assert!(!b.is_empty());
        for (i, w) in b.windows(2).enumerate() {
            prop_assert_eq!(w[0].k, i + 1);
            let bottom = w[0].r_bottom.expect("bottom between tops");
            let (lo, hi) = (w[0].r_top.min(w[1].r_top), w[0].r_top.max(w[1].r_top));
            prop_assert!(lo < bottom && bottom < hi);
        }
        prop_assert!(b.iter().all(|x| x.peak > 0.0 && x.energy > 0.0));
    }
}

#[test]
fn sweeps_do_not_depend_on_thread_count() {
    let m = GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap();
    let grid = g_grid(&m, 0.5, 14.0, 40).unwrap();
    let cfg = SolverConfig::default();
    let run = |n: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
        pool.install(|| trace(&m, &grid, &cfg, None).unwrap())
    };
    let (one, four) = (run(1), run(4));
    let bits = |d: &supercrit_core::diagram::Diagram| d.points.iter().map(|p| (p.mu.to_bits(), p.lambda.to_bits(), p.slope.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&one), bits(&four));
}

// Regression values produced by this pipeline and frozen.
#[test]
fn singular_solutions_are_frozen() {
    let cfg = SolverConfig::default();
    let p3 = SingularApprox::new(&GrowthModel::power_exp(0.0, 3.0, 0.0, 0.0).unwrap()).unwrap().construct(&cfg).unwrap();
    assert!((p3.lambda_star - 1.3913968).abs() < 1e-6, "{}", p3.lambda_star);
    assert!((p3.r_star - 1.17957).abs() < 1e-5, "{}", p3.r_star);
    assert!((p3.slope_star + 1.14547).abs() < 1e-5, "{}", p3.slope_star);
    let ee = SingularApprox::new(&GrowthModel::iter_exp(1, 1.0, 0.0).unwrap()).unwrap().construct(&cfg).unwrap();
    assert!((ee.lambda_star - 0.21823).abs() < 1e-5, "{}", ee.lambda_star);
    assert!((ee.r_star - 0.46715).abs() < 1e-5, "{}", ee.r_star);
}

// The f0 source is singular at v = 0, so |p| diverges and the last terminal
// steps are narrower than one ulp of ln r; the identities must still close.
#[test]
fn identities_close_at_a_singular_end() {
    let m = GrowthModel::explicit_singular(1.5).unwrap();
    let cfg = SolverConfig::default();
    for mu in [1.5, 2.0, 3.0, 4.0] {
        let s = integrate(&m, mu, &cfg).unwrap();
        assert!(s.slope < -1e15, "mu {mu}: slope {}", s.slope);
        let d = s.diagnostics(&m, cfg.checkpoints).unwrap();
        assert!(d.flux_residual < 1e-9 && d.green_residual < 1e-9, "mu {mu}: {d:?}");
    }
}
