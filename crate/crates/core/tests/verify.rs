use fbac::expr::Expr;
use fbac::field::{analytic_field, build_grid, BoxDomain, OracleParams, ScalarField};
use fbac::solver::{solve, SolverConfig};
use fbac::verify::{
    check_barrier, check_decomposition, check_sigma_elliptic, sweep_csv, theorem_report, BarrierStatus,
    GeometryReport, ReportOptions, Samples, VerifyError, SWEEP_HEADER,
};

fn saddle(eps: f64) -> fbac::solver::Solution {
    let mut c = SolverConfig::new(eps, eps / 4.0, Expr::parse("0.1*(x1*x1 - x2*x2)").unwrap());
    c.n = 2;
    c.vertical_extent = 0.35;
    solve(&c).unwrap()
}

#[test]
fn saddle_report_is_consistent() {
    let sol = saddle(0.1);
    let r = theorem_report(&sol, &[0.5], &ReportOptions::default()).unwrap();
    assert!(r.eta > 0.15 && r.eta < 0.25 && r.eta_below_half);
    assert_eq!(r.levels.len(), 21);
    assert!(r.ratios.C_thm_h[0].value.unwrap().is_finite());
    assert!(r.fb_curvature.as_ref().unwrap().agrees);
    assert_eq!(r.barrier.status, BarrierStatus::Pass);
    assert_eq!(r.instance.gamma0.as_deref(), Some("0.1*(x1*x1-x2*x2)"));
    let back = GeometryReport::from_json(&r.to_json(), "saddle.json").unwrap();
    assert_eq!(back, r);
    let csv = sweep_csv(&[("a".into(), r)]).unwrap();
    assert_eq!(csv.lines().next(), Some(SWEEP_HEADER));
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn barrier_margin_matches_analytic_value() {
    let r = check_barrier(&saddle(0.1)).unwrap();
    let m = r.margins.unwrap();
    assert!(r.is_supersolution);
    assert!(m.laplacian_max < 0.0);
    assert!((m.laplacian_at_free_boundary / r.analytic_margin - 1.0).abs() < 0.25);
}

#[test]
fn malformed_report_names_file_and_line() {
    let err = GeometryReport::from_json("{\n  \"eta\": oops\n}", "bad.json").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, VerifyError::Parse { .. }));
    assert!(msg.contains("bad.json") && msg.contains('2'), "{msg}");
}

#[test]
fn elliptic_check_refuses_non_harmonic_fields() {
    let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), 1.0 / 64.0).unwrap();
    let p = OracleParams {
        center: Some(vec![0.0, -0.6]),
        ..Default::default()
    };
    let u = analytic_field("distance", &p, g).unwrap();
    assert!(matches!(
        check_sigma_elliptic(&u, &[[0.0, 0.0, 0.0]]),
        Err(VerifyError::NotHarmonic { .. })
    ));
}

#[test]
fn decomposition_holds_on_harmonic_levels() {
    let g = build_grid(
        &BoxDomain::new(&[-1.0, std::f64::consts::FRAC_PI_4 - 0.5], &[1.5, std::f64::consts::FRAC_PI_4 + 0.5]),
        1.0 / 64.0,
    )
    .unwrap();
    let u = analytic_field("harmonic_exp", &OracleParams::default(), g.clone()).unwrap();
    let phi = ScalarField::from_fn(g, "phi", |x| x[0] * x[1] + x[1] * x[1]).unwrap();
    let samples = Samples {
        axis: Some(0),
        margin: 8,
        stride: 4,
        ..Default::default()
    };
    let r = check_decomposition(&u, &phi, &[0.6, 0.7], &samples).unwrap();
    assert!(r.residual.count > 10);
    assert!(r.residual.max < 5e-3, "{:?}", r.residual);
}
