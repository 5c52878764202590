use fbac::field::{analytic_field, build_grid, BoxDomain, OracleParams};
use fbac::flow::{integrate_flow, ode_residual_h, ode_residual_sigma, project_to_level, FlowError};

fn distance() -> fbac::field::ScalarField {
    let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), 1.0 / 128.0).unwrap();
    let p = OracleParams {
        center: Some(vec![0.0, -0.6]),
        ..Default::default()
    };
    analytic_field("distance", &p, g).unwrap()
}

#[test]
fn distance_flow_is_radial() {
    let u = distance();
    let x0 = project_to_level(&u, &[0.1, 0.0], 0.5).unwrap();
    let traj = integrate_flow(&u, &x0, (0.5, 0.9), 1.0 / 64.0).unwrap();
    let dir = [x0[0] / 0.5, (x0[1] + 0.6) / 0.5];
    for s in &traj.samples {
        assert!((s.point[0] - s.tau * dir[0]).abs() < 5e-5);
        assert!((s.point[1] + 0.6 - s.tau * dir[1]).abs() < 5e-5);
        assert!((s.sigma - 1.0).abs() < 5e-5, "{}", s.sigma - 1.0);
        assert!((s.mean_curvature + 1.0 / s.tau).abs() < 1e-3);
    }
    // defect is the interpolation error of u, not integration drift
    assert!(traj.max_defect() < 1e-5);
}

#[test]
fn sign_variants_separate_on_distance() {
    let u = distance();
    let x0 = project_to_level(&u, &[0.05, 0.0], 0.5).unwrap();
    let traj = integrate_flow(&u, &x0, (0.5, 0.75), 1.0 / 64.0).unwrap();
    let r = ode_residual_sigma(&traj).unwrap();
    for ((tau, a), b) in r.tau.iter().zip(&r.variant_a).zip(&r.variant_b) {
        // Δu = 1/τ, σ = 1, H = -1/τ
        assert!((a.abs() - 2.0 / tau).abs() < 0.01, "{tau} {a}");
        assert!(b.abs() < 1e-3);
    }
    let h = ode_residual_h(&u, &traj).unwrap();
    assert!(h.iter().all(|t| t.residual.abs() < 0.01));
}

#[test]
fn start_off_level_is_rejected() {
    let u = distance();
    assert!(matches!(
        integrate_flow(&u, &[0.0, 0.0], (0.5, 0.7), 0.05),
        Err(FlowError::NotOnLevel { .. })
    ));
}
