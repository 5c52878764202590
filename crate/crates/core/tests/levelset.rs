use fbac::field::{analytic_field, build_grid, BoxDomain, OracleParams};
use fbac::levelset::{extract_level, holder_norm, laplace_beltrami, LevelError};

#[test]
fn tilted_levels_are_flat_planes() {
    let eps = 0.2;
    let g = build_grid(&BoxDomain::new(&[-0.5, -0.5], &[0.5, 0.5]), 1.0 / 32.0).unwrap();
    let p = OracleParams {
        eps: Some(eps),
        direction: Some(vec![0.6, 0.8]),
        ..Default::default()
    };
    let u = analytic_field("tilted", &p, g).unwrap();
    let s = extract_level(&u, 0.25).unwrap();
    for (k, n) in s.nodes().iter().enumerate() {
        let x = s.base().coords(k)[0];
        assert!((n.height - (0.25 * eps - 0.6 * x) / 0.8).abs() < 1e-12);
        assert!(n.mean_curvature.abs() < 1e-9);
        assert!((n.sigma - eps).abs() < 1e-12);
        assert!(n.nu[1] > 0.0);
    }
}

#[test]
fn circles_have_negative_curvature_and_unit_normals() {
    let c = [0.0, -0.6];
    let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), 1.0 / 128.0).unwrap();
    let p = OracleParams {
        center: Some(c.to_vec()),
        ..Default::default()
    };
    let u = analytic_field("distance", &p, g).unwrap();
    for r in [0.6, 0.8] {
        let s = extract_level(&u, r).unwrap();
        for (k, n) in s.nodes().iter().enumerate() {
            if !s.base().is_interior(k, 2) {
                continue;
            }
            assert!((n.mean_curvature + 1.0 / r).abs() < 1e-3, "H = {}", n.mean_curvature);
            let norm = (n.nu[0] * n.nu[0] + n.nu[1] * n.nu[1]).sqrt();
            assert!((norm - 1.0).abs() < 1e-10);
            assert!((s.trace_check(k) - n.mean_curvature).abs() < 1e-10);
        }
    }
}

#[test]
fn laplace_beltrami_of_arclength_square_on_circle() {
    // f = x² restricted to the circle |x - c| = r, with arclength s: f'' = 2 cos(2s/r)
    let c = [0.0, -0.6];
    let r = 0.7;
    let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), 1.0 / 128.0).unwrap();
    let p = OracleParams {
        center: Some(c.to_vec()),
        ..Default::default()
    };
    let u = analytic_field("distance", &p, g).unwrap();
    let s = extract_level(&u, r).unwrap();
    let f: Vec<f64> = (0..s.len()).map(|k| s.base().coords(k)[0].powi(2)).collect();
    let lb = laplace_beltrami(&s, &f).unwrap();
    for (k, v) in lb.iter().enumerate() {
        if let Some(v) = v {
            let x = s.base().coords(k)[0];
            let theta = (x / r).asin();
            assert!((v - 2.0 * (2.0 * theta).cos()).abs() < 1e-3, "{v}");
        }
    }
}

#[test]
fn missing_level_is_reported() {
    let g = build_grid(&BoxDomain::new(&[-0.5, -0.5], &[0.5, 0.5]), 0.125).unwrap();
    let p = OracleParams {
        eps: Some(0.1),
        ..Default::default()
    };
    let u = analytic_field("profile1d", &p, g).unwrap();
    assert!(matches!(extract_level(&u, 1.5), Err(LevelError::NoCrossing { .. })));
}

#[test]
fn holder_norm_of_lipschitz_line() {
    let pts: Vec<[f64; 2]> = (0..=20).map(|i| [i as f64 * 0.05, 0.0]).collect();
    let f: Vec<f64> = pts.iter().map(|p| 3.0 * p[0]).collect();
    let n = holder_norm(&pts, &f, 1.0, "line").unwrap();
    assert!((n.seminorm_part - 3.0).abs() < 1e-12);
    assert!((n.sup_part - 3.0).abs() < 1e-12);
    assert!(holder_norm(&pts, &f, 0.0, "line").is_err());
}
