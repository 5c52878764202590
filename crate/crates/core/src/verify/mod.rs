//! Numerical checks of the level-set identities, the gradient bounds and the
//! barrier on oracle fields and solved instances, and the JSON report that
//! gathers them.
//!
//! Sign conventions are those of [`crate::levelset`]: `ν = ∇u/|∇u|`,
//! `H = -div ν`. With them the ambient Laplacian splits as
//! `Δφ = Δ_Γφ + ∂_ννφ - H∂_νφ`.

mod bounds;
mod report;
mod suite;

use serde::{Deserialize, Serialize};

use crate::field::{dot, FieldError, Interp, ScalarField, Vec3};
use crate::flow::FlowError;
use crate::levelset::{extract_level_along, laplace_beltrami, shape_from_field_with, LevelError, LevelSurface};
use crate::linalg::{mat_vec, trace};
use crate::solver::{pairwise_sum, SolverError};

pub use bounds::{
    check_barrier, check_bounds, measured_eta, ETA_MARGIN, solution_levels, tau_levels, BarrierMargins, BarrierReport,
    BarrierStatus, Bounds, BARRIER_SLACK, TAU_LEVELS,
};
pub use report::{
    sweep_csv, theorem_report, AlphaValue, FbCurvature, GeometryReport, GridInfo, HolderRow, Instance, LevelRow,
    Ratios, ReportOptions, Residuals, BarrierSummary, SWEEP_HEADER,
};
pub use suite::{oracle_suite, OracleRow, SuiteOptions, SuiteReport, ORACLE_CSV_HEADER};

/// Gate on `|Δu|` (in units of `h²`) for identities that need a harmonic field.
pub const HARMONIC_GATE: f64 = 100.0;

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("field is not harmonic at {point:?}: |Δu| = {lap:e} exceeds {gate:e}")]
    NotHarmonic { point: Vec<f64>, lap: f64, gate: f64 },
    #[error("no sample points selected")]
    NoSamples,
    #[error("the solution field carries no ε")]
    MissingEps,
    #[error("reports describe different instances: `{0}` vs `{1}`")]
    InstanceMismatch(String, String),
    #[error("{file}: {msg}")]
    Parse { file: String, msg: String },
}

/// Max and mean of `|r|` over a sample set, with the grid parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub max: f64,
    pub mean: f64,
    pub count: usize,
    pub h: f64,
    pub dtau: Option<f64>,
}

impl ResidualStats {
    pub fn from_values(values: &[f64], h: f64, dtau: Option<f64>) -> Result<Self, VerifyError> {
        if values.is_empty() {
            return Err(VerifyError::NoSamples);
        }
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        Ok(Self {
            max: abs.iter().copied().fold(0.0, f64::max),
            mean: pairwise_sum(&abs) / abs.len() as f64,
            count: abs.len(),
            h,
            dtau,
        })
    }
}

/// Which base nodes of each extracted level are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    /// Height axis of the level graphs; the last axis when `None`.
    pub axis: Option<usize>,
    /// Keep nodes whose base coordinates lie within this distance of the origin.
    pub radius: Option<f64>,
    /// Minimum distance, in nodes, from the base edges.
    pub margin: usize,
    /// Keep every `stride`-th node along each base axis.
    pub stride: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self {
            axis: None,
            radius: None,
            margin: 2,
            stride: 1,
        }
    }
}

impl Samples {
    fn axis_for(&self, u: &ScalarField) -> usize {
        self.axis.unwrap_or(u.dim() - 1)
    }

    /// Selected node indices of `s`.
    pub fn select(&self, s: &LevelSurface) -> Vec<usize> {
        let base = s.base();
        let stride = self.stride.max(1);
        (0..s.len())
            .filter(|&k| {
                let j = base.index_of(k);
                let x = base.coords(k);
                base.is_interior(k, self.margin)
                    && (0..base.n()).all(|a| j[a].is_multiple_of(stride))
                    && self
                        .radius
                        .is_none_or(|r| (x[0] * x[0] + x[1] * x[1]).sqrt() <= r * (1.0 + 1e-12))
            })
            .collect()
    }
}

/// Residuals of the Laplacian decomposition with the artifact's sign and with
/// the sign of the curvature term flipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    /// `Δφ - (Δ_Γφ + ∂_ννφ - H∂_νφ)`.
    pub residual: ResidualStats,
    /// `Δφ - (Δ_Γφ + ∂_ννφ + H∂_νφ)`; its size is `2|H∂_νφ|` when the first vanishes.
    pub flipped: ResidualStats,
}

/// Evaluates every term of the decomposition at the selected nodes of each level of `u`.
pub fn check_decomposition(
    u: &ScalarField,
    phi: &ScalarField,
    taus: &[f64],
    samples: &Samples,
) -> Result<DecompositionReport, VerifyError> {
    let axis = samples.axis_for(u);
    let levels = taus
        .iter()
        .map(|&t| extract_level_along(u, t, axis))
        .collect::<Result<Vec<_>, _>>()?;
    decomposition_on(&levels, phi, samples)
}

/// [`check_decomposition`] on levels extracted beforehand.
pub fn decomposition_on(
    levels: &[LevelSurface],
    phi: &ScalarField,
    samples: &Samples,
) -> Result<DecompositionReport, VerifyError> {
    let d = phi.dim();
    let mut res = Vec::new();
    let mut flipped = Vec::new();
    for s in levels {
        let f = (0..s.len())
            .map(|k| phi.sample_smooth(&s.point(k)[..d]))
            .collect::<Result<Vec<_>, _>>()?;
        let lb = laplace_beltrami(s, &f)?;
        for k in samples.select(s) {
            let Some(lb) = lb[k] else { continue };
            let p = s.point(k);
            let g = phi.gradient_smooth(&p[..d])?;
            let hess = phi.hessian_smooth(&p[..d])?;
            let node = &s.nodes()[k];
            let nu = node.nu;
            let dn = dot(&g, &nu);
            let dnn = dot(&nu, &mat_vec(&hess, &nu));
            let lap = trace(&hess);
            res.push(lap - (lb + dnn - node.mean_curvature * dn));
            flipped.push(lap - (lb + dnn + node.mean_curvature * dn));
        }
    }
    let h = phi.grid().spacing();
    Ok(DecompositionReport {
        residual: ResidualStats::from_values(&res, h, None)?,
        flipped: ResidualStats::from_values(&flipped, h, None)?,
    })
}

/// Terms of the `σ` Poisson identity at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticSample {
    pub point: Vec3,
    pub lap_sigma: f64,
    /// `σ(2H² - |h|²)`.
    pub curvature_term: f64,
    /// `|∇_Γσ|²/σ`.
    pub tangential_term: f64,
    pub printed: f64,
    pub corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticReport {
    /// `Δσ - σ(2H² - |h|²)`.
    pub printed: ResidualStats,
    /// `Δσ - σ(2H² - |h|²) - |∇_Γσ|²/σ`.
    pub corrected: ResidualStats,
    pub samples: Vec<EllipticSample>,
}

/// `|Δu|` at `p` from the four-point interpolant of the nodal Laplacian.
pub fn laplacian_at(u: &ScalarField, p: &[f64]) -> Result<f64, VerifyError> {
    Ok(u.interpolate_smooth(p, |i| u.nodal_laplacian(i))?)
}

/// Both forms of the `σ` identity at each point; fails with `NotHarmonic`
/// when `|Δu| ≥ 100h²` at any of them.
pub fn check_sigma_elliptic(u: &ScalarField, points: &[Vec3]) -> Result<EllipticReport, VerifyError> {
    let d = u.dim();
    let h = u.grid().spacing();
    let gate = HARMONIC_GATE * h * h;
    let mut out = Vec::with_capacity(points.len());
    for p in points {
        let p = &p[..d];
        let lap = laplacian_at(u, p)?;
        if !(lap.abs() < gate) {
            return Err(VerifyError::NotHarmonic {
                point: p.to_vec(),
                lap: lap.abs(),
                gate,
            });
        }
        let shape = shape_from_field_with(u, p, Interp::Cubic)?;
        let lap_sigma = u.interpolate_smooth(p, |i| u.nodal_sigma_laplacian(i))?;
        let gs = u.interpolate_smooth_vec(p, |i| u.nodal_sigma_gradient(i))?;
        let gn = dot(&gs, &shape.nu);
        let tangential_sq = (dot(&gs, &gs) - gn * gn).max(0.0);
        let sigma = shape.sigma;
        let m = shape.mean_curvature;
        let curvature_term = sigma * (2.0 * m * m - shape.h_frobenius_sq());
        let tangential_term = tangential_sq / sigma;
        let printed = lap_sigma - curvature_term;
        out.push(EllipticSample {
            point: crate::field::to_vec3(p),
            lap_sigma,
            curvature_term,
            tangential_term,
            printed,
            corrected: printed - tangential_term,
        });
    }
    let printed: Vec<f64> = out.iter().map(|s| s.printed).collect();
    let corrected: Vec<f64> = out.iter().map(|s| s.corrected).collect();
    Ok(EllipticReport {
        printed: ResidualStats::from_values(&printed, h, None)?,
        corrected: ResidualStats::from_values(&corrected, h, None)?,
        samples: out,
    })
}

/// Ambient points of the selected nodes on each level of `u`.
pub fn level_points(u: &ScalarField, taus: &[f64], samples: &Samples) -> Result<Vec<Vec3>, VerifyError> {
    let axis = samples.axis_for(u);
    let mut pts = Vec::new();
    for &tau in taus {
        let s = extract_level_along(u, tau, axis)?;
        pts.extend(points_on(&s, samples));
    }
    Ok(pts)
}

/// Ambient points of the selected nodes of one level.
pub fn points_on(s: &LevelSurface, samples: &Samples) -> Vec<Vec3> {
    samples.select(s).into_iter().map(|k| s.point(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{analytic_field, build_grid, BoxDomain, OracleParams};
    use std::f64::consts::FRAC_PI_4;

    fn harmonic_exp(h: f64) -> ScalarField {
        let g = build_grid(&BoxDomain::new(&[-0.5, FRAC_PI_4 - 0.5], &[0.5, FRAC_PI_4 + 0.5]), h).unwrap();
        analytic_field("harmonic_exp", &OracleParams::default(), g).unwrap()
    }

    #[test]
    fn elliptic_defect_at_probe() {
        // σ = e^{-x}, H = ±cos y: Δσ = 1, σ(2H² - |h|²) = cos², |∇_Γσ|²/σ = sin² at (0, y)
        let h = 1.0 / 128.0;
        let u = harmonic_exp(h);
        let r = check_sigma_elliptic(&u, &[[0.0, FRAC_PI_4, 0.0]]).unwrap();
        let s = r.samples[0];
        assert!((s.printed - 0.5).abs() < 0.05, "{s:?}");
        assert!(s.corrected.abs() < 20.0 * h, "{s:?}");
        let r0 = check_sigma_elliptic(&u, &[[0.0, 0.0 + FRAC_PI_4 - 0.25, 0.0]]).unwrap();
        let y: f64 = FRAC_PI_4 - 0.25;
        assert!((r0.samples[0].tangential_term - y.sin().powi(2)).abs() < 1e-3);
    }

    #[test]
    fn profile_is_exact() {
        let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.25]), 1.0 / 64.0).unwrap();
        let p = OracleParams {
            eps: Some(0.25),
            ..Default::default()
        };
        let u = analytic_field("profile1d", &p, g.clone()).unwrap();
        let pts = level_points(&u, &[-0.5, 0.0, 0.5], &Samples::default()).unwrap();
        let r = check_sigma_elliptic(&u, &pts).unwrap();
        assert!(r.printed.max < 1e-8 && r.corrected.max < 1e-8);
        let phi = ScalarField::from_fn(g, "affine", |x| 0.3 * x[0] - 2.0 * x[1] + 1.0).unwrap();
        let d = check_decomposition(&u, &phi, &[-0.5, 0.0, 0.5], &Samples::default()).unwrap();
        assert!(d.residual.max < 1e-9, "{d:?}");
    }

    #[test]
    fn distance_is_not_harmonic() {
        let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), 1.0 / 64.0).unwrap();
        let p = OracleParams {
            center: Some(vec![0.0, -0.6]),
            ..Default::default()
        };
        let u = analytic_field("distance", &p, g).unwrap();
        assert!(matches!(
            check_sigma_elliptic(&u, &[[0.0, -0.1, 0.0]]),
            Err(VerifyError::NotHarmonic { .. })
        ));
    }

    #[test]
    fn sphere_decomposition_sign() {
        // φ = |x - c|² on circles about c: Δφ = 4, ∂_ννφ = 2, Δ_Γφ = 0, H∂_νφ = -2
        let h = 1.0 / 128.0;
        let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), h).unwrap();
        let c = [0.0, -0.6];
        let p = OracleParams {
            center: Some(c.to_vec()),
            ..Default::default()
        };
        let u = analytic_field("distance", &p, g.clone()).unwrap();
        let phi = ScalarField::from_fn(g, "r2", |x| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).unwrap();
        let d = check_decomposition(&u, &phi, &[0.5, 0.7], &Samples::default()).unwrap();
        assert!(d.residual.max < 1e-3, "{d:?}");
        assert!((d.flipped.mean - 4.0).abs() < 1e-3, "{d:?}");
    }
}
