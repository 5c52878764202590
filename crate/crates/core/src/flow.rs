//! The level-set flow `dF/dτ = ∇u/|∇u|²`, which carries `{u = τ₀}` onto
//! `{u = τ}`, and the residuals of the ODEs satisfied along it by the
//! velocity `σ = 1/|∇u|` and the mean curvature `H`.
//!
//! All field quantities along trajectories use the four-point Lagrange
//! evaluators, so recorded series are smooth in `τ` and centered differences
//! see only the `O(Δτ²)` truncation.

use std::io::Write;

use crate::field::stencil::cubic_weights;
use crate::field::{fmt_real, norm, FieldError, Interp, ScalarField, Vec3};
use crate::levelset::{extract_level_in, laplace_beltrami, shape_from_field_with, BaseWindow, LevelError, MIN_GRADIENT};

#[derive(Debug, thiserror::Error)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("gradient vanishes at {0:?}")]
    DegenerateGradient(Vec<f64>),
    #[error("trajectory left the safe interior at tau = {tau} (point {point:?})")]
    LeftDomain { tau: f64, point: Vec<f64> },
    #[error("start point has u = {value}, expected level {tau}")]
    NotOnLevel { value: f64, tau: f64 },
    #[error("step {dtau} is not usable on the span [{t0}, {t1}]")]
    BadStep { t0: f64, t1: f64, dtau: f64 },
    #[error("need at least 3 samples, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tolerance on `|u(x₀) - τ₀|` at the start of a trajectory.
pub const START_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub tau: f64,
    pub point: Vec3,
    pub sigma: f64,
    pub mean_curvature: f64,
    /// `|h|²`, sum of squared principal curvatures.
    pub h_sq: f64,
    pub lap_u: f64,
    /// `|u(F) - τ|`.
    pub defect: f64,
    pub nu: Vec3,
    /// `dF/dτ` at the sample.
    pub velocity: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub dim: usize,
    pub dtau: f64,
    pub samples: Vec<FlowSample>,
}

impl FlowTrajectory {
    pub fn taus(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.tau).collect()
    }

    pub fn max_defect(&self) -> f64 {
        self.samples.iter().map(|s| s.defect).fold(0.0, f64::max)
    }

    /// Largest angle between velocity and normal.
    pub fn max_normal_angle(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let v = norm(&s.velocity);
                let c = (s.velocity[0] * s.nu[0] + s.velocity[1] * s.nu[1] + s.velocity[2] * s.nu[2]) / v;
                c.clamp(-1.0, 1.0).acos()
            })
            .fold(0.0, f64::max)
    }

    /// CSV `tau,x1,..,xd,sigma,H,lap_u,defect`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let xs: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "tau,{},sigma,H,lap_u,defect", xs.join(","))?;
        for s in &self.samples {
            let mut cols = vec![s.tau];
            cols.extend_from_slice(&s.point[..self.dim]);
            cols.extend([s.sigma, s.mean_curvature, s.lap_u, s.defect]);
            let line: Vec<String> = cols.into_iter().map(fmt_real).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn velocity(u: &ScalarField, p: &Vec3) -> Result<Vec3, FlowError> {
    let d = u.dim();
    let g = u.gradient_smooth(&p[..d])?;
    let n2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
    if !(n2.sqrt() >= MIN_GRADIENT) {
        return Err(FlowError::DegenerateGradient(p[..d].to_vec()));
    }
    Ok([g[0] / n2, g[1] / n2, g[2] / n2])
}

/// Newton iteration along `∇u` that moves `p` onto `{u = τ}` of the cubic interpolant.
pub fn project_to_level(u: &ScalarField, p: &[f64], tau: f64) -> Result<Vec<f64>, FlowError> {
    let d = u.dim();
    let mut q = p.to_vec();
    for _ in 0..20 {
        let r = u.sample_smooth(&q)? - tau;
        if r.abs() <= 1e-14 {
            break;
        }
        let v = velocity(u, &crate::field::to_vec3(&q))?;
        for a in 0..d {
            q[a] -= r * v[a];
        }
    }
    Ok(q)
}

fn sample_at(u: &ScalarField, tau: f64, p: Vec3) -> Result<FlowSample, FlowError> {
    let d = u.dim();
    let shape = shape_from_field_with(u, &p[..d], Interp::Cubic)?;
    let hess = u.hessian_smooth(&p[..d])?;
    let lap_u = (0..d).map(|a| hess[a][a]).sum();
    let value = u.sample_smooth(&p[..d])?;
    Ok(FlowSample {
        tau,
        point: p,
        sigma: shape.sigma,
        mean_curvature: shape.mean_curvature,
        h_sq: shape.h_frobenius_sq(),
        lap_u,
        defect: (value - tau).abs(),
        nu: shape.nu,
        velocity: velocity(u, &p)?,
    })
}

/// Classical RK4 on `dF/dτ = ∇u/|∇u|²` from `x0` over `span`, recording
/// `σ`, `H`, `Δu` and the level defect at every step.
pub fn integrate_flow(u: &ScalarField, x0: &[f64], span: (f64, f64), dtau: f64) -> Result<FlowTrajectory, FlowError> {
    let (t0, t1) = span;
    let d = u.dim();
    let steps_f = ((t1 - t0) / dtau).abs();
    if !(dtau > 0.0) || !steps_f.is_finite() || steps_f < 1.0 - 1e-9 {
        return Err(FlowError::BadStep { t0, t1, dtau });
    }
    // Uniform steps no longer than `dtau`; the effective step is stored on the trajectory.
    let steps = (steps_f - 1e-9).ceil().max(1.0) as usize;
    let dt = (t1 - t0) / steps as f64;
    let start = u.sample_smooth(x0)?;
    if (start - t0).abs() > START_TOLERANCE {
        return Err(FlowError::NotOnLevel { value: start, tau: t0 });
    }
    let margin = 2.0 * u.grid().spacing();
    let check = |tau: f64, p: &Vec3| -> Result<(), FlowError> {
        if u.grid().boundary_distance(&p[..d]) < margin {
            return Err(FlowError::LeftDomain {
                tau,
                point: p[..d].to_vec(),
            });
        }
        Ok(())
    };
    let mut p = crate::field::to_vec3(x0);
    check(t0, &p)?;
    let mut samples = vec![sample_at(u, t0, p)?];
    let add = |p: &Vec3, k: &Vec3, s: f64| [p[0] + s * k[0], p[1] + s * k[1], p[2] + s * k[2]];
    for i in 0..steps {
        let tau = t0 + i as f64 * dt;
        let k1 = velocity(u, &p)?;
        let q = add(&p, &k1, 0.5 * dt);
        check(tau, &q)?;
        let k2 = velocity(u, &q)?;
        let q = add(&p, &k2, 0.5 * dt);
        check(tau, &q)?;
        let k3 = velocity(u, &q)?;
        let q = add(&p, &k3, dt);
        check(tau, &q)?;
        let k4 = velocity(u, &q)?;
        for a in 0..3 {
            p[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        }
        let tau_next = t0 + (i + 1) as f64 * dt;
        check(tau_next, &p)?;
        samples.push(sample_at(u, tau_next, p)?);
    }
    Ok(FlowTrajectory { dim: d, dtau: dt, samples })
}

/// Residual series of the `σ` equation at interior samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaResiduals {
    pub tau: Vec<f64>,
    /// `dσ/dτ + σ²(H - σΔu)`.
    pub variant_a: Vec<f64>,
    /// `dσ/dτ + σ²(H + σΔu)`.
    pub variant_b: Vec<f64>,
}

fn centered(values: &[f64], dt: f64) -> Vec<f64> {
    (1..values.len() - 1)
        .map(|k| (values[k + 1] - values[k - 1]) / (2.0 * dt))
        .collect()
}

pub fn ode_residual_sigma(traj: &FlowTrajectory) -> Result<SigmaResiduals, FlowError> {
    let s = &traj.samples;
    if s.len() < 3 {
        return Err(FlowError::TooShort(s.len()));
    }
    let sig: Vec<f64> = s.iter().map(|x| x.sigma).collect();
    let ds = centered(&sig, traj.dtau);
    let mut out = SigmaResiduals {
        tau: Vec::new(),
        variant_a: Vec::new(),
        variant_b: Vec::new(),
    };
    for (k, d) in (1..s.len() - 1).zip(ds) {
        let x = &s[k];
        let s2 = x.sigma * x.sigma;
        out.tau.push(x.tau);
        out.variant_a.push(d + s2 * (x.mean_curvature - x.sigma * x.lap_u));
        out.variant_b.push(d + s2 * (x.mean_curvature + x.sigma * x.lap_u));
    }
    Ok(out)
}

/// Terms of the mean-curvature equation at one interior sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HTerms {
    pub tau: f64,
    pub dh_dtau: f64,
    pub lb_sigma: f64,
    pub sigma_h_sq: f64,
    pub residual: f64,
}

/// Half-width (in nodes) of the base window extracted around each sample.
pub const WINDOW_RADIUS: usize = 4;

/// `Δ_Γ σ` of the level through `p`, from a windowed extraction and
/// four-point interpolation of the nodal Laplace–Beltrami values.
pub fn lb_sigma_at(u: &ScalarField, p: &Vec3, tau: f64, nu: &Vec3) -> Result<f64, FlowError> {
    let d = u.dim();
    let g = u.grid();
    let axis = (0..d)
        .max_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs()))
        .unwrap_or(d - 1);
    let full = BaseWindow::full(u, axis)?;
    let base_axes: Vec<usize> = full.axes().to_vec();
    let n = base_axes.len();
    let mut center = [0usize; 2];
    for (k, &a) in base_axes.iter().enumerate() {
        let t = g.to_index_space(a, p[a]);
        center[k] = (t.round().max(0.0) as usize).min(g.shape()[a] - 1);
    }
    let win = BaseWindow::around(u, axis, &center[..n], WINDOW_RADIUS)?;
    let surf = extract_level_in(u, tau, axis, win)?;
    let sigma = surf.sigma();
    let lb = laplace_beltrami(&surf, &sigma)?;
    let win = surf.base();
    let mut weights = Vec::with_capacity(n);
    for (k, &a) in base_axes.iter().enumerate() {
        let t = g.to_index_space(a, p[a]) - win.start()[k] as f64;
        // Stencil restricted to window-interior nodes.
        let m = win.shape()[k];
        let w = cubic_weights(t - 1.0, m - 2);
        weights.push(w);
    }
    let mut acc = 0.0;
    let w0 = &weights[0];
    for i in 0..w0.len {
        if w0.w[i] == 0.0 {
            continue;
        }
        if n == 1 {
            acc += w0.w[i] * lb[win.offset([w0.start + i + 1, 0])].unwrap_or(f64::NAN);
        } else {
            let w1 = &weights[1];
            for j in 0..w1.len {
                if w1.w[j] == 0.0 {
                    continue;
                }
                let v = lb[win.offset([w0.start + i + 1, w1.start + j + 1])].unwrap_or(f64::NAN);
                acc += w0.w[i] * w1.w[j] * v;
            }
        }
    }
    Ok(acc)
}

/// Residual of `dH/dτ = Δ_Γσ + σ|h|²` at interior samples.
pub fn ode_residual_h(u: &ScalarField, traj: &FlowTrajectory) -> Result<Vec<HTerms>, FlowError> {
    let s = &traj.samples;
    if s.len() < 3 {
        return Err(FlowError::TooShort(s.len()));
    }
    let hs: Vec<f64> = s.iter().map(|x| x.mean_curvature).collect();
    let dh = centered(&hs, traj.dtau);
    let mut out = Vec::with_capacity(dh.len());
    for (k, dh_dtau) in (1..s.len() - 1).zip(dh) {
        let x = &s[k];
        let lb_sigma = lb_sigma_at(u, &x.point, x.tau, &x.nu)?;
        let sigma_h_sq = x.sigma * x.h_sq;
        out.push(HTerms {
            tau: x.tau,
            dh_dtau,
            lb_sigma,
            sigma_h_sq,
            residual: dh_dtau - lb_sigma - sigma_h_sq,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{analytic_field, build_grid, BoxDomain, OracleParams};

    fn profile() -> ScalarField {
        let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.25]), 1.0 / 64.0).unwrap();
        let p = OracleParams {
            eps: Some(0.1),
            ..Default::default()
        };
        analytic_field("profile1d", &p, g).unwrap()
    }

    #[test]
    fn profile_flow_is_vertical_line() {
        let u = profile();
        let t = integrate_flow(&u, &[0.0, 0.0], (0.0, 0.5), 1.0 / 32.0).unwrap();
        assert_eq!(t.samples.len(), 17);
        for s in &t.samples {
            assert!(s.point[0].abs() < 1e-14);
            assert!((s.point[1] - 0.1 * s.tau).abs() < 1e-12);
            assert!(s.defect < 1e-12);
        }
        let r = ode_residual_sigma(&t).unwrap();
        for (a, b) in r.variant_a.iter().zip(&r.variant_b) {
            assert!(a.abs() < 1e-8 && b.abs() < 1e-8);
        }
        for term in ode_residual_h(&u, &t).unwrap() {
            assert!(term.residual.abs() < 1e-8);
        }
    }

    #[test]
    fn start_must_lie_on_level() {
        let u = profile();
        assert!(matches!(
            integrate_flow(&u, &[0.0, 0.01], (0.0, 0.5), 1.0 / 32.0),
            Err(FlowError::NotOnLevel { .. })
        ));
        assert!(matches!(
            integrate_flow(&u, &[0.0, 0.0], (0.0, 0.5), 0.7),
            Err(FlowError::BadStep { .. })
        ));
    }

    #[test]
    fn distance_flow_is_radial() {
        let h = 1.0 / 128.0;
        let g = build_grid(&BoxDomain::new(&[-0.25, -0.25], &[0.25, 0.5]), h).unwrap();
        let c = [0.0, -0.6];
        let p = OracleParams {
            center: Some(c.to_vec()),
            ..Default::default()
        };
        let u = analytic_field("distance", &p, g).unwrap();
        let x0 = project_to_level(&u, &[0.05, -0.6 + (0.25f64 - 0.0025).sqrt()], 0.5).unwrap();
        let t = integrate_flow(&u, &x0, (0.5, 0.9), 1.0 / 64.0).unwrap();
        for s in &t.samples {
            let r = ((s.point[0] - c[0]).powi(2) + (s.point[1] - c[1]).powi(2)).sqrt();
            assert!((r - s.tau).abs() < 1e-6, "{r} {}", s.tau);
        }
        assert!(t.max_normal_angle() < 1e-6);
        let r = ode_residual_sigma(&t).unwrap();
        for (k, tau) in r.tau.iter().enumerate() {
            assert!(r.variant_b[k].abs() < 20.0 * (t.dtau * t.dtau + h));
            assert!((r.variant_a[k].abs() - 2.0 / tau).abs() < 0.05);
        }
        for term in ode_residual_h(&u, &t).unwrap() {
            assert!(term.residual.abs() < 20.0 * (t.dtau * t.dtau + h), "{term:?}");
        }
    }
}
