//! Gradient-bound ratios and the barrier check on solved instances.

use serde::{Deserialize, Serialize};

use super::VerifyError;
use crate::levelset::{extract_level, BaseWindow, LevelSurface};
use crate::solver::Solution;

/// Number of uniform `τ` levels from `-1` to `1`.
pub const TAU_LEVELS: usize = 21;

/// Discretization slack on `Δ(σ - ε)`, in units of `h²`.
pub const BARRIER_SLACK: f64 = 50.0;

/// Radius of the interior region where the interior bound and the theorem norms are measured.
pub(super) const INTERIOR_RADIUS: f64 = 0.5;

/// `count` uniform levels from `-1` to `1`.
pub fn tau_levels(count: usize) -> Vec<f64> {
    let m = (count.max(2) - 1) as f64;
    (0..count.max(2)).map(|k| -1.0 + 2.0 * k as f64 / m).collect()
}

/// Level surfaces of the solution's geometry field; `τ = ±1` are the solver's free boundaries.
pub fn solution_levels(sol: &Solution, taus: &[f64]) -> Result<Vec<LevelSurface>, VerifyError> {
    let geo = sol.geometry_field();
    let axis = geo.dim() - 1;
    taus.iter()
        .map(|&tau| {
            let graph = if tau == 1.0 {
                Some(&sol.gamma_plus)
            } else if tau == -1.0 {
                Some(&sol.gamma_minus)
            } else {
                None
            };
            Ok(match graph {
                Some(g) => LevelSurface::from_heights(geo, tau, axis, BaseWindow::full(geo, axis)?, g.clone())?,
                None => extract_level(geo, tau)?,
            })
        })
        .collect()
}

/// Base nodes this close to the edge have curvature stencils reaching the
/// prescribed lateral heights and are left out of `η`.
pub const ETA_MARGIN: usize = 2;

/// Largest spectral norm of `h` over the levels, away from the lateral edge.
pub fn measured_eta(levels: &[LevelSurface]) -> f64 {
    let mut eta: f64 = 0.0;
    for s in levels {
        for (k, g) in s.nodes().iter().enumerate() {
            if s.base().is_interior(k, ETA_MARGIN) {
                eta = eta.max(g.h_spectral());
            }
        }
    }
    eta
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eta: f64,
    /// `sup|σ - ε|` over all levels and nodes.
    pub sup_dev: f64,
    /// `sup|σ - ε|` over `|x| ≤ 1/2`.
    pub sup_dev_interior: f64,
    /// `sup|σ - ε|` per level.
    pub per_level: Vec<f64>,
    /// `sup|σ - ε| / (ε²η)`; `None` when `η < 1e-10`.
    pub c_naive: Option<f64>,
    /// `sup_{|x| ≤ 1/2} |σ - ε| / (ε³η²)`; `None` when `η < 1e-10`.
    pub c_interior: Option<f64>,
    /// Whether the measured `η` satisfies the hypothesis `η < 1/2`.
    pub eta_below_half: bool,
}

pub(super) fn bounds_of(levels: &[LevelSurface], eps: f64) -> Bounds {
    let eta = measured_eta(levels);
    let mut per_level = Vec::with_capacity(levels.len());
    let mut interior: f64 = 0.0;
    for s in levels {
        let mut m: f64 = 0.0;
        for (k, g) in s.nodes().iter().enumerate() {
            if s.base().is_interior(k, 1) {
                m = m.max((g.sigma - eps).abs());
            }
        }
        per_level.push(m);
        for k in s.nodes_in_ball(INTERIOR_RADIUS) {
            interior = interior.max((s.nodes()[k].sigma - eps).abs());
        }
    }
    let sup_dev = per_level.iter().copied().fold(0.0, f64::max);
    let applicable = eta >= 1e-10;
    Bounds {
        eta,
        sup_dev,
        sup_dev_interior: interior,
        per_level,
        c_naive: applicable.then(|| sup_dev / (eps * eps * eta)),
        c_interior: applicable.then(|| interior / (eps.powi(3) * eta * eta)),
        eta_below_half: eta < 0.5,
    }
}

/// Naive and interior gradient-bound ratios over the 21 standard levels.
pub fn check_bounds(sol: &Solution) -> Result<Bounds, VerifyError> {
    let eps = sol.eps().ok_or(VerifyError::MissingEps)?;
    let levels = solution_levels(sol, &tau_levels(TAU_LEVELS))?;
    Ok(bounds_of(&levels, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// Worst margins of the barrier inequalities; each is `≥ 0` when satisfied
/// except the Laplacian ones, which must be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierMargins {
    /// `max (ΔΦ + 2nεη²)` over interior layer nodes.
    pub laplacian_max: f64,
    pub laplacian_min: f64,
    /// Mean of `ΔΦ + 2nεη²` with `σ` read on the free boundaries, where `σ = ε`.
    pub laplacian_at_free_boundary: f64,
    /// `min (Δσ + 2nεη² + 50h²)` over interior layer nodes.
    pub sigma: f64,
    /// `min Φ` on the free boundaries.
    pub free_boundary: f64,
    /// `min(Φ - C_x, C_x - (σ - ε))` on the lateral boundary.
    pub lateral: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub status: BarrierStatus,
    pub is_supersolution: bool,
    pub n: usize,
    pub eta: f64,
    pub c_tau: f64,
    pub c_x: f64,
    /// `-2nεη²`, the value of `ΔΦ + 2nεη²` at `σ = ε`.
    pub analytic_margin: f64,
    pub nodes_checked: usize,
    pub margins: Option<BarrierMargins>,
}

/// Checks `Φ = C_τε²(1 - u²) + C_x|x|²`, `C_τ = 6nεη²`, `C_x = 4εη²`, against `σ - ε`.
pub fn check_barrier(sol: &Solution) -> Result<BarrierReport, VerifyError> {
    let eps = sol.eps().ok_or(VerifyError::MissingEps)?;
    let levels = solution_levels(sol, &tau_levels(TAU_LEVELS))?;
    let eta = measured_eta(&levels);
    barrier_of(sol, &levels, eps, eta)
}

pub(super) fn barrier_of(
    sol: &Solution,
    levels: &[LevelSurface],
    eps: f64,
    eta: f64,
) -> Result<BarrierReport, VerifyError> {
    let base = sol.base();
    let n = base.n;
    let nf = n as f64;
    let c_tau = 6.0 * nf * eps * eta * eta;
    let c_x = 4.0 * eps * eta * eta;
    let target = 2.0 * nf * eps * eta * eta;
    let mut report = BarrierReport {
        status: BarrierStatus::NotApplicable,
        is_supersolution: false,
        n,
        eta,
        c_tau,
        c_x,
        analytic_margin: -target,
        nodes_checked: 0,
        margins: None,
    };
    if eta < 1e-10 {
        return Ok(report);
    }
    let lap_phi = |sigma: f64| 2.0 * nf * c_x - 2.0 * c_tau * eps * eps / (sigma * sigma);
    let phi = |tau: f64, x: &[f64; 2]| c_tau * eps * eps * (1.0 - tau * tau) + c_x * (x[0] * x[0] + x[1] * x[1]);

    let geo = sol.geometry_field();
    let grid = geo.grid();
    let h = grid.spacing();
    let nz = base.nz;
    let mut m = BarrierMargins {
        laplacian_max: f64::NEG_INFINITY,
        laplacian_min: f64::INFINITY,
        laplacian_at_free_boundary: 0.0,
        sigma: f64::INFINITY,
        free_boundary: f64::INFINITY,
        lateral: f64::INFINITY,
    };
    let mut count = 0;
    for k in (0..base.len()).filter(|&k| base.is_interior(k, 2)) {
        for z in 2..nz - 2 {
            let idx = grid.index_of(k * nz + z);
            if !(sol.u.at(&idx).abs() < 1.0) {
                continue;
            }
            let sigma = geo.nodal_sigma(&idx);
            let l = lap_phi(sigma) + target;
            m.laplacian_max = m.laplacian_max.max(l);
            m.laplacian_min = m.laplacian_min.min(l);
            m.sigma = m.sigma.min(geo.nodal_sigma_laplacian(&idx) + target + BARRIER_SLACK * h * h);
            count += 1;
        }
    }
    let mut fb_sum = 0.0;
    let mut fb_count = 0;
    for s in levels {
        let tau = s.tau();
        let fb = tau.abs() == 1.0;
        for (k, g) in s.nodes().iter().enumerate() {
            let x = s.base().coords(k);
            if fb {
                m.free_boundary = m.free_boundary.min(phi(tau, &x));
                if s.base().is_interior(k, 1) {
                    fb_sum += lap_phi(g.sigma) + target;
                    fb_count += 1;
                }
            }
            if !s.base().is_interior(k, 1) {
                let lat = (phi(tau, &x) - c_x).min(c_x - (g.sigma - eps));
                m.lateral = m.lateral.min(lat);
            }
        }
    }
    m.laplacian_at_free_boundary = if fb_count > 0 { fb_sum / fb_count as f64 } else { f64::NAN };
    report.nodes_checked = count;
    report.is_supersolution =
        count > 0 && m.laplacian_max < 0.0 && m.sigma >= 0.0 && m.free_boundary >= 0.0 && m.lateral >= 0.0;
    report.status = if report.is_supersolution {
        BarrierStatus::Pass
    } else {
        BarrierStatus::Fail
    };
    report.margins = Some(m);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{analytic_field, build_grid, BoxDomain, OracleParams};

    fn profile_solution() -> Solution {
        let eps = 0.1;
        let g = build_grid(&BoxDomain::new(&[-1.0, -0.5], &[1.0, 0.5]), eps / 8.0).unwrap();
        let p = OracleParams {
            eps: Some(eps),
            ..Default::default()
        };
        Solution::from_field(analytic_field("profile1d", &p, g).unwrap()).unwrap()
    }

    #[test]
    fn levels_are_uniform() {
        let t = tau_levels(21);
        assert_eq!(t.len(), 21);
        assert_eq!(t[0], -1.0);
        assert_eq!(t[20], 1.0);
        assert!((t[15] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn profile_bounds_not_applicable() {
        let sol = profile_solution();
        let b = check_bounds(&sol).unwrap();
        assert!(b.sup_dev <= 1e-8, "{b:?}");
        assert!(b.eta < 1e-10);
        assert!(b.c_naive.is_none() && b.c_interior.is_none());
        let r = check_barrier(&sol).unwrap();
        assert_eq!(r.status, BarrierStatus::NotApplicable);
        assert!(r.margins.is_none());
    }

    #[test]
    fn barrier_constants_by_substitution() {
        // ε = 0.05, η = 0.3, n = 1: C_τ = 0.027, C_x = 0.018, ΔΦ(σ = ε) = -0.018
        let (eps, eta, n): (f64, f64, f64) = (0.05, 0.3, 1.0);
        let c_tau = 6.0 * n * eps * eta * eta;
        let c_x = 4.0 * eps * eta * eta;
        assert!((c_tau - 0.027).abs() < 1e-14 && (c_x - 0.018).abs() < 1e-14);
        let lap = 2.0 * n * c_x - 2.0 * c_tau * eps * eps / (eps * eps);
        assert!((lap + 0.018).abs() < 1e-14);
        assert!(lap < -2.0 * n * eps * eta * eta);
    }
}
