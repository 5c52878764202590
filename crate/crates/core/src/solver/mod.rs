//! Discrete solutions of the free-boundary problem
//! `Δu = 0` in `{|u| < 1}`, `|∇u| = 1/ε` on `∂{|u| < 1}`, on the box
//! `[-1, 1]^n × [-L, L]` with the tilted-profile Dirichlet data of a seed graph.
//!
//! Two independent paths: [`minimize_variational`] minimizes the smoothed
//! energy, [`solve_trial_free_boundary`] moves a pair of graphs until the
//! harmonic function between them has the right flux.

mod config;
mod slab;
mod trial;
mod variational;

use std::io::Write;

use crate::expr::Expr;
use crate::field::{fmt_real, norm, FieldError, Grid, ScalarField};
use crate::levelset::LevelError;

pub use config::{Accel, ConfigError, Mode, SolverConfig, KEYS};
pub use slab::{laplace_between_graphs, BaseGrid, SlabSolution};
pub use trial::solve_trial_free_boundary;
pub use variational::{minimize_variational, smoothstep_potential};

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Level(#[from] LevelError),
    #[error("smoothing width {0} outside (0, 1)")]
    BadDelta(f64),
    #[error("graphs collide at base node {node}: gap {gap} < 4h")]
    GraphCollision { node: usize, gap: f64 },
    #[error("boundary residual grew for {0} consecutive iterations")]
    Divergence(usize),
    #[error("linear solve stalled at residual {residual} after {sweeps} sweeps")]
    LinearSolveStall { residual: f64, sweeps: usize },
    #[error("u is not strictly increasing inside the layer on the column over base node {node}")]
    NonMonotoneColumn { node: usize },
    #[error("no convergence within {} iterations (last residual {})", .log.iterations, .log.residual.last().copied().unwrap_or(f64::NAN))]
    MaxIterations { log: ConvergenceLog },
    #[error("graph data has {got} entries, base grid has {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("wrong mode for this entry point: {0}")]
    WrongMode(Mode),
}

/// Per-iteration record of a solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceLog {
    pub iterations: usize,
    /// Dimensionless residual: `sup|ε q± - 1|` (trial) or `ε·sup|projected gradient|` (variational).
    pub residual: Vec<f64>,
    pub energy: Vec<f64>,
    /// Inner work per iteration: SOR sweeps (trial) or backtracking steps (variational).
    pub inner: Vec<usize>,
    /// Smoothing width in effect at each iteration (variational only).
    pub delta: Vec<f64>,
    /// `sup|ε q± - 1|` of the converged graphs as measured by the solver itself.
    pub final_flux_residual: f64,
}

impl ConvergenceLog {
    fn push(&mut self, residual: f64, energy: f64, inner: usize, delta: Option<f64>) {
        self.iterations += 1;
        self.residual.push(residual);
        self.energy.push(energy);
        self.inner.push(inner);
        if let Some(d) = delta {
            self.delta.push(d);
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,residual,energy,inner,delta")?;
        for k in 0..self.iterations {
            let delta = self.delta.get(k).map(|d| fmt_real(*d)).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                fmt_real(self.residual[k]),
                fmt_real(self.energy[k]),
                self.inner[k],
                delta
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Solution on the ambient grid, `±1` outside the layer.
    pub u: ScalarField,
    /// Same values inside the layer, continued smoothly past both free
    /// boundaries; used for geometry at and near `τ = ±1`.
    pub extension: Option<ScalarField>,
    pub gamma_minus: Vec<f64>,
    pub gamma_plus: Vec<f64>,
    pub log: ConvergenceLog,
}

impl Solution {
    /// Wraps an arbitrary field and graph pair; only the graph invariants are checked.
    pub fn from_parts(u: ScalarField, gamma_minus: Vec<f64>, gamma_plus: Vec<f64>) -> Result<Self, SolverError> {
        let base = BaseGrid::of(u.grid());
        for g in [&gamma_minus, &gamma_plus] {
            if g.len() != base.len() {
                return Err(SolverError::SizeMismatch {
                    expected: base.len(),
                    got: g.len(),
                });
            }
        }
        if let Some(node) = (0..base.len()).find(|&k| !(gamma_minus[k] < gamma_plus[k])) {
            return Err(SolverError::GraphCollision {
                node,
                gap: gamma_plus[node] - gamma_minus[node],
            });
        }
        Ok(Self {
            u,
            extension: None,
            gamma_minus,
            gamma_plus,
            log: ConvergenceLog::default(),
        })
    }

    /// Recovers the free boundaries of a clamped field by continuing the
    /// last two layer nodes of each column linearly to `±1`; the same lines
    /// continue the field past them as the extension.
    pub fn from_field(u: ScalarField) -> Result<Self, SolverError> {
        let grid = u.grid().clone();
        let base = BaseGrid::of(&grid);
        let nz = base.nz;
        let h = grid.spacing();
        let z0 = grid.origin()[base.n];
        let v = u.values();
        let mut gm = Vec::with_capacity(base.len());
        let mut gp = Vec::with_capacity(base.len());
        let mut ext = v.to_vec();
        for k in 0..base.len() {
            let col = &v[k * nz..(k + 1) * nz];
            let inside: Vec<usize> = (0..nz).filter(|&z| col[z].abs() < 1.0).collect();
            let no_crossing = || LevelError::NoCrossing {
                node: vec![k],
                tau: 1.0,
            };
            let (Some(&lo), Some(&hi)) = (inside.first(), inside.last()) else {
                return Err(no_crossing().into());
            };
            if hi < lo + 1 || lo == 0 || hi + 1 == nz {
                return Err(no_crossing().into());
            }
            let y = |z: usize| z0 + z as f64 * h;
            let slope_lo = (col[lo + 1] - col[lo]) / h;
            let slope_hi = (col[hi] - col[hi - 1]) / h;
            if !(slope_lo > 0.0 && slope_hi > 0.0) {
                return Err(SolverError::NonMonotoneColumn { node: k });
            }
            gm.push(y(lo) - (col[lo] + 1.0) / slope_lo);
            gp.push(y(hi) + (1.0 - col[hi]) / slope_hi);
            for z in 0..lo {
                ext[k * nz + z] = col[lo] + slope_lo * (y(z) - y(lo));
            }
            for z in hi + 1..nz {
                ext[k * nz + z] = col[hi] + slope_hi * (y(z) - y(hi));
            }
        }
        let label = format!("{} extension", u.label());
        let mut ext = ScalarField::new(grid, ext, label)?;
        if let Some(e) = u.eps() {
            ext = ext.with_eps(e)?;
        }
        let mut sol = Self::from_parts(u, gm, gp)?;
        sol.extension = Some(ext);
        Ok(sol)
    }

    /// Rebuilds a solution from its extension field: the free boundaries are
    /// the `±1` levels and `u` is the clamped extension.
    pub fn from_extension(ext: ScalarField) -> Result<Self, SolverError> {
        let gm = crate::levelset::extract_level(&ext, -1.0)?.heights();
        let gp = crate::levelset::extract_level(&ext, 1.0)?.heights();
        let label = ext.label().strip_suffix(" extension").unwrap_or(ext.label()).to_string();
        let values = ext.values().iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let mut u = ScalarField::new(ext.grid().clone(), values, label)?;
        if let Some(e) = ext.eps() {
            u = u.with_eps(e)?;
        }
        let mut sol = Self::from_parts(u, gm, gp)?;
        sol.extension = Some(ext);
        Ok(sol)
    }

    /// Loads either dump written by a solve: labels ending in ` extension`
    /// go through [`Solution::from_extension`], anything else through
    /// [`Solution::from_field`].
    pub fn from_dump(field: ScalarField) -> Result<Self, SolverError> {
        if field.label().ends_with(" extension") {
            Self::from_extension(field)
        } else {
            Self::from_field(field)
        }
    }

    pub fn eps(&self) -> Option<f64> {
        self.u.eps()
    }

    /// Field to use for geometry: the extension when present.
    pub fn geometry_field(&self) -> &ScalarField {
        self.extension.as_ref().unwrap_or(&self.u)
    }

    pub fn base(&self) -> BaseGrid {
        BaseGrid::of(self.u.grid())
    }

    /// Writes `x1[,x2],gamma` rows for one of the graphs.
    pub fn write_graph_csv<W: Write>(&self, upper: bool, mut w: W) -> std::io::Result<()> {
        let base = self.base();
        let g = if upper { &self.gamma_plus } else { &self.gamma_minus };
        if base.n == 1 {
            writeln!(w, "x1,gamma")?;
        } else {
            writeln!(w, "x1,x2,gamma")?;
        }
        for (k, gk) in g.iter().enumerate() {
            let x = base.coords(k);
            if base.n == 1 {
                writeln!(w, "{},{}", fmt_real(x[0]), fmt_real(*gk))?;
            } else {
                writeln!(w, "{},{},{}", fmt_real(x[0]), fmt_real(x[1]), fmt_real(*gk))?;
            }
        }
        Ok(())
    }
}

/// Runs the solver selected by `config.mode`.
pub fn solve(config: &SolverConfig) -> Result<Solution, SolverError> {
    match config.mode {
        Mode::Variational => minimize_variational(config),
        Mode::TrialFb => solve_trial_free_boundary(config),
    }
}

/// `W = √(1 + |Dγ|²)` of the seed at base point `x`.
pub(crate) fn seed_slope_factor(gamma0: &Expr, x: &[f64; 2]) -> f64 {
    let j = gamma0.jet(x);
    (1.0 + j.d[0] * j.d[0] + j.d[1] * j.d[1]).sqrt()
}

/// Tilted one-dimensional profile matched to the seed graph, clamped to `[-1, 1]`.
/// The last coordinate of `p` is the vertical one.
pub fn profile_boundary_data(gamma0: &Expr, eps: f64, p: &[f64]) -> f64 {
    let d = p.len();
    let mut x = [0.0; 2];
    x[..d - 1].copy_from_slice(&p[..d - 1]);
    let w = seed_slope_factor(gamma0, &x);
    ((p[d - 1] - gamma0.eval(&x)) / (eps * w)).clamp(-1.0, 1.0)
}

/// Sum in a fixed binary tree order, independent of chunking.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Trapezoid weight of a node: `h^d` halved once per face the node lies on.
pub(crate) fn trapezoid_weight(grid: &Grid, idx: &[usize]) -> f64 {
    let h = grid.spacing();
    let mut w = h.powi(grid.dim() as i32);
    for (a, &i) in idx.iter().enumerate().take(grid.dim()) {
        if i == 0 || i + 1 == grid.shape()[a] {
            w *= 0.5;
        }
    }
    w
}

/// Trapezoidal quadrature of `∫ ε|∇u|²/2 + s_δ(u)/ε` with nodal gradients.
pub fn energy(u: &ScalarField, eps: f64, delta: f64) -> Result<f64, SolverError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SolverError::BadDelta(delta));
    }
    let grid = u.grid();
    let terms: Vec<f64> = grid
        .indices()
        .map(|idx| {
            let g = u.nodal_gradient(&idx);
            let gsq = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            let (s, _) = smoothstep_potential(u.at(&idx), delta);
            trapezoid_weight(grid, &idx[..grid.dim()]) * (0.5 * eps * gsq + s / eps)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Free-boundary residuals of a solution measured on the ambient grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FbResidual {
    pub interior_harmonicity: f64,
    pub boundary_flux: f64,
}

/// `sup|Δu|` over nodes at least `2h` inside the layer and `sup|ε|∇u| - 1|`
/// sampled `2h` inside each free boundary along its normal.
pub fn fb_residual(sol: &Solution) -> Result<FbResidual, SolverError> {
    let u = &sol.u;
    let eps = u.eps().ok_or_else(|| FieldError::BadParams("solution field carries no eps".into()))?;
    let grid = u.grid();
    let base = BaseGrid::of(grid);
    let h = grid.spacing();
    let nz = base.nz;
    let z0 = grid.origin()[base.n];
    let d = grid.dim();
    let mut lap: f64 = 0.0;
    let mut flux: f64 = 0.0;
    for k in 0..base.len() {
        if !base.is_interior(k, 1) {
            continue;
        }
        let mut bounds = [0.0; 2];
        for (side, g) in [&sol.gamma_minus, &sol.gamma_plus].into_iter().enumerate() {
            let dg = base.gradient(g, k);
            let w = (1.0 + dg[0] * dg[0] + dg[1] * dg[1]).sqrt();
            let sign = if side == 0 { 1.0 } else { -1.0 };
            bounds[side] = g[k] + sign * 2.0 * h * w;
            let mut p = [0.0; 3];
            let x = base.coords(k);
            for a in 0..base.n {
                p[a] = x[a] + sign * 2.0 * h * (-dg[a] / w);
            }
            p[base.n] = g[k] + sign * 2.0 * h / w;
            if grid.boundary_distance(&p[..d]) < 2.0 * h {
                continue;
            }
            let grad = u.gradient_at(&p[..d])?;
            flux = flux.max((eps * norm(&grad) - 1.0).abs());
        }
        for z in 1..nz - 1 {
            let y = z0 + z as f64 * h;
            if y >= bounds[0] && y <= bounds[1] {
                let idx = base.ambient_index(k, z);
                lap = lap.max(u.nodal_laplacian(&idx).abs());
            }
        }
    }
    Ok(FbResidual {
        interior_harmonicity: lap,
        boundary_flux: flux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_grid, BoxDomain, Oracle};

    #[test]
    fn profile_data_examples() {
        let flat = Expr::parse("0").unwrap();
        assert!((profile_boundary_data(&flat, 0.1, &[1.0, 0.05]) - 0.5).abs() < 1e-15);
        assert_eq!(profile_boundary_data(&flat, 0.05, &[1.0, 0.5]), 1.0);
        let c = Expr::parse("0.03*cos(pi*x)").unwrap();
        assert!(profile_boundary_data(&c, 0.05, &[0.0, 0.03]).abs() < 1e-15);
    }

    fn profile_on(eps: f64, h: f64) -> ScalarField {
        let g = build_grid(&BoxDomain::new(&[-1.0, -0.5], &[1.0, 0.5]), h).unwrap();
        Oracle::Profile1d { eps }.field(g).unwrap()
    }

    #[test]
    fn energy_of_profile_and_constant() {
        let e = energy(&profile_on(0.1, 1.0 / 160.0), 0.1, 1e-9).unwrap();
        assert!((e / 2.0 - 3.0).abs() < 0.1, "{e}");
        let e2 = energy(&profile_on(0.2, 1.0 / 160.0), 0.2, 1e-9).unwrap();
        assert!((e2 / 2.0 - 3.0).abs() < 0.1, "{e2}");
        let one = ScalarField::from_fn(profile_on(0.1, 0.05).grid().clone(), "", |_| 1.0).unwrap();
        assert_eq!(energy(&one, 0.1, 0.5).unwrap(), 0.0);
        assert!(matches!(energy(&one, 0.1, 1.0), Err(SolverError::BadDelta(_))));
    }

    #[test]
    fn residual_of_profile_and_non_solution() {
        let eps = 0.1;
        let u = profile_on(eps, 1.0 / 80.0);
        let sol = Solution::from_field(u).unwrap();
        for k in 0..sol.gamma_plus.len() {
            assert!((sol.gamma_plus[k] - eps).abs() < 1e-12);
            assert!((sol.gamma_minus[k] + eps).abs() < 1e-12);
        }
        let r = fb_residual(&sol).unwrap();
        assert!(r.interior_harmonicity < 1e-10 && r.boundary_flux < 1e-10, "{r:?}");

        let grid = sol.u.grid().clone();
        let dist = ScalarField::from_fn(grid, "distance", |p| p[1]).unwrap().with_eps(eps).unwrap();
        let fake = Solution::from_parts(dist, sol.gamma_minus.clone(), sol.gamma_plus.clone()).unwrap();
        let r = fb_residual(&fake).unwrap();
        assert!((r.boundary_flux - (1.0 - eps)).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn tilted_profile_flux() {
        let eps = 0.1;
        let h = 1.0 / 80.0;
        let g = build_grid(&BoxDomain::new(&[-1.0, -0.5], &[1.0, 0.5]), h).unwrap();
        let o = Oracle::Tilted {
            eps,
            direction: vec![0.6, 0.8],
        };
        let u = o.field(g).unwrap();
        let base = BaseGrid::of(u.grid());
        // 0.6 x + 0.8 y = ±ε
        let gm: Vec<f64> = (0..base.len()).map(|k| (-eps - 0.6 * base.coords(k)[0]) / 0.8).collect();
        let gp: Vec<f64> = (0..base.len()).map(|k| (eps - 0.6 * base.coords(k)[0]) / 0.8).collect();
        let sol = Solution::from_parts(u, gm, gp).unwrap();
        let r = fb_residual(&sol).unwrap();
        assert!(r.boundary_flux <= 5.0 * h, "{r:?}");
    }

    #[test]
    fn pairwise_sum_matches() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499500.0);
    }
}
