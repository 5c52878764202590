//! Level surfaces `{u = τ}` as height graphs over the remaining axes, with
//! their metric, normal, velocity `σ = 1/|∇u|`, second fundamental form and
//! mean curvature.
//!
//! Conventions: `ν = ∇u/|∇u|`, `h(X, Y) = -⟨D_X ν, Y⟩`, `H = tr_g h = -div ν`.
//! A graph `x_a = γ(x')` whose column values increase with `x_a` therefore
//! has `h_ij = ∂_ij γ / W` and `H = div(Dγ / W)`, `W = √(1 + |Dγ|²)`, so an
//! upward-facing sphere cap of radius `r` has `H = -(d-1)/r`.

mod holder;

use std::io::Write;

use crate::field::stencil::cubic_weights;
use crate::field::{fmt_real, norm, FieldError, Index, Interp, Mat3, ScalarField, Vec3};
use crate::linalg::{frobenius_sq, mat_mul, projector, sym_spectral_norm};

pub use holder::{holder_norm, holder_norms, HolderNorm, HolderValue};

/// Bisection steps used to locate a crossing inside its bracketing cell.
pub const BISECTION_STEPS: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum LevelError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("column at base node {node:?} does not cross level {tau}")]
    NoCrossing { node: Vec<usize>, tau: f64 },
    #[error("column at base node {node:?} crosses level {tau} more than once or downwards")]
    MultipleCrossings { node: Vec<usize>, tau: f64 },
    #[error("level height {height} at base node {node:?} is within 2h of the box edge")]
    TooNearBoundary { node: Vec<usize>, height: f64 },
    #[error("gradient norm {norm:e} too small at {point:?}")]
    DegenerateGradient { point: Vec<f64>, norm: f64 },
    #[error("Hölder region is empty")]
    EmptyRegion,
    #[error("Hölder exponent must lie in (0, 1], got {0}")]
    BadAlpha(f64),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("height axis {axis} invalid for dimension {dim}")]
    BadAxis { axis: usize, dim: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Smallest gradient norm accepted when normalizing `∇u`.
pub const MIN_GRADIENT: f64 = 1e-8;

/// Rectangular block of base nodes: the grid nodes of every axis except the
/// height axis, restricted to an index window.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseWindow {
    n: usize,
    axes: [usize; 2],
    start: [usize; 2],
    shape: [usize; 2],
    origin: [f64; 2],
    spacing: f64,
}

impl BaseWindow {
    /// Base over all nodes of `u`'s grid with height along `axis`.
    pub fn full(u: &ScalarField, axis: usize) -> Result<Self, LevelError> {
        let g = u.grid();
        let d = g.dim();
        if axis >= d {
            return Err(LevelError::BadAxis { axis, dim: d });
        }
        let mut axes = [0usize; 2];
        let mut shape = [1usize; 2];
        let mut origin = [0.0; 2];
        for (k, a) in (0..d).filter(|&a| a != axis).enumerate() {
            axes[k] = a;
            shape[k] = g.shape()[a];
            origin[k] = g.origin()[a];
        }
        Ok(Self {
            n: d - 1,
            axes,
            start: [0, 0],
            shape,
            origin,
            spacing: g.spacing(),
        })
    }

    /// Square window of half-width `radius` nodes around base node `center`, clipped to the grid.
    pub fn around(u: &ScalarField, axis: usize, center: &[usize], radius: usize) -> Result<Self, LevelError> {
        let mut w = Self::full(u, axis)?;
        for k in 0..w.n {
            let lo = center[k].saturating_sub(radius);
            let hi = (center[k] + radius).min(w.shape[k] - 1);
            w.origin[k] += lo as f64 * w.spacing;
            w.start[k] = lo;
            w.shape[k] = hi - lo + 1;
        }
        Ok(w)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.shape[..self.n].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.n]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Ambient axes spanned by the base, in order.
    pub fn axes(&self) -> &[usize] {
        &self.axes[..self.n]
    }

    /// Offset of the window into the full base grid.
    pub fn start(&self) -> &[usize] {
        &self.start[..self.n]
    }

    #[inline]
    pub fn offset(&self, j: [usize; 2]) -> usize {
        if self.n == 1 {
            j[0]
        } else {
            j[0] * self.shape[1] + j[1]
        }
    }

    #[inline]
    pub fn index_of(&self, k: usize) -> [usize; 2] {
        if self.n == 1 {
            [k, 0]
        } else {
            [k / self.shape[1], k % self.shape[1]]
        }
    }

    /// Base coordinates of window node `k` (second entry zero when n = 1).
    pub fn coords(&self, k: usize) -> [f64; 2] {
        let j = self.index_of(k);
        let mut x = [0.0; 2];
        for a in 0..self.n {
            x[a] = self.origin[a] + j[a] as f64 * self.spacing;
        }
        x
    }

    /// Ambient grid index of the column node at height index `z`.
    pub fn ambient_index(&self, k: usize, axis: usize, z: usize) -> Index {
        let j = self.index_of(k);
        let mut idx = [0usize; 3];
        for a in 0..self.n {
            idx[self.axes[a]] = self.start[a] + j[a];
        }
        idx[axis] = z;
        idx
    }

    /// Ambient point above base node `k` at `height`.
    pub fn ambient_point(&self, k: usize, axis: usize, height: f64) -> Vec3 {
        let x = self.coords(k);
        let mut p = [0.0; 3];
        for a in 0..self.n {
            p[self.axes[a]] = x[a];
        }
        p[axis] = height;
        p
    }

    /// Window nodes at least `margin` nodes away from the window edges.
    pub fn is_interior(&self, k: usize, margin: usize) -> bool {
        let j = self.index_of(k);
        (0..self.n).all(|a| j[a] >= margin && j[a] + margin < self.shape[a])
    }

    /// First derivative along base axis `a` of node values `f` (one-sided at edges).
    fn d1(&self, f: &dyn Fn([usize; 2]) -> f64, j: [usize; 2], a: usize) -> f64 {
        let n = self.shape[a];
        let h = self.spacing;
        let at = |o: isize| {
            let mut q = j;
            q[a] = (j[a] as isize + o) as usize;
            f(q)
        };
        if j[a] == 0 {
            (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
        } else if j[a] == n - 1 {
            (3.0 * at(0) - 4.0 * at(-1) + at(-2)) / (2.0 * h)
        } else {
            (at(1) - at(-1)) / (2.0 * h)
        }
    }

    fn d2(&self, f: &dyn Fn([usize; 2]) -> f64, j: [usize; 2], a: usize) -> f64 {
        let n = self.shape[a];
        let h2 = self.spacing * self.spacing;
        let at = |o: isize| {
            let mut q = j;
            q[a] = (j[a] as isize + o) as usize;
            f(q)
        };
        if n < 4 {
            let mut q = j;
            q[a] = j[a].clamp(1, n - 2);
            let c = |o: isize| {
                let mut r = q;
                r[a] = (q[a] as isize + o) as usize;
                f(r)
            };
            return (c(1) - 2.0 * c(0) + c(-1)) / h2;
        }
        if j[a] == 0 {
            (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2
        } else if j[a] == n - 1 {
            (2.0 * at(0) - 5.0 * at(-1) + 4.0 * at(-2) - at(-3)) / h2
        } else {
            (at(1) - 2.0 * at(0) + at(-1)) / h2
        }
    }

    /// Gradient and Hessian of node values over the window.
    pub fn derivatives(&self, values: &[f64], k: usize) -> ([f64; 2], [[f64; 2]; 2]) {
        let f = |q: [usize; 2]| values[self.offset(q)];
        let j = self.index_of(k);
        let mut g = [0.0; 2];
        let mut hs = [[0.0; 2]; 2];
        for a in 0..self.n {
            g[a] = self.d1(&f, j, a);
            hs[a][a] = self.d2(&f, j, a);
        }
        if self.n == 2 {
            let inner = |q: [usize; 2]| self.d1(&f, q, 1);
            let m = self.d1(&inner, j, 0);
            hs[0][1] = m;
            hs[1][0] = m;
        }
        (g, hs)
    }
}

/// Cached geometry at one base node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGeometry {
    pub height: f64,
    /// `Dγ` in base-axis order.
    pub dgamma: [f64; 2],
    pub d2gamma: [[f64; 2]; 2],
    /// Induced metric `g = I + Dγ⊗Dγ`.
    pub metric: [[f64; 2]; 2],
    pub inv_metric: [[f64; 2]; 2],
    /// Unit normal `∇u/|∇u|` from the field (ambient components).
    pub nu: Vec3,
    pub sigma: f64,
    /// Coordinate second fundamental form `h_ij = ∂_ij γ / W`.
    pub h: [[f64; 2]; 2],
    /// The same tensor pushed into ambient coordinates, `X g⁻¹ h g⁻¹ Xᵀ`.
    pub h_ambient: Mat3,
    pub mean_curvature: f64,
}

impl NodeGeometry {
    /// `√det g = √(1 + |Dγ|²)`.
    pub fn area_factor(&self) -> f64 {
        (1.0 + self.dgamma[0] * self.dgamma[0] + self.dgamma[1] * self.dgamma[1]).sqrt()
    }

    /// Largest principal curvature magnitude.
    pub fn h_spectral(&self) -> f64 {
        sym_spectral_norm(&self.h_ambient)
    }

    /// Sum of squared principal curvatures.
    pub fn h_frobenius_sq(&self) -> f64 {
        frobenius_sq(&self.h_ambient)
    }
}

/// Level surface `{u = τ}` as a graph over a base window.
#[derive(Debug, Clone)]
pub struct LevelSurface {
    tau: f64,
    axis: usize,
    base: BaseWindow,
    nodes: Vec<NodeGeometry>,
    extrapolated: bool,
}

impl LevelSurface {
    /// Builds the geometry of the graph `x_axis = heights` and reads `σ`, `ν`
    /// off `u` at the graph points.
    pub fn from_heights(
        u: &ScalarField,
        tau: f64,
        axis: usize,
        base: BaseWindow,
        heights: Vec<f64>,
    ) -> Result<Self, LevelError> {
        if heights.len() != base.len() {
            return Err(LevelError::SizeMismatch {
                expected: base.len(),
                got: heights.len(),
            });
        }
        let n = base.n;
        let mut nodes = Vec::with_capacity(heights.len());
        for (k, &height) in heights.iter().enumerate() {
            let (dg, ddg) = base.derivatives(&heights, k);
            let mut metric = [[0.0; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    metric[a][b] = if a == b { 1.0 } else { 0.0 } + dg[a] * dg[b];
                }
            }
            let w2 = 1.0 + dg[0] * dg[0] + dg[1] * dg[1];
            let w = w2.sqrt();
            let mut inv = [[0.0; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    inv[a][b] = if a == b { 1.0 } else { 0.0 } - dg[a] * dg[b] / w2;
                }
            }
            let mut h = [[0.0; 2]; 2];
            let mut mean = 0.0;
            for a in 0..n {
                for b in 0..n {
                    h[a][b] = ddg[a][b] / w;
                }
            }
            for a in 0..n {
                for b in 0..n {
                    mean += inv[a][b] * h[a][b];
                }
            }
            // X g⁻¹ h g⁻¹ Xᵀ with tangent vectors X_a = e_{axes[a]} + γ_a e_axis.
            let mut ghg = [[0.0; 2]; 2];
            for a in 0..n {
                for b in 0..n {
                    let mut s = 0.0;
                    for c in 0..n {
                        for e in 0..n {
                            s += inv[a][c] * h[c][e] * inv[e][b];
                        }
                    }
                    ghg[a][b] = s;
                }
            }
            let mut x = [[0.0; 3]; 2];
            for a in 0..n {
                x[a][base.axes[a]] = 1.0;
                x[a][axis] = dg[a];
            }
            let mut h_amb = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            s += x[a][i] * ghg[a][b] * x[b][j];
                        }
                    }
                    h_amb[i][j] = s;
                }
            }
            let p = base.ambient_point(k, axis, height);
            let grad = u.gradient_smooth(&p[..u.dim()])?;
            let gn = norm(&grad);
            if !(gn >= MIN_GRADIENT) {
                return Err(LevelError::DegenerateGradient {
                    point: p[..u.dim()].to_vec(),
                    norm: gn,
                });
            }
            nodes.push(NodeGeometry {
                height,
                dgamma: dg,
                d2gamma: ddg,
                metric,
                inv_metric: inv,
                nu: [grad[0] / gn, grad[1] / gn, grad[2] / gn],
                sigma: 1.0 / gn,
                h,
                h_ambient: h_amb,
                mean_curvature: mean,
            });
        }
        Ok(Self {
            tau,
            axis,
            base,
            nodes,
            extrapolated: false,
        })
    }

    /// Marks the surface as obtained by extrapolation in `τ` rather than by extraction.
    pub fn mark_extrapolated(mut self) -> Self {
        self.extrapolated = true;
        self
    }

    pub fn is_extrapolated(&self) -> bool {
        self.extrapolated
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn axis(&self) -> usize {
        self.axis
    }

    pub fn base(&self) -> &BaseWindow {
        &self.base
    }

    pub fn nodes(&self) -> &[NodeGeometry] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn heights(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.height).collect()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.sigma).collect()
    }

    pub fn mean_curvature(&self) -> Vec<f64> {
        self.nodes.iter().map(|g| g.mean_curvature).collect()
    }

    /// Ambient point of base node `k` on the surface.
    pub fn point(&self, k: usize) -> Vec3 {
        self.base.ambient_point(k, self.axis, self.nodes[k].height)
    }

    /// Indices of nodes whose base coordinates lie in the closed ball of `radius` about the origin.
    pub fn nodes_in_ball(&self, radius: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let x = self.base.coords(k);
                (x[0] * x[0] + x[1] * x[1]).sqrt() <= radius * (1.0 + 1e-12)
            })
            .collect()
    }

    /// `H` recomputed from the cached metric and `h`.
    pub fn trace_check(&self, k: usize) -> f64 {
        let g = &self.nodes[k];
        let n = self.base.n;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += g.inv_metric[a][b] * g.h[a][b];
            }
        }
        s
    }

    /// CSV with header `x1[,x2],gamma,sigma,H,h11[,h12,h22]`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        if self.base.n == 1 {
            writeln!(w, "x1,gamma,sigma,H,h11")?;
        } else {
            writeln!(w, "x1,x2,gamma,sigma,H,h11,h12,h22")?;
        }
        for (k, g) in self.nodes.iter().enumerate() {
            let x = self.base.coords(k);
            let mut cols: Vec<f64> = x[..self.base.n].to_vec();
            cols.extend([g.height, g.sigma, g.mean_curvature, g.h[0][0]]);
            if self.base.n == 2 {
                cols.extend([g.h[0][1], g.h[1][1]]);
            }
            let line: Vec<String> = cols.into_iter().map(fmt_real).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Level surface with height along the last axis.
pub fn extract_level(u: &ScalarField, tau: f64) -> Result<LevelSurface, LevelError> {
    extract_level_along(u, tau, u.dim() - 1)
}

/// Level surface as a graph with height along `axis`.
pub fn extract_level_along(u: &ScalarField, tau: f64, axis: usize) -> Result<LevelSurface, LevelError> {
    let base = BaseWindow::full(u, axis)?;
    extract_level_in(u, tau, axis, base)
}

/// Level surface restricted to a base window.
pub fn extract_level_in(u: &ScalarField, tau: f64, axis: usize, base: BaseWindow) -> Result<LevelSurface, LevelError> {
    let heights = (0..base.len())
        .map(|k| column_crossing(u, tau, axis, &base, k))
        .collect::<Result<Vec<_>, _>>()?;
    LevelSurface::from_heights(u, tau, axis, base, heights)
}

/// Height where the column above base node `k` crosses `tau`: bracket between
/// adjacent nodes, then bisection on the four-point Lagrange interpolant of
/// the column values.
pub fn column_crossing(u: &ScalarField, tau: f64, axis: usize, base: &BaseWindow, k: usize) -> Result<f64, LevelError> {
    let g = u.grid();
    let nz = g.shape()[axis];
    let val = |z: usize| u.at(&base.ambient_index(k, axis, z));
    let node = || {
        let j = base.index_of(k);
        (0..base.n).map(|a| base.start[a] + j[a]).collect::<Vec<_>>()
    };
    let mut bracket = None;
    let mut changes = 0;
    let mut prev = val(0) >= tau;
    for z in 1..nz {
        let cur = val(z) >= tau;
        if cur != prev {
            changes += 1;
            if cur {
                bracket = Some(z - 1);
            }
        }
        prev = cur;
    }
    let lo = match (changes, bracket) {
        (0, _) => {
            return Err(LevelError::NoCrossing { node: node(), tau });
        }
        (1, Some(z)) => z,
        _ => {
            return Err(LevelError::MultipleCrossings { node: node(), tau });
        }
    };
    let interp = |t: f64| {
        let w = cubic_weights(t, nz);
        (0..w.len).map(|j| w.w[j] * val(w.start + j)).sum::<f64>() - tau
    };
    let (mut a, mut b) = (lo as f64, lo as f64 + 1.0);
    if val(lo) == tau {
        b = a;
    } else {
        for _ in 0..BISECTION_STEPS {
            let m = 0.5 * (a + b);
            if interp(m) >= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
    }
    let t = 0.5 * (a + b);
    let height = g.origin()[axis] + t * g.spacing();
    let margin = 2.0 * g.spacing();
    if height - g.origin()[axis] < margin || g.upper(axis) - height < margin {
        return Err(LevelError::TooNearBoundary { node: node(), height });
    }
    Ok(height)
}

/// Field-side shape data at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointShape {
    pub nu: Vec3,
    pub sigma: f64,
    /// Tangential second fundamental form `-P·Dν·P` in ambient coordinates.
    pub h: Mat3,
    pub mean_curvature: f64,
}

impl PointShape {
    pub fn h_spectral(&self) -> f64 {
        sym_spectral_norm(&self.h)
    }

    pub fn h_frobenius_sq(&self) -> f64 {
        frobenius_sq(&self.h)
    }
}

/// `ν`, `h`, `H` of the level set through `p`, from the field's gradient and Hessian.
pub fn shape_from_field(u: &ScalarField, p: &[f64]) -> Result<PointShape, LevelError> {
    shape_from_field_with(u, p, Interp::Linear)
}

pub fn shape_from_field_with(u: &ScalarField, p: &[f64], interp: Interp) -> Result<PointShape, LevelError> {
    let grad = u.gradient_with(p, interp)?;
    let hess = u.hessian_with(p, interp)?;
    shape_from_derivatives(&grad, &hess, u.dim()).ok_or_else(|| LevelError::DegenerateGradient {
        point: p.to_vec(),
        norm: norm(&grad),
    })
}

/// Shape data from a gradient and Hessian; `None` when `|∇u| < MIN_GRADIENT`.
pub fn shape_from_derivatives(grad: &Vec3, hess: &Mat3, dim: usize) -> Option<PointShape> {
    let gn = norm(grad);
    if !(gn >= MIN_GRADIENT) {
        return None;
    }
    let nu = [grad[0] / gn, grad[1] / gn, grad[2] / gn];
    let p = projector(&nu);
    let mut h = mat_mul(&p, &mat_mul(hess, &p));
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v = -*v / gn;
        }
    }
    let mean = (0..dim).map(|a| h[a][a]).sum();
    Some(PointShape {
        nu,
        sigma: 1.0 / gn,
        h,
        mean_curvature: mean,
    })
}

/// Largest principal curvature over the given levels, restricted to base nodes
/// within `radius` of the origin (all nodes when `radius` is `None`).
pub fn eta_bound(u: &ScalarField, taus: &[f64], radius: Option<f64>) -> Result<f64, LevelError> {
    let mut surfaces = Vec::with_capacity(taus.len());
    for &t in taus {
        surfaces.push(extract_level(u, t)?);
    }
    Ok(eta_of_surfaces(&surfaces, radius))
}

pub fn eta_of_surfaces(surfaces: &[LevelSurface], radius: Option<f64>) -> f64 {
    let mut eta: f64 = 0.0;
    for s in surfaces {
        let ids: Vec<usize> = match radius {
            Some(r) => s.nodes_in_ball(r),
            None => (0..s.len()).collect(),
        };
        for k in ids {
            eta = eta.max(s.nodes[k].h_spectral());
        }
    }
    eta
}

/// Conservative Laplace–Beltrami operator `(1/√g) ∂_i(√g g^{ij} ∂_j f)` with
/// midpoint-averaged coefficients; `None` on the outermost ring of nodes.
pub fn laplace_beltrami(s: &LevelSurface, f: &[f64]) -> Result<Vec<Option<f64>>, LevelError> {
    if f.len() != s.len() {
        return Err(LevelError::SizeMismatch {
            expected: s.len(),
            got: f.len(),
        });
    }
    let b = &s.base;
    let h = b.spacing;
    let n = b.n;
    // A^{ij} = √g g^{ij}
    let coef: Vec<[[f64; 2]; 2]> = s
        .nodes
        .iter()
        .map(|g| {
            let w = g.area_factor();
            let mut a = [[0.0; 2]; 2];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = w * g.inv_metric[i][j];
                }
            }
            a
        })
        .collect();
    let at = |j: [usize; 2]| b.offset(j);
    let shift = |j: [usize; 2], a: usize, o: isize| {
        let mut q = j;
        q[a] = (j[a] as isize + o) as usize;
        q
    };
    let mut out = vec![None; s.len()];
    for (k, o) in out.iter_mut().enumerate() {
        if !b.is_interior(k, 1) {
            continue;
        }
        let j = b.index_of(k);
        let mut acc = 0.0;
        for a in 0..n {
            let jp = shift(j, a, 1);
            let jm = shift(j, a, -1);
            let cp = 0.5 * (coef[at(j)][a][a] + coef[at(jp)][a][a]);
            let cm = 0.5 * (coef[at(j)][a][a] + coef[at(jm)][a][a]);
            acc += (cp * (f[at(jp)] - f[at(j)]) - cm * (f[at(j)] - f[at(jm)])) / (h * h);
        }
        if n == 2 {
            for (a, c) in [(0usize, 1usize), (1, 0)] {
                let flux = |q: [usize; 2]| {
                    coef[at(q)][a][c] * (f[at(shift(q, c, 1))] - f[at(shift(q, c, -1))]) / (2.0 * h)
                };
                acc += (flux(shift(j, a, 1)) - flux(shift(j, a, -1))) / (2.0 * h);
            }
        }
        *o = Some(acc / s.nodes[k].area_factor());
    }
    Ok(out)
}
