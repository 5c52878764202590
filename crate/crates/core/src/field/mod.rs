//! Structured-grid scalar fields with interpolation and second-order
//! finite-difference differentials.
//!
//! Two evaluation families are exposed:
//!
//! * [`ScalarField::sample`], [`ScalarField::gradient_at`] and
//!   [`ScalarField::hessian_at`] use multilinear interpolation of nodal
//!   values / nodal central differences. They are exact for affine data and
//!   second-order accurate, but only continuous across cells.
//! * The `*_smooth` variants interpolate the same nodal quantities with
//!   four-point Lagrange weights. Their error is a smooth function of the
//!   evaluation point, which is what the geometry code needs when it
//!   differentiates sampled quantities a second time.

mod grid;
mod io;
mod oracle;
pub mod stencil;

pub use grid::{build_grid, BoxDomain, Grid, Index, Mat3, Vec3, MAX_DIM, MIN_NODES};
pub use io::{fmt_real, load_field, read_field, write_field};
pub use oracle::{analytic_field, Oracle, OracleParams};

use stencil::{cubic_weights, interpolate, linear_weights, AxisWeights, M3, V3};

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("unsupported dimension {0} (expected 2 or 3)")]
    BadDimension(usize),
    #[error("spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("degenerate box along axis {axis}")]
    Degenerate { axis: usize },
    #[error("spacing {h} does not tile side {side} along axis {axis}")]
    NonCommensurate { axis: usize, side: f64, h: f64 },
    #[error("axis {axis} has only {nodes} nodes (need at least 3)")]
    TooCoarse { axis: usize, nodes: usize },
    #[error("point {0:?} lies outside the grid box")]
    OutOfDomain(Vec<f64>),
    #[error("point {point:?} is closer than {margin} to the box boundary")]
    TooNearBoundary { point: Vec<f64>, margin: f64 },
    #[error("unknown oracle `{0}`")]
    UnknownOracle(String),
    #[error("invalid oracle parameters: {0}")]
    BadParams(String),
    #[error("value count {got} does not match grid size {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("non-finite value at node offset {0}")]
    NonFinite(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Interpolation family used to carry nodal quantities to off-node points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interp {
    /// Multilinear; needs a `2h` margin for derivatives.
    #[default]
    Linear,
    /// Four-point Lagrange per axis.
    Cubic,
}

/// Grid-sampled scalar function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
    label: String,
    eps: Option<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, label: impl Into<String>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::SizeMismatch {
                got: values.len(),
                expected: grid.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(bad));
        }
        Ok(Self {
            grid,
            values,
            label: sanitize_label(&label.into()),
            eps: None,
        })
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, label: impl Into<String>, f: impl Fn(&[f64]) -> f64) -> Result<Self, FieldError> {
        let d = grid.dim();
        let values = grid.indices().map(|i| f(&grid.node(&i)[..d])).collect();
        Self::new(grid, values, label)
    }

    pub fn with_eps(mut self, eps: f64) -> Result<Self, FieldError> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(FieldError::BadParams(format!("eps must be positive, got {eps}")));
        }
        self.eps = Some(eps);
        Ok(self)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = sanitize_label(&label.into());
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    pub fn at(&self, idx: &Index) -> f64 {
        self.values[self.grid.offset(idx)]
    }

    #[inline]
    pub(crate) fn node_fn(&self) -> impl Fn(&Index) -> f64 + '_ {
        move |i: &Index| self.values[self.grid.offset(i)]
    }

    pub fn nodal_gradient(&self, idx: &Index) -> Vec3 {
        stencil::gradient(&self.grid, &self.node_fn(), idx)
    }

    pub fn nodal_hessian(&self, idx: &Index) -> Mat3 {
        stencil::hessian(&self.grid, &self.node_fn(), idx)
    }

    pub fn nodal_laplacian(&self, idx: &Index) -> f64 {
        stencil::laplacian(&self.grid, &self.node_fn(), idx)
    }

    fn check_inside(&self, p: &[f64]) -> Result<(), FieldError> {
        if p.len() < self.dim() || !self.grid.contains(p) || p.iter().any(|v| !v.is_finite()) {
            return Err(FieldError::OutOfDomain(p.to_vec()));
        }
        Ok(())
    }

    fn check_margin(&self, p: &[f64]) -> Result<(), FieldError> {
        self.check_inside(p)?;
        let margin = 2.0 * self.grid.spacing();
        if self.grid.boundary_distance(p) < margin * (1.0 - 1e-12) {
            return Err(FieldError::TooNearBoundary {
                point: p.to_vec(),
                margin,
            });
        }
        Ok(())
    }

    fn weights(&self, p: &[f64], cubic: bool) -> [AxisWeights; 3] {
        let mut w = [AxisWeights {
            start: 0,
            len: 1,
            w: [1.0, 0.0, 0.0, 0.0],
        }; 3];
        for (a, wa) in w.iter_mut().enumerate().take(self.dim()) {
            let t = self.grid.to_index_space(a, p[a]);
            let n = self.grid.shape()[a];
            *wa = if cubic { cubic_weights(t, n) } else { linear_weights(t, n) };
        }
        w
    }

    /// Multilinear interpolation; exact at nodes and for affine data.
    pub fn sample(&self, p: &[f64]) -> Result<f64, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, false);
        Ok(interpolate(self.dim(), &w, self.node_fn()))
    }

    /// Nodal central-difference gradient, interpolated multilinearly to `p`.
    pub fn gradient_at(&self, p: &[f64]) -> Result<Vec3, FieldError> {
        self.check_margin(p)?;
        let w = self.weights(p, false);
        Ok(interpolate(self.dim(), &w, |i: &Index| V3(self.nodal_gradient(i))).0)
    }

    /// Nodal second-difference Hessian, interpolated multilinearly to `p`.
    pub fn hessian_at(&self, p: &[f64]) -> Result<Mat3, FieldError> {
        self.check_margin(p)?;
        let w = self.weights(p, false);
        Ok(interpolate(self.dim(), &w, |i: &Index| M3(self.nodal_hessian(i))).0)
    }

    pub fn laplacian_at(&self, p: &[f64]) -> Result<f64, FieldError> {
        let h = self.hessian_at(p)?;
        Ok((0..self.dim()).map(|a| h[a][a]).sum())
    }

    /// Four-point Lagrange interpolation of nodal values.
    pub fn sample_smooth(&self, p: &[f64]) -> Result<f64, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, true);
        Ok(interpolate(self.dim(), &w, self.node_fn()))
    }

    /// Four-point Lagrange interpolation of the nodal gradient.
    pub fn gradient_smooth(&self, p: &[f64]) -> Result<Vec3, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, true);
        Ok(interpolate(self.dim(), &w, |i: &Index| V3(self.nodal_gradient(i))).0)
    }

    /// Four-point Lagrange interpolation of the nodal Hessian.
    pub fn hessian_smooth(&self, p: &[f64]) -> Result<Mat3, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, true);
        Ok(interpolate(self.dim(), &w, |i: &Index| M3(self.nodal_hessian(i))).0)
    }

    /// Four-point Lagrange interpolation of an arbitrary node function.
    pub fn interpolate_smooth<F: Fn(&Index) -> f64>(&self, p: &[f64], f: F) -> Result<f64, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, true);
        Ok(interpolate(self.dim(), &w, f))
    }

    /// Same as [`Self::interpolate_smooth`] for vector-valued node functions.
    pub fn interpolate_smooth_vec<F: Fn(&Index) -> Vec3>(&self, p: &[f64], f: F) -> Result<Vec3, FieldError> {
        self.check_inside(p)?;
        let w = self.weights(p, true);
        Ok(interpolate(self.dim(), &w, |i: &Index| V3(f(i))).0)
    }

    pub fn gradient_with(&self, p: &[f64], interp: Interp) -> Result<Vec3, FieldError> {
        match interp {
            Interp::Linear => self.gradient_at(p),
            Interp::Cubic => self.gradient_smooth(p),
        }
    }

    pub fn hessian_with(&self, p: &[f64], interp: Interp) -> Result<Mat3, FieldError> {
        match interp {
            Interp::Linear => self.hessian_at(p),
            Interp::Cubic => self.hessian_smooth(p),
        }
    }

    pub fn sample_with(&self, p: &[f64], interp: Interp) -> Result<f64, FieldError> {
        match interp {
            Interp::Linear => self.sample(p),
            Interp::Cubic => self.sample_smooth(p),
        }
    }

    /// Node value of the surface velocity `1/|∇u|` (infinite at critical nodes).
    pub fn nodal_sigma(&self, idx: &Index) -> f64 {
        1.0 / norm(&self.nodal_gradient(idx))
    }

    /// Second-difference Laplacian of the node function `1/|∇u|`.
    pub fn nodal_sigma_laplacian(&self, idx: &Index) -> f64 {
        stencil::laplacian(&self.grid, &|i: &Index| self.nodal_sigma(i), idx)
    }

    pub fn nodal_sigma_gradient(&self, idx: &Index) -> Vec3 {
        stencil::gradient(&self.grid, &|i: &Index| self.nodal_sigma(i), idx)
    }

    /// Same field on a translated grid.
    pub fn shifted(&self, by: &[f64]) -> ScalarField {
        let mut f = self.clone();
        f.grid = self.grid.shifted(by);
        f
    }
}

fn sanitize_label(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

#[inline]
pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn to_vec3(p: &[f64]) -> Vec3 {
    let mut v = [0.0; 3];
    v[..p.len()].copy_from_slice(p);
    v
}
