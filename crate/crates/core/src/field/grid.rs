use super::FieldError;

/// Maximum ambient dimension handled by the stencils.
pub const MAX_DIM: usize = 3;
/// Fewest nodes per axis; three-node axes fall back to lower-order face stencils.
pub const MIN_NODES: usize = 3;

/// Fixed-size point; components beyond the grid dimension are zero.
pub type Vec3 = [f64; 3];
/// Fixed-size matrix; rows/columns beyond the grid dimension are zero.
pub type Mat3 = [[f64; 3]; 3];
/// Multi-index into a grid; trailing entries beyond the dimension are zero.
pub type Index = [usize; 3];

/// Axis-aligned box `[lo, hi]` in dimension 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: &[f64], hi: &[f64]) -> Self {
        Self {
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }
}

/// Uniform isotropic node lattice covering a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    shape: Index,
    origin: Vec3,
    spacing: f64,
}

/// Builds the grid with spacing `h` covering `domain`, one node per `h` plus the end node.
pub fn build_grid(domain: &BoxDomain, h: f64) -> Result<Grid, FieldError> {
    let dim = domain.lo.len();
    if !(2..=MAX_DIM).contains(&dim) || domain.hi.len() != dim {
        return Err(FieldError::BadDimension(dim));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(FieldError::BadSpacing(h));
    }
    let mut shape = [1usize; 3];
    let mut origin = [0.0; 3];
    for a in 0..dim {
        let side = domain.hi[a] - domain.lo[a];
        if !(side > 0.0) {
            return Err(FieldError::Degenerate { axis: a });
        }
        let cells = side / h;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-12 * cells.max(1.0) {
            return Err(FieldError::NonCommensurate { axis: a, side, h });
        }
        shape[a] = rounded as usize + 1;
        origin[a] = domain.lo[a];
    }
    Grid::new(&shape[..dim], &origin[..dim], h)
}

impl Grid {
    pub fn new(shape: &[usize], origin: &[f64], spacing: f64) -> Result<Self, FieldError> {
        let dim = shape.len();
        if !(2..=MAX_DIM).contains(&dim) || origin.len() != dim {
            return Err(FieldError::BadDimension(dim));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(FieldError::BadSpacing(spacing));
        }
        let mut s = [1usize; 3];
        let mut o = [0.0; 3];
        for a in 0..dim {
            if shape[a] < MIN_NODES {
                return Err(FieldError::TooCoarse { axis: a, nodes: shape[a] });
            }
            s[a] = shape[a];
            o[a] = origin[a];
        }
        Ok(Self {
            dim,
            shape: s,
            origin: o,
            spacing,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Upper corner of the covered box.
    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + (self.shape[axis] - 1) as f64 * self.spacing
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain {
            lo: self.origin().to_vec(),
            hi: (0..self.dim).map(|a| self.upper(a)).collect(),
        }
    }

    /// Coordinate of node `i` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.spacing
    }

    pub fn node(&self, idx: &[usize]) -> Vec3 {
        let mut p = [0.0; 3];
        for (a, pa) in p.iter_mut().enumerate().take(self.dim) {
            *pa = self.coord(a, idx[a]);
        }
        p
    }

    /// Row-major offset, last axis fastest.
    #[inline]
    pub fn offset(&self, idx: &Index) -> usize {
        match self.dim {
            2 => idx[0] * self.shape[1] + idx[1],
            _ => (idx[0] * self.shape[1] + idx[1]) * self.shape[2] + idx[2],
        }
    }

    pub fn index_of(&self, mut offset: usize) -> Index {
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = offset % self.shape[a];
            offset /= self.shape[a];
        }
        idx
    }

    /// Iterates over all multi-indices in storage order.
    pub fn indices(&self) -> impl Iterator<Item = Index> + '_ {
        (0..self.len()).map(move |o| self.index_of(o))
    }

    /// Index-space coordinate of `p` along `axis`.
    #[inline]
    pub fn to_index_space(&self, axis: usize, x: f64) -> f64 {
        (x - self.origin[axis]) / self.spacing
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let tol = 1e-12 * self.spacing;
        (0..self.dim).all(|a| p[a] >= self.origin[a] - tol && p[a] <= self.upper(a) + tol)
    }

    /// Smallest distance from `p` to the box boundary (negative outside).
    pub fn boundary_distance(&self, p: &[f64]) -> f64 {
        (0..self.dim)
            .map(|a| (p[a] - self.origin[a]).min(self.upper(a) - p[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Translated copy of the grid.
    pub fn shifted(&self, by: &[f64]) -> Grid {
        let mut g = self.clone();
        for a in 0..self.dim {
            g.origin[a] += by[a];
        }
        g
    }
}
