//! Nodal finite-difference stencils and tensor-product interpolation over
//! arbitrary node functions.
//!
//! Every stencil takes the node values through a closure so that derived
//! quantities (e.g. `1/|∇u|`) can be differentiated without materializing a
//! second field. Interior nodes use central differences; nodes on the box
//! faces fall back to second-order one-sided formulas, which is why a grid
//! needs at least four nodes per axis.

use super::grid::{Grid, Index, Mat3, Vec3};

#[inline]
fn step(idx: &Index, axis: usize, by: isize) -> Index {
    let mut j = *idx;
    j[axis] = (j[axis] as isize + by) as usize;
    j
}

/// First derivative along `axis` at a node.
#[inline]
pub fn d1<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index, axis: usize) -> f64 {
    let n = grid.shape()[axis];
    let h = grid.spacing();
    let i = idx[axis];
    if i == 0 {
        (-3.0 * f(idx) + 4.0 * f(&step(idx, axis, 1)) - f(&step(idx, axis, 2))) / (2.0 * h)
    } else if i == n - 1 {
        (3.0 * f(idx) - 4.0 * f(&step(idx, axis, -1)) + f(&step(idx, axis, -2))) / (2.0 * h)
    } else {
        (f(&step(idx, axis, 1)) - f(&step(idx, axis, -1))) / (2.0 * h)
    }
}

/// Second derivative along `axis` at a node.
#[inline]
pub fn d2<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index, axis: usize) -> f64 {
    let n = grid.shape()[axis];
    let h2 = grid.spacing() * grid.spacing();
    let i = idx[axis];
    if n < 4 {
        let c = i.clamp(1, n - 2);
        let mut j = *idx;
        j[axis] = c;
        return (f(&step(&j, axis, 1)) - 2.0 * f(&j) + f(&step(&j, axis, -1))) / h2;
    }
    if i == 0 {
        (2.0 * f(idx) - 5.0 * f(&step(idx, axis, 1)) + 4.0 * f(&step(idx, axis, 2))
            - f(&step(idx, axis, 3)))
            / h2
    } else if i == n - 1 {
        (2.0 * f(idx) - 5.0 * f(&step(idx, axis, -1)) + 4.0 * f(&step(idx, axis, -2))
            - f(&step(idx, axis, -3)))
            / h2
    } else {
        (f(&step(idx, axis, 1)) - 2.0 * f(idx) + f(&step(idx, axis, -1))) / h2
    }
}

/// Mixed derivative `∂_a ∂_b` at a node, `a != b`.
#[inline]
pub fn d11<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index, a: usize, b: usize) -> f64 {
    let inner = |j: &Index| d1(grid, f, j, b);
    d1(grid, &inner, idx, a)
}

pub fn gradient<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index) -> Vec3 {
    let mut g = [0.0; 3];
    for (a, ga) in g.iter_mut().enumerate().take(grid.dim()) {
        *ga = d1(grid, f, idx, a);
    }
    g
}

pub fn hessian<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index) -> Mat3 {
    let d = grid.dim();
    let mut m = [[0.0; 3]; 3];
    for a in 0..d {
        m[a][a] = d2(grid, f, idx, a);
        for b in (a + 1)..d {
            let v = d11(grid, f, idx, a, b);
            m[a][b] = v;
            m[b][a] = v;
        }
    }
    m
}

pub fn laplacian<F: Fn(&Index) -> f64>(grid: &Grid, f: &F, idx: &Index) -> f64 {
    (0..grid.dim()).map(|a| d2(grid, f, idx, a)).sum()
}

/// Per-axis interpolation weights: up to four consecutive nodes starting at `start`.
#[derive(Debug, Clone, Copy)]
pub struct AxisWeights {
    pub start: usize,
    pub len: usize,
    pub w: [f64; 4],
}

/// Linear weights along one axis for index-space coordinate `t`.
pub fn linear_weights(t: f64, n: usize) -> AxisWeights {
    let c = (t.floor().max(0.0) as usize).min(n - 2);
    let f = t - c as f64;
    AxisWeights {
        start: c,
        len: 2,
        w: [1.0 - f, f, 0.0, 0.0],
    }
}

/// Four-point Lagrange weights along one axis, shifted inward at the faces
/// (three points on a three-node axis). At a node the weights are exactly one
/// and zeros.
pub fn cubic_weights(t: f64, n: usize) -> AxisWeights {
    let m = n.min(4);
    let c = (t.floor().max(0.0) as usize).min(n - 2);
    let start = c.saturating_sub(1).min(n - m);
    let mut w = [0.0; 4];
    let x = t - start as f64;
    for (j, wj) in w.iter_mut().enumerate().take(m) {
        let mut num = 1.0;
        let mut den = 1.0;
        for k in 0..m {
            if k != j {
                num *= x - k as f64;
                den *= j as f64 - k as f64;
            }
        }
        *wj = num / den;
    }
    AxisWeights { start, len: m, w }
}

/// Tensor-product interpolation of a node function with precomputed axis weights.
/// Zero weights are skipped, so points on grid lines touch fewer nodes.
pub fn interpolate<T, F>(dim: usize, weights: &[AxisWeights; 3], f: F) -> T
where
    T: Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
    F: Fn(&Index) -> T,
{
    let mut acc = T::default();
    let (w0, w1, w2) = (&weights[0], &weights[1], &weights[2]);
    for i in 0..w0.len {
        let a = w0.w[i];
        if a == 0.0 {
            continue;
        }
        for j in 0..w1.len {
            let b = w1.w[j];
            if b == 0.0 {
                continue;
            }
            if dim == 2 {
                acc += f(&[w0.start + i, w1.start + j, 0]) * (a * b);
            } else {
                for k in 0..w2.len {
                    let c = w2.w[k];
                    if c == 0.0 {
                        continue;
                    }
                    acc += f(&[w0.start + i, w1.start + j, w2.start + k]) * (a * b * c);
                }
            }
        }
    }
    acc
}

/// Small value wrapper so that arrays can be accumulated by [`interpolate`].
#[derive(Debug, Clone, Copy, Default)]
pub struct V3(pub Vec3);

impl std::ops::AddAssign for V3 {
    fn add_assign(&mut self, o: V3) {
        for a in 0..3 {
            self.0[a] += o.0[a];
        }
    }
}

impl std::ops::Mul<f64> for V3 {
    type Output = V3;
    fn mul(self, s: f64) -> V3 {
        V3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct M3(pub Mat3);

impl std::ops::AddAssign for M3 {
    fn add_assign(&mut self, o: M3) {
        for a in 0..3 {
            for b in 0..3 {
                self.0[a][b] += o.0[a][b];
            }
        }
    }
}

impl std::ops::Mul<f64> for M3 {
    type Output = M3;
    fn mul(self, s: f64) -> M3 {
        let mut m = self.0;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        M3(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_weights_exact_at_nodes() {
        for i in 0..10 {
            let w = cubic_weights(i as f64, 10);
            let s: f64 = w.w.iter().sum();
            assert_eq!(s, 1.0);
            let pos = i - w.start;
            for (j, wj) in w.w.iter().enumerate() {
                assert_eq!(*wj, if j == pos { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cubic_weights_reproduce_cubics() {
        let f = |x: f64| 0.3 * x * x * x - x * x + 2.0 * x - 1.0;
        for &t in &[0.2, 1.7, 4.5, 8.9] {
            let w = cubic_weights(t, 10);
            let v: f64 = (0..4).map(|j| w.w[j] * f((w.start + j) as f64)).sum();
            assert!((v - f(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_sided_stencils_are_second_order_exact_on_quadratics() {
        let g = Grid::new(&[6, 5], &[0.0, 0.0], 0.1).unwrap();
        let f = |i: &Index| {
            let p = g.node(i);
            p[0] * p[0] + 3.0 * p[0] * p[1] - p[1] * p[1]
        };
        for i in 0..6 {
            for j in 0..5 {
                let idx = [i, j, 0];
                let p = g.node(&idx);
                let gr = gradient(&g, &f, &idx);
                assert!((gr[0] - (2.0 * p[0] + 3.0 * p[1])).abs() < 1e-12);
                assert!((gr[1] - (3.0 * p[0] - 2.0 * p[1])).abs() < 1e-12);
                let hs = hessian(&g, &f, &idx);
                assert!((hs[0][0] - 2.0).abs() < 1e-9);
                assert!((hs[0][1] - 3.0).abs() < 1e-9);
                assert!((hs[1][1] + 2.0).abs() < 1e-9);
            }
        }
    }
}
