//! Harmonic functions between two graphs, solved on the mapped rectangle
//! `s = (y - m)/w ∈ [-1, 1]`, `m = (γ₊ + γ₋)/2`, `w = (γ₊ - γ₋)/2`.

use super::SolverError;
use crate::field::stencil::cubic_weights;
use crate::field::{FieldError, Grid, Index, ScalarField};

/// Base nodes of an ambient grid whose last axis is vertical.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseGrid {
    pub n: usize,
    pub shape: [usize; 2],
    pub origin: [f64; 2],
    pub h: f64,
    /// Vertical node count and origin of the ambient grid.
    pub nz: usize,
    pub z0: f64,
}

impl BaseGrid {
    pub fn of(grid: &Grid) -> Self {
        let n = grid.dim() - 1;
        let mut shape = [1usize; 2];
        let mut origin = [0.0; 2];
        shape[..n].copy_from_slice(&grid.shape()[..n]);
        origin[..n].copy_from_slice(&grid.origin()[..n]);
        Self {
            n,
            shape,
            origin,
            h: grid.spacing(),
            nz: grid.shape()[n],
            z0: grid.origin()[n],
        }
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index_of(&self, k: usize) -> [usize; 2] {
        [k / self.shape[1], k % self.shape[1]]
    }

    /// Offset step of base axis `a`.
    #[inline]
    pub fn stride(&self, a: usize) -> usize {
        if a == 0 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn coords(&self, k: usize) -> [f64; 2] {
        let j = self.index_of(k);
        let mut x = [0.0; 2];
        for a in 0..self.n {
            x[a] = self.origin[a] + j[a] as f64 * self.h;
        }
        x
    }

    pub fn is_interior(&self, k: usize, margin: usize) -> bool {
        let j = self.index_of(k);
        (0..self.n).all(|a| j[a] >= margin && j[a] + margin < self.shape[a])
    }

    pub fn ambient_index(&self, k: usize, z: usize) -> Index {
        let j = self.index_of(k);
        let mut idx = [0usize; 3];
        idx[..self.n].copy_from_slice(&j[..self.n]);
        idx[self.n] = z;
        idx
    }

    /// Central (one-sided at edges) first differences of node values.
    pub fn gradient(&self, f: &[f64], k: usize) -> [f64; 2] {
        let j = self.index_of(k);
        let mut g = [0.0; 2];
        for a in 0..self.n {
            let s = self.stride(a);
            let h = self.h;
            g[a] = if j[a] == 0 {
                (-3.0 * f[k] + 4.0 * f[k + s] - f[k + 2 * s]) / (2.0 * h)
            } else if j[a] + 1 == self.shape[a] {
                (3.0 * f[k] - 4.0 * f[k - s] + f[k - 2 * s]) / (2.0 * h)
            } else {
                (f[k + s] - f[k - s]) / (2.0 * h)
            };
        }
        g
    }

    /// Pure second differences at an interior node.
    fn second(&self, f: &[f64], k: usize) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..self.n {
            let s = self.stride(a);
            g[a] = (f[k + s] - 2.0 * f[k] + f[k - s]) / (self.h * self.h);
        }
        g
    }
}

/// Number of `s` levels used for a slab of the given graphs: at least eight
/// intervals and no coarser than `h` at the mean thickness.
pub fn slab_levels(lower: &[f64], upper: &[f64], h: f64) -> usize {
    let mean = lower.iter().zip(upper).map(|(a, b)| b - a).sum::<f64>() / lower.len() as f64;
    ((mean / h - 1e-9).ceil() as usize).max(8) + 1
}

/// Converged slab solution with the graphs it was solved between.
#[derive(Debug, Clone, PartialEq)]
pub struct SlabSolution {
    pub base: BaseGrid,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ns: usize,
    /// `U[k * ns + j]`, `s_j = -1 + j·Δs`.
    pub values: Vec<f64>,
    pub sweeps: usize,
    /// Jacobi-scaled residual sup-norm before each sweep.
    pub residual_history: Vec<f64>,
}

struct Coefficients {
    /// `Σ s_i² + 1/w²`, coefficient of `U_ss`.
    a: Vec<f64>,
    /// `2 s_i`, coefficients of `U_is`.
    b: Vec<[f64; 2]>,
    /// `Σ ∂_ii s`, coefficient of `U_s`.
    c: Vec<f64>,
}

fn coefficients(base: &BaseGrid, lower: &[f64], upper: &[f64], ns: usize) -> Coefficients {
    let m: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| 0.5 * (a + b)).collect();
    let w: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| 0.5 * (b - a)).collect();
    let ds = 2.0 / (ns - 1) as f64;
    let len = base.len() * ns;
    let mut co = Coefficients {
        a: vec![0.0; len],
        b: vec![[0.0; 2]; len],
        c: vec![0.0; len],
    };
    for k in 0..base.len() {
        if !base.is_interior(k, 1) {
            continue;
        }
        let (dm, dw) = (base.gradient(&m, k), base.gradient(&w, k));
        let (ddm, ddw) = (base.second(&m, k), base.second(&w, k));
        let wk = w[k];
        for j in 0..ns {
            let s = -1.0 + j as f64 * ds;
            let o = k * ns + j;
            let mut a = 1.0 / (wk * wk);
            let mut c = 0.0;
            for i in 0..base.n {
                let t = dm[i] + s * dw[i];
                let si = -t / wk;
                a += si * si;
                co.b[o][i] = 2.0 * si;
                c += -(ddm[i] + s * ddw[i]) / wk + 2.0 * t * dw[i] / (wk * wk);
            }
            co.a[o] = a;
            co.c[o] = c;
        }
    }
    co
}

impl SlabSolution {
    /// Solves `Δu = 0` between the graphs with `u = ∓1` on them and `u = s`
    /// on the lateral faces, by red–black SOR until the Jacobi-scaled
    /// residual drops below `tol`. `warm` supplies a starting iterate.
    pub fn solve(
        base: &BaseGrid,
        lower: &[f64],
        upper: &[f64],
        ns: usize,
        tol: f64,
        warm: Option<&[f64]>,
    ) -> Result<Self, SolverError> {
        for g in [lower, upper] {
            if g.len() != base.len() {
                return Err(SolverError::SizeMismatch {
                    expected: base.len(),
                    got: g.len(),
                });
            }
        }
        let h = base.h;
        if let Some(node) = (0..base.len()).find(|&k| !(upper[k] - lower[k] >= 4.0 * h * (1.0 - 1e-12))) {
            return Err(SolverError::GraphCollision {
                node,
                gap: upper[node] - lower[node],
            });
        }
        let ds = 2.0 / (ns - 1) as f64;
        let mut u: Vec<f64> = match warm {
            Some(v) if v.len() == base.len() * ns => v.to_vec(),
            _ => (0..base.len() * ns).map(|o| -1.0 + (o % ns) as f64 * ds).collect(),
        };
        for k in 0..base.len() {
            let edge = !base.is_interior(k, 1);
            for j in 0..ns {
                if edge || j == 0 || j + 1 == ns {
                    u[k * ns + j] = -1.0 + j as f64 * ds;
                }
            }
        }
        let co = coefficients(base, lower, upper, ns);

        let mean_w = lower.iter().zip(upper).map(|(a, b)| 0.5 * (b - a)).sum::<f64>() / base.len() as f64;
        let (ax, az) = (2.0 / (h * h), 2.0 / (mean_w * ds).powi(2));
        let mut num = az * (std::f64::consts::PI / (ns - 1) as f64).cos();
        let mut den = az;
        for a in 0..base.n {
            num += ax * (std::f64::consts::PI / (base.shape[a] - 1) as f64).cos();
            den += ax;
        }
        let rho = num / den;
        let omega = 2.0 / (1.0 + (1.0 - rho * rho).max(0.0).sqrt());

        let inv_h2 = 1.0 / (h * h);
        let inv_ds2 = 1.0 / (ds * ds);
        let mix = 1.0 / (4.0 * h * ds);
        let half_ds = 1.0 / (2.0 * ds);
        let strides = [base.stride(0), base.stride(1)];
        let interior: Vec<usize> = (0..base.len()).filter(|&k| base.is_interior(k, 1)).collect();
        let parity: Vec<usize> = interior
            .iter()
            .map(|&k| {
                let j = base.index_of(k);
                (j[0] + j[1]) % 2
            })
            .collect();

        let mut history = Vec::new();
        let mut sweeps = 0;
        loop {
            let mut res: f64 = 0.0;
            for color in 0..2 {
                for (&k, &par) in interior.iter().zip(&parity) {
                    let first = 1 + (color + par + 1) % 2;
                    let mut j = first;
                    while j + 1 < ns {
                        let o = k * ns + j;
                        let a = co.a[o];
                        let mut lu = a * (u[o + 1] - 2.0 * u[o] + u[o - 1]) * inv_ds2
                            + co.c[o] * (u[o + 1] - u[o - 1]) * half_ds;
                        for (i, &st) in strides.iter().enumerate().take(base.n) {
                            let sn = st * ns;
                            lu += (u[o + sn] - 2.0 * u[o] + u[o - sn]) * inv_h2;
                            lu += co.b[o][i] * (u[o + sn + 1] - u[o + sn - 1] - u[o - sn + 1] + u[o - sn - 1]) * mix;
                        }
                        let diag = -2.0 * base.n as f64 * inv_h2 - 2.0 * a * inv_ds2;
                        let r = lu / diag;
                        res = res.max(r.abs());
                        u[o] -= omega * r;
                        j += 2;
                    }
                }
            }
            history.push(res);
            sweeps += 1;
            if res < tol {
                break;
            }
            if !res.is_finite() {
                return Err(SolverError::LinearSolveStall { residual: res, sweeps });
            }
            if sweeps % 100 == 0 && sweeps >= 100 {
                let before = history[sweeps - 100];
                if res > 0.99 * before {
                    return Err(SolverError::LinearSolveStall { residual: res, sweeps });
                }
            }
        }
        Ok(Self {
            base: base.clone(),
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            ns,
            values: u,
            sweeps,
            residual_history: history,
        })
    }

    pub fn ds(&self) -> f64 {
        2.0 / (self.ns - 1) as f64
    }

    fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.ns..(k + 1) * self.ns]
    }

    /// `|∇u|` on the lower and upper graph at base node `k`, from second-order
    /// one-sided `s`-differences.
    pub fn flux(&self, k: usize) -> [f64; 2] {
        let c = self.column(k);
        let n = self.ns;
        let ds = self.ds();
        let w = 0.5 * (self.upper[k] - self.lower[k]);
        let us_lo = (-3.0 * c[0] + 4.0 * c[1] - c[2]) / (2.0 * ds);
        let us_hi = (3.0 * c[n - 1] - 4.0 * c[n - 2] + c[n - 3]) / (2.0 * ds);
        let slope = |g: &[f64]| {
            let d = self.base.gradient(g, k);
            (1.0 + d[0] * d[0] + d[1] * d[1]).sqrt()
        };
        [us_lo.abs() * slope(&self.lower) / w, us_hi.abs() * slope(&self.upper) / w]
    }

    /// `∫ |∇u|²` and the slab volume, trapezoidal in base and `s`.
    pub fn dirichlet_integral(&self) -> (f64, f64) {
        let base = &self.base;
        let ns = self.ns;
        let ds = self.ds();
        let m: Vec<f64> = self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (a + b)).collect();
        let w: Vec<f64> = self.lower.iter().zip(&self.upper).map(|(a, b)| 0.5 * (b - a)).collect();
        let weight: Vec<f64> = (0..base.len())
            .map(|k| {
                let j = base.index_of(k);
                let mut wb = base.h.powi(base.n as i32);
                for a in 0..base.n {
                    if j[a] == 0 || j[a] + 1 == base.shape[a] {
                        wb *= 0.5;
                    }
                }
                wb
            })
            .collect();
        let vol: Vec<f64> = (0..base.len()).map(|k| weight[k] * 2.0 * w[k]).collect();
        let mut terms = vec![0.0; base.len() * ns];
        let mut level = vec![0.0; base.len()];
        for jj in 0..ns {
            let s = -1.0 + jj as f64 * ds;
            let ws = if jj == 0 || jj + 1 == ns { 0.5 * ds } else { ds };
            for (k, l) in level.iter_mut().enumerate() {
                *l = self.values[k * ns + jj];
            }
            for k in 0..base.len() {
                let c = self.column(k);
                let us = if jj == 0 {
                    (-3.0 * c[0] + 4.0 * c[1] - c[2]) / (2.0 * ds)
                } else if jj + 1 == ns {
                    (3.0 * c[ns - 1] - 4.0 * c[ns - 2] + c[ns - 3]) / (2.0 * ds)
                } else {
                    (c[jj + 1] - c[jj - 1]) / (2.0 * ds)
                };
                let (dm, dw) = (base.gradient(&m, k), base.gradient(&w, k));
                let du = base.gradient(&level, k);
                let mut g2 = (us / w[k]).powi(2);
                for i in 0..base.n {
                    let si = -(dm[i] + s * dw[i]) / w[k];
                    g2 += (du[i] + us * si).powi(2);
                }
                terms[k * ns + jj] = weight[k] * ws * w[k] * g2;
            }
        }
        (super::pairwise_sum(&terms), super::pairwise_sum(&vol))
    }

    /// Values on an ambient grid sharing the base nodes. With `extend`, the
    /// slab polynomial is continued past the graphs (cubic for five cells,
    /// then linearly) instead of clamping to `±1`.
    pub fn resample(&self, grid: &Grid, extend: bool) -> Result<Vec<f64>, SolverError> {
        let gb = BaseGrid::of(grid);
        if gb.shape != self.base.shape || gb.n != self.base.n {
            return Err(SolverError::SizeMismatch {
                expected: self.base.len(),
                got: gb.len(),
            });
        }
        let ns = self.ns;
        let ds = self.ds();
        let h = grid.spacing();
        let mut out = vec![0.0; grid.len()];
        for k in 0..self.base.len() {
            let c = self.column(k);
            let (lo, hi) = (self.lower[k], self.upper[k]);
            let m = 0.5 * (lo + hi);
            let w = 0.5 * (hi - lo);
            let eval = |s: f64| {
                let wt = cubic_weights((s + 1.0) / ds, ns);
                (0..wt.len).map(|i| wt.w[i] * c[wt.start + i]).sum::<f64>()
            };
            let reach = 5.0 * h / w;
            for z in 0..gb.nz {
                let y = gb.z0 + z as f64 * h;
                let s = (y - m) / w;
                let v = if s.abs() <= 1.0 {
                    eval(s)
                } else if !extend {
                    s.signum()
                } else if s.abs() <= 1.0 + reach {
                    eval(s)
                } else {
                    let edge = s.signum() * (1.0 + reach);
                    let d = 1e-3 * ds;
                    let slope = (eval(edge) - eval(edge - s.signum() * d)) / d * s.signum();
                    eval(edge) + slope * (s - edge)
                };
                out[k * gb.nz + z] = v;
            }
        }
        Ok(out)
    }
}

/// Harmonic function between two graphs on the base nodes of `grid`, `∓1` on
/// the graphs, resampled onto `grid` and set to `±1` outside the slab.
pub fn laplace_between_graphs(
    lower: &[f64],
    upper: &[f64],
    grid: &Grid,
    tol: f64,
) -> Result<ScalarField, SolverError> {
    let base = BaseGrid::of(grid);
    if lower.len() != base.len() || upper.len() != base.len() {
        return Err(SolverError::SizeMismatch {
            expected: base.len(),
            got: lower.len().min(upper.len()),
        });
    }
    let ns = slab_levels(lower, upper, grid.spacing());
    let slab = SlabSolution::solve(&base, lower, upper, ns, tol, None)?;
    let values = slab.resample(grid, false)?;
    ScalarField::new(grid.clone(), values, "slab harmonic").map_err(|e: FieldError| e.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_grid, BoxDomain};

    fn grid(h: f64) -> Grid {
        build_grid(&BoxDomain::new(&[-1.0, -0.5], &[1.0, 0.5]), h).unwrap()
    }

    #[test]
    fn constant_slab_is_linear() {
        let eps = 0.1;
        let g = grid(eps / 8.0);
        let base = BaseGrid::of(&g);
        let lo = vec![-eps; base.len()];
        let hi = vec![eps; base.len()];
        let u = laplace_between_graphs(&lo, &hi, &g, 1e-12).unwrap();
        for idx in g.indices() {
            let y = g.node(&idx)[1];
            let want = (y / eps).clamp(-1.0, 1.0);
            assert!((u.at(&idx) - want).abs() < 1e-9);
        }
        let slab = SlabSolution::solve(&base, &lo, &hi, 17, 1e-12, None).unwrap();
        for k in 0..base.len() {
            let q = slab.flux(k);
            assert!((q[0] * eps - 1.0).abs() < 1e-12 && (q[1] * eps - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_slab_is_translation_equivariant() {
        // dyadic widths and shift keep the translated graphs exact in floating point
        let eps = 0.125;
        let g = grid(eps / 8.0);
        let base = BaseGrid::of(&g);
        let shift = |v: &[f64], c: f64| v.iter().map(|x| x + c).collect::<Vec<_>>();
        // constant slab from a perturbed start: bit-identical history
        let lo = vec![-eps; base.len()];
        let hi = vec![eps; base.len()];
        let start: Vec<f64> = (0..base.len() * 17).map(|o| -1.0 + (o % 17) as f64 / 8.0 + 0.01 * ((o * 7) % 5) as f64).collect();
        let a = SlabSolution::solve(&base, &lo, &hi, 17, 1e-11, Some(&start)).unwrap();
        let b = SlabSolution::solve(&base, &shift(&lo, 0.25), &shift(&hi, 0.25), 17, 1e-11, Some(&start)).unwrap();
        assert!(a.sweeps > 10);
        assert_eq!(a.residual_history, b.residual_history);
        assert_eq!(a.values, b.values);
        // curved slab: same solution up to rounding in the graph differences
        let bump: Vec<f64> = (0..base.len()).map(|k| 0.02 * (3.0 * base.coords(k)[0]).cos()).collect();
        let lo = shift(&bump, -eps);
        let hi = shift(&bump, eps);
        let a = SlabSolution::solve(&base, &lo, &hi, 17, 1e-11, None).unwrap();
        let b = SlabSolution::solve(&base, &shift(&lo, 0.25), &shift(&hi, 0.25), 17, 1e-11, None).unwrap();
        let worst = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn tilted_slab_matches_profile() {
        let eps = 0.1;
        let slope: f64 = 0.5;
        for h in [eps / 4.0, eps / 8.0] {
            let g = grid(h);
            let base = BaseGrid::of(&g);
            let w0 = eps * (1.0 + slope * slope).sqrt();
            let lo: Vec<f64> = (0..base.len()).map(|k| slope * base.coords(k)[0] - w0).collect();
            let hi: Vec<f64> = (0..base.len()).map(|k| slope * base.coords(k)[0] + w0).collect();
            let u = laplace_between_graphs(&lo, &hi, &g, 1e-12).unwrap();
            let mut err: f64 = 0.0;
            for idx in g.indices() {
                let p = g.node(&idx);
                let want = ((p[1] - slope * p[0]) / w0).clamp(-1.0, 1.0);
                err = err.max((u.at(&idx) - want).abs());
            }
            assert!(err <= 5.0 * h * h, "h={h} err={err}");
        }
    }

    #[test]
    fn bumped_slab_fluxes_are_balanced_on_average() {
        // Harmonic u between parallel graphs γ ± w: for small bumps the flux
        // through both graphs is ≈ 1/w, deviating by O(curvature).
        let eps = 0.05;
        let g = grid(eps / 8.0);
        let base = BaseGrid::of(&g);
        let bump: Vec<f64> = (0..base.len()).map(|k| 0.01 * (std::f64::consts::PI * base.coords(k)[0]).cos()).collect();
        let lo: Vec<f64> = bump.iter().map(|b| b - eps).collect();
        let hi: Vec<f64> = bump.iter().map(|b| b + eps).collect();
        let s = SlabSolution::solve(&base, &lo, &hi, 17, 1e-11, None).unwrap();
        let mid = base.len() / 2;
        let q = s.flux(mid);
        assert!((q[0] * eps - 1.0).abs() < 5e-3 && (q[1] * eps - 1.0).abs() < 5e-3, "{q:?}");
        // curvature at the crest: top boundary is concave down, flux larger below
        assert!(q[0] > q[1]);
        let (d, vol) = s.dirichlet_integral();
        assert!((vol - 4.0 * eps).abs() < 1e-9);
        assert!((d - 4.0 / eps).abs() / (4.0 / eps) < 1e-2, "{d}");
    }

    #[test]
    fn collision_rejected() {
        let g = grid(0.025);
        let base = BaseGrid::of(&g);
        let lo = vec![-0.03; base.len()];
        let hi = vec![0.03; base.len()];
        assert!(matches!(
            laplace_between_graphs(&lo, &hi, &g, 1e-10),
            Err(SolverError::GraphCollision { .. })
        ));
    }
}
