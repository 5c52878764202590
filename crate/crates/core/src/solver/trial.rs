//! Trial free-boundary iteration: solve between two graphs, then move each
//! graph by `λε²(q - 1/ε)` along the vertical.

use super::slab::{slab_levels, BaseGrid, SlabSolution};
use super::{seed_slope_factor, Accel, ConvergenceLog, Mode, Solution, SolverConfig, SolverError};
use crate::field::ScalarField;

/// Consecutive residual increases tolerated before giving up.
pub const DIVERGENCE_WINDOW: usize = 20;

/// Anderson mixing over the last `depth` iterate/residual differences.
struct Anderson {
    depth: usize,
    dx: Vec<Vec<f64>>,
    df: Vec<Vec<f64>>,
    prev: Option<(Vec<f64>, Vec<f64>)>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            dx: Vec::new(),
            df: Vec::new(),
            prev: None,
        }
    }

    fn reset(&mut self) {
        self.dx.clear();
        self.df.clear();
        self.prev = None;
    }

    /// Next iterate from `x` and its fixed-point residual `f = G(x) - x`.
    fn step(&mut self, x: &[f64], f: &[f64]) -> Vec<f64> {
        if let Some((px, pf)) = self.prev.take() {
            self.dx.push(x.iter().zip(&px).map(|(a, b)| a - b).collect());
            self.df.push(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            if self.dx.len() > self.depth {
                self.dx.remove(0);
                self.df.remove(0);
            }
        }
        self.prev = Some((x.to_vec(), f.to_vec()));
        let m = self.df.len();
        let mut next: Vec<f64> = x.iter().zip(f).map(|(a, b)| a + b).collect();
        if m == 0 {
            return next;
        }
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let mut a = vec![vec![0.0; m]; m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                a[i][j] = dot(&self.df[i], &self.df[j]);
            }
            rhs[i] = dot(&self.df[i], f);
        }
        let scale = (0..m).map(|i| a[i][i]).fold(0.0, f64::max);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-10 * scale;
        }
        let Some(theta) = solve_dense(a, rhs) else {
            self.reset();
            return next;
        };
        for (i, t) in theta.iter().enumerate() {
            for (q, v) in next.iter_mut().enumerate() {
                *v -= t * (self.dx[i][q] + self.df[i][q]);
            }
        }
        next
    }
}

/// Gaussian elimination with partial pivoting for a small dense system.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Applies `(I - cΔ)⁻¹` with zero data on the base edges to a correction
/// given at the `free` nodes (conjugate gradients, matrix-free). Damps the
/// short waves whose flux response grows like their wavenumber.
fn smooth_correction(base: &BaseGrid, free: &[usize], rhs: &[f64], c: f64) -> Vec<f64> {
    let h2 = base.h * base.h;
    let mut pos = vec![usize::MAX; base.len()];
    for (i, &k) in free.iter().enumerate() {
        pos[k] = i;
    }
    let apply = |v: &[f64], out: &mut [f64]| {
        for (i, &k) in free.iter().enumerate() {
            let mut lap = -2.0 * base.n as f64 * v[i];
            for a in 0..base.n {
                let s = base.stride(a);
                for nb in [k + s, k - s] {
                    if pos[nb] != usize::MAX {
                        lap += v[pos[nb]];
                    }
                }
            }
            out[i] = v[i] - c * lap / h2;
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let stop = 1e-28 * rr;
    for _ in 0..10 * n {
        if rr <= stop || rr == 0.0 {
            break;
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

/// Iterates the graphs from `γ₀ ± εW₀` until `sup|ε q± - 1| < tol_fb`.
pub fn solve_trial_free_boundary(config: &SolverConfig) -> Result<Solution, SolverError> {
    if config.mode != Mode::TrialFb {
        return Err(SolverError::WrongMode(config.mode));
    }
    config.validate()?;
    let grid = config.grid()?;
    let base = BaseGrid::of(&grid);
    let eps = config.eps;
    let h = grid.spacing();
    let mut lower = Vec::with_capacity(base.len());
    let mut upper = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let x = base.coords(k);
        let g = config.gamma0.eval(&x);
        let w = eps * seed_slope_factor(&config.gamma0, &x);
        lower.push(g - w);
        upper.push(g + w);
    }
    let ns = slab_levels(&lower, &upper, h);
    let free: Vec<usize> = (0..base.len()).filter(|&k| base.is_interior(k, 1)).collect();
    let nf = free.len();

    let mut log = ConvergenceLog::default();
    let mut anderson = match config.accel {
        Accel::Anderson(m) => Some(Anderson::new(m)),
        Accel::None => None,
    };
    let mut warm: Option<Vec<f64>> = None;
    let mut growth = 0;
    let mut converged: Option<SlabSolution> = None;
    for _ in 0..config.max_iter {
        if let Some(node) = (0..base.len()).find(|&k| upper[k] - lower[k] < 4.0 * h) {
            return Err(SolverError::GraphCollision {
                node,
                gap: upper[node] - lower[node],
            });
        }
        let slab = SlabSolution::solve(&base, &lower, &upper, ns, config.lin_tol, warm.as_deref())?;
        let mut x = Vec::with_capacity(2 * nf);
        let mut f = Vec::with_capacity(2 * nf);
        let mut res: f64 = 0.0;
        for (side, g) in [&lower, &upper].into_iter().enumerate() {
            let sign = if side == 0 { -1.0 } else { 1.0 };
            for &k in &free {
                let q = slab.flux(k)[side];
                res = res.max((eps * q - 1.0).abs());
                x.push(g[k]);
                f.push(sign * config.lambda * eps * eps * (q - 1.0 / eps));
            }
        }
        for side in 0..2 {
            let smoothed = smooth_correction(&base, &free, &f[side * nf..(side + 1) * nf], 2.0 * eps * eps);
            f[side * nf..(side + 1) * nf].copy_from_slice(&smoothed);
        }
        let (dir, vol) = slab.dirichlet_integral();
        log.push(res, 0.5 * eps * dir + vol / eps, slab.sweeps, None);
        if let [.., a, b] = log.residual[..] {
            growth = if b > a { growth + 1 } else { 0 };
        }
        if growth >= DIVERGENCE_WINDOW {
            return Err(SolverError::Divergence(growth));
        }
        if res < config.tol_fb {
            log.final_flux_residual = res;
            converged = Some(slab);
            break;
        }
        if let (Some(acc), [.., a, b]) = (anderson.as_mut(), &log.residual[..]) {
            if *b > 2.0 * *a {
                acc.reset();
            }
        }
        let next = match anderson.as_mut() {
            Some(acc) => acc.step(&x, &f),
            None => x.iter().zip(&f).map(|(a, b)| a + b).collect(),
        };
        for (i, &k) in free.iter().enumerate() {
            lower[k] = next[i];
            upper[k] = next[nf + i];
        }
        warm = Some(slab.values);
    }
    let Some(slab) = converged else {
        return Err(SolverError::MaxIterations { log });
    };
    let label = format!("fbac solve {}", config.describe());
    let u = ScalarField::new(grid.clone(), slab.resample(&grid, false)?, label.clone())?.with_eps(eps)?;
    let ext = ScalarField::new(grid.clone(), slab.resample(&grid, true)?, format!("{label} extension"))?.with_eps(eps)?;
    Ok(Solution {
        u,
        extension: Some(ext),
        gamma_minus: lower,
        gamma_plus: upper,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::solver::fb_residual;

    fn config(gamma0: &str, eps: f64, h: f64) -> SolverConfig {
        let mut c = SolverConfig::new(eps, h, Expr::parse(gamma0).unwrap());
        c.mode = Mode::TrialFb;
        c
    }

    #[test]
    fn anderson_solves_linear_fixed_point() {
        // G(x) = Mx + b with contraction M; plain iteration is slow.
        let m = [[0.99, 0.0], [0.0, 0.5]];
        let b = [0.01, 1.0];
        let mut acc = Anderson::new(3);
        let mut x = vec![0.0, 0.0];
        for _ in 0..10 {
            let g = [m[0][0] * x[0] + b[0], m[1][1] * x[1] + b[1]];
            let f = vec![g[0] - x[0], g[1] - x[1]];
            x = acc.step(&x, &f);
        }
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] - 2.0).abs() < 1e-8, "{x:?}");
    }

    #[test]
    fn flat_seed_is_fixed_point() {
        let eps = 0.1;
        let sol = solve_trial_free_boundary(&config("0", eps, eps / 8.0)).unwrap();
        assert_eq!(sol.log.iterations, 1);
        for k in 0..sol.gamma_plus.len() {
            assert!((sol.gamma_plus[k] - eps).abs() < 1e-14);
            assert!((sol.gamma_minus[k] + eps).abs() < 1e-14);
        }
        let g = sol.u.grid();
        for idx in g.indices() {
            let y = g.node(&idx)[1];
            assert!((sol.u.at(&idx) - (y / eps).clamp(-1.0, 1.0)).abs() < 1e-9);
        }
        let r = fb_residual(&sol).unwrap();
        assert!(r.boundary_flux < 1e-9 && r.interior_harmonicity < 1e-6, "{r:?}");
    }

    #[test]
    fn wrong_mode_rejected() {
        let mut c = config("0", 0.1, 0.025);
        c.mode = Mode::Variational;
        assert!(matches!(solve_trial_free_boundary(&c), Err(SolverError::WrongMode(_))));
    }
}
