//! Theorem ratios and the assembled geometry report of a solved instance.

use serde::{Deserialize, Serialize};

use super::bounds::{barrier_of, bounds_of, measured_eta, solution_levels, tau_levels, INTERIOR_RADIUS};
use super::{
    check_sigma_elliptic, decomposition_on, points_on, BarrierReport, Bounds, ResidualStats, Samples, VerifyError,
};
use crate::field::{fmt_real, norm, Mat3, ScalarField, Vec3};
use crate::flow::{integrate_flow, ode_residual_h, ode_residual_sigma, project_to_level};
use crate::levelset::{holder_norms, LevelSurface};
use crate::solver::Solution;

pub const SWEEP_HEADER: &str = "eps,alpha,eta,C_naive,C_interior,C_thm_h,C_thm_H";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportOptions {
    pub levels: usize,
    pub dtau: f64,
    /// Spacing of the base nodes used for Hölder norms (all nodes when below `h`).
    pub holder_spacing: f64,
    /// Spacing of the base nodes where pointwise identities are sampled.
    pub sample_spacing: f64,
    /// Base points where flow trajectories start.
    pub flow_starts: Vec<[f64; 2]>,
    /// `τ` span of the trajectories.
    pub flow_span: (f64, f64),
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            levels: super::TAU_LEVELS,
            dtau: 1.0 / 32.0,
            holder_spacing: 1.0 / 32.0,
            sample_spacing: 1.0 / 16.0,
            flow_starts: vec![[0.0, 0.0], [0.25, 0.25]],
            flow_span: (-0.875, 0.875),
        }
    }
}

/// Instance metadata, parsed from the field label where possible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub label: String,
    pub eps: f64,
    pub h: f64,
    pub n: usize,
    pub mode: Option<String>,
    pub gamma0: Option<String>,
}

impl Instance {
    fn of(sol: &Solution, eps: f64) -> Self {
        let label = sol.u.label().to_string();
        let field = |key: &str| {
            let tag = format!("{key}=");
            let start = label.find(&tag)? + tag.len();
            let rest = &label[start..];
            // gamma0 is last and may not contain spaces; stop at the next blank
            Some(rest.split(' ').next().unwrap_or(rest).to_string())
        };
        Self {
            eps,
            h: sol.u.grid().spacing(),
            n: sol.base().n,
            mode: field("mode"),
            gamma0: field("gamma0"),
            label,
        }
    }

    /// Key used to join reports of one ε-sweep.
    pub fn family(&self) -> String {
        self.gamma0.clone().unwrap_or_else(|| self.label.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub alpha: f64,
    /// `‖h_τ‖_{C^α}` (spectral norm) over `|x| ≤ 1/2`.
    pub h: f64,
    /// `‖H_τ‖_{C^α}` over `|x| ≤ 1/2`.
    #[serde(rename = "H")]
    pub mean_curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub tau: f64,
    /// Level taken from the solver's free boundary rather than extracted.
    pub free_boundary: bool,
    pub sup_sigma_dev: f64,
    pub holder: Vec<HolderRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaValue {
    pub alpha: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct Ratios {
    pub C_naive: Option<f64>,
    pub C_interior: Option<f64>,
    pub C_thm_h: Vec<AlphaValue>,
    pub C_thm_H: Vec<AlphaValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbCurvature {
    /// `max |H_graph + ∂_νσ/σ|` over free-boundary nodes with `|x| ≤ 1/2`.
    pub max_diff: f64,
    pub tolerance: f64,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub lemma21: Option<ResidualStats>,
    #[serde(rename = "ode_sigma_A")]
    pub ode_sigma_a: Option<ResidualStats>,
    #[serde(rename = "ode_sigma_B")]
    pub ode_sigma_b: Option<ResidualStats>,
    #[serde(rename = "ode_H")]
    pub ode_h: Option<ResidualStats>,
    pub elliptic_printed: Option<ResidualStats>,
    pub elliptic_corrected: Option<ResidualStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSummary {
    pub status: super::BarrierStatus,
    pub margins: BarrierReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub h: f64,
    pub dtau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub instance: Instance,
    pub eta: f64,
    pub eta_below_half: bool,
    /// Region of the interior bound and the theorem norms.
    pub region: String,
    pub levels: Vec<LevelRow>,
    pub ratios: Ratios,
    pub sup_sigma_dev: f64,
    pub sup_sigma_dev_interior: f64,
    pub fb_curvature: Option<FbCurvature>,
    pub residuals: Residuals,
    pub barrier: BarrierSummary,
    pub grid: GridInfo,
    /// Checks that could not run, with the reason.
    pub skipped: Vec<String>,
    pub version: String,
}

impl GeometryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str, file: &str) -> Result<Self, VerifyError> {
        serde_json::from_str(text).map_err(|e| VerifyError::Parse {
            file: file.to_string(),
            msg: format!("line {}: {e}", e.line()),
        })
    }

    pub fn ratio(list: &[AlphaValue], alpha: f64) -> Option<f64> {
        list.iter().find(|a| a.alpha == alpha).and_then(|a| a.value)
    }
}

fn stride_for(spacing: f64, h: f64) -> usize {
    ((spacing / h).round() as usize).max(1)
}

fn holder_rows(s: &LevelSurface, alphas: &[f64], stride: usize) -> Result<Vec<HolderRow>, VerifyError> {
    let sel = Samples {
        radius: Some(INTERIOR_RADIUS),
        margin: 0,
        stride,
        axis: None,
    };
    let ids = sel.select(s);
    let pts: Vec<[f64; 2]> = ids.iter().map(|&k| s.base().coords(k)).collect();
    let hs: Vec<Mat3> = ids.iter().map(|&k| s.nodes()[k].h_ambient).collect();
    let mc: Vec<f64> = ids.iter().map(|&k| s.nodes()[k].mean_curvature).collect();
    let region = format!("|x| <= {INTERIOR_RADIUS}");
    let nh = holder_norms(&pts, &hs, alphas, &region)?;
    let nm = holder_norms(&pts, &mc, alphas, &region)?;
    Ok(alphas
        .iter()
        .zip(nh.iter().zip(&nm))
        .map(|(&alpha, (a, b))| HolderRow {
            alpha,
            h: a.total(),
            mean_curvature: b.total(),
        })
        .collect())
}

/// `σ = 1/|∇u|` from the four-point interpolant.
fn sigma_at(u: &ScalarField, p: &Vec3) -> Result<f64, VerifyError> {
    Ok(1.0 / norm(&u.gradient_smooth(&p[..u.dim()])?))
}

/// Free-boundary `H` from `-∂_νσ/σ` with a one-sided second-order difference
/// taken into the layer, against the graph value.
fn fb_curvature(sol: &Solution, levels: &[LevelSurface]) -> Result<Option<FbCurvature>, VerifyError> {
    let geo = sol.geometry_field();
    let h = geo.grid().spacing();
    let mut worst: f64 = 0.0;
    let mut any = false;
    for s in levels.iter().filter(|s| s.tau().abs() == 1.0) {
        // into the layer is -ν on the upper boundary, +ν on the lower one
        let inward = -s.tau();
        for k in s.nodes_in_ball(INTERIOR_RADIUS) {
            if !s.base().is_interior(k, 1) {
                continue;
            }
            let g = &s.nodes()[k];
            let p = s.point(k);
            let at = |t: f64| -> Vec3 { [p[0] + t * g.nu[0], p[1] + t * g.nu[1], p[2] + t * g.nu[2]] };
            let s0 = sigma_at(geo, &p)?;
            let s1 = sigma_at(geo, &at(inward * h))?;
            let s2 = sigma_at(geo, &at(2.0 * inward * h))?;
            // derivative along +ν
            let dn = -inward * (3.0 * s0 - 4.0 * s1 + s2) / (2.0 * h);
            worst = worst.max((g.mean_curvature + dn / s0).abs());
            any = true;
        }
    }
    Ok(any.then_some(FbCurvature {
        max_diff: worst,
        tolerance: 20.0 * h,
        agrees: worst <= 20.0 * h,
    }))
}

/// Flow-ODE residuals along trajectories started at `opts.flow_starts`.
fn flow_residuals(
    sol: &Solution,
    opts: &ReportOptions,
) -> Result<(ResidualStats, ResidualStats, ResidualStats), VerifyError> {
    let geo = sol.geometry_field();
    let base = sol.base();
    let d = geo.dim();
    let h = geo.grid().spacing();
    let (mut a, mut b, mut hr) = (Vec::new(), Vec::new(), Vec::new());
    for x in &opts.flow_starts {
        // nearest base node supplies the starting height guess
        let k = (0..base.len())
            .min_by(|&i, &j| {
                let (ci, cj) = (base.coords(i), base.coords(j));
                let di = (0..base.n).map(|t| (ci[t] - x[t]).powi(2)).sum::<f64>();
                let dj = (0..base.n).map(|t| (cj[t] - x[t]).powi(2)).sum::<f64>();
                di.total_cmp(&dj)
            })
            .expect("non-empty base");
        let c = base.coords(k);
        let mut guess = c[..base.n].to_vec();
        let t0 = opts.flow_span.0;
        let mid = 0.5 * (sol.gamma_minus[k] + sol.gamma_plus[k]);
        guess.push(mid + 0.5 * t0 * (sol.gamma_plus[k] - sol.gamma_minus[k]));
        let x0 = project_to_level(geo, &guess[..d], t0)?;
        let traj = integrate_flow(geo, &x0, opts.flow_span, opts.dtau)?;
        let r = ode_residual_sigma(&traj)?;
        a.extend(r.variant_a);
        b.extend(r.variant_b);
        hr.extend(ode_residual_h(geo, &traj)?.into_iter().map(|t| t.residual));
    }
    let dt = Some(opts.dtau);
    Ok((
        ResidualStats::from_values(&a, h, dt)?,
        ResidualStats::from_values(&b, h, dt)?,
        ResidualStats::from_values(&hr, h, dt)?,
    ))
}

/// Runs every check on a solved instance and assembles the report.
pub fn theorem_report(sol: &Solution, alphas: &[f64], opts: &ReportOptions) -> Result<GeometryReport, VerifyError> {
    let eps = sol.eps().ok_or(VerifyError::MissingEps)?;
    let geo = sol.geometry_field();
    let h = geo.grid().spacing();
    let taus = tau_levels(opts.levels);
    let levels = solution_levels(sol, &taus)?;
    let eta = measured_eta(&levels);
    let bounds: Bounds = bounds_of(&levels, eps);
    let mut skipped = Vec::new();

    let hstride = if sol.base().n == 1 { 1 } else { stride_for(opts.holder_spacing, h) };
    let mut rows = Vec::with_capacity(levels.len());
    for (s, dev) in levels.iter().zip(&bounds.per_level) {
        rows.push(LevelRow {
            tau: s.tau(),
            free_boundary: s.tau().abs() == 1.0,
            sup_sigma_dev: *dev,
            holder: holder_rows(s, alphas, hstride)?,
        });
    }
    let applicable = eta >= 1e-10;
    let ratio = |f: &dyn Fn(&HolderRow) -> f64, scale: &dyn Fn(f64) -> f64| -> Vec<AlphaValue> {
        alphas
            .iter()
            .enumerate()
            .map(|(i, &alpha)| {
                let m = rows.iter().map(|r| f(&r.holder[i])).fold(0.0, f64::max);
                AlphaValue {
                    alpha,
                    value: applicable.then(|| m / scale(alpha)),
                }
            })
            .collect()
    };
    let ratios = Ratios {
        C_naive: bounds.c_naive,
        C_interior: bounds.c_interior,
        C_thm_h: ratio(&|r| r.h, &|_| eta),
        C_thm_H: ratio(&|r| r.mean_curvature, &|a| eps.powf(1.0 - a) * eta * eta),
    };

    let inner: Vec<LevelSurface> = levels.iter().filter(|s| s.tau().abs() < 1.0).cloned().collect();
    let samples = Samples {
        radius: Some(INTERIOR_RADIUS),
        margin: 2,
        stride: stride_for(opts.sample_spacing, h),
        axis: None,
    };
    let r2 = ScalarField::from_fn(geo.grid().clone(), "|x|^2", |x| x.iter().map(|v| v * v).sum())?;
    let lemma21 = match decomposition_on(&inner, &r2, &samples) {
        Ok(r) => Some(r.residual),
        Err(e) => {
            skipped.push(format!("lemma21: {e}"));
            None
        }
    };
    let (ode_sigma_a, ode_sigma_b, ode_h) = match flow_residuals(sol, opts) {
        Ok((a, b, c)) => (Some(a), Some(b), Some(c)),
        Err(e) => {
            skipped.push(format!("flow: {e}"));
            (None, None, None)
        }
    };
    let points: Vec<Vec3> = inner.iter().flat_map(|s| points_on(s, &samples)).collect();
    let (elliptic_printed, elliptic_corrected) = match check_sigma_elliptic(geo, &points) {
        Ok(r) => (Some(r.printed), Some(r.corrected)),
        Err(e) => {
            skipped.push(format!("elliptic: {e}"));
            (None, None)
        }
    };
    let barrier = barrier_of(sol, &levels, eps, eta)?;
    Ok(GeometryReport {
        instance: Instance::of(sol, eps),
        eta,
        eta_below_half: bounds.eta_below_half,
        region: format!("|x| <= {INTERIOR_RADIUS}"),
        levels: rows,
        ratios,
        sup_sigma_dev: bounds.sup_dev,
        sup_sigma_dev_interior: bounds.sup_dev_interior,
        fb_curvature: fb_curvature(sol, &levels)?,
        residuals: Residuals {
            lemma21,
            ode_sigma_a,
            ode_sigma_b,
            ode_h,
            elliptic_printed,
            elliptic_corrected,
        },
        barrier: BarrierSummary {
            status: barrier.status,
            margins: barrier,
        },
        grid: GridInfo { h, dtau: opts.dtau },
        skipped,
        version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

/// Joins reports of one seed into `eps,alpha,...` rows, ε descending.
pub fn sweep_csv(reports: &[(String, GeometryReport)]) -> Result<String, VerifyError> {
    let Some((_, first)) = reports.first() else {
        return Ok(format!("{SWEEP_HEADER}\n"));
    };
    let family = first.instance.family();
    for (_, r) in reports {
        if r.instance.family() != family {
            return Err(VerifyError::InstanceMismatch(family, r.instance.family()));
        }
    }
    let mut sorted: Vec<&GeometryReport> = reports.iter().map(|(_, r)| r).collect();
    sorted.sort_by(|a, b| b.instance.eps.total_cmp(&a.instance.eps));
    let cell = |v: Option<f64>| v.map(fmt_real).unwrap_or_else(|| "NA".into());
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in sorted {
        for a in &r.ratios.C_thm_h {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                fmt_real(r.instance.eps),
                fmt_real(a.alpha),
                fmt_real(r.eta),
                cell(r.ratios.C_naive),
                cell(r.ratios.C_interior),
                cell(a.value),
                cell(GeometryReport::ratio(&r.ratios.C_thm_H, a.alpha)),
            ));
        }
    }
    Ok(out)
}
