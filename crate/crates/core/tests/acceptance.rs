//! Acceptance criteria 1-10; each test prints one PASS/FAIL line.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbac::expr::Expr;
use fbac::field::{analytic_field, build_grid, read_field, write_field, BoxDomain, OracleParams};
use fbac::levelset::holder_norm;
use fbac::solver::{fb_residual, solve, Mode, Solution, SolverConfig};
use fbac::verify::{
    check_barrier, check_bounds, oracle_suite, solution_levels, tau_levels, theorem_report, GeometryReport,
    ReportOptions, SuiteOptions, TAU_LEVELS,
};

const ALPHAS: [f64; 3] = [0.25, 0.5, 0.75];
const SWEEP: [f64; 3] = [0.1, 0.05, 0.025];
const SADDLE: &str = "0.1*(x1*x1 - x2*x2)";

// Written to the raw stderr handle so the line survives libtest output capture.
fn verdict(n: usize, pass: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n}: {detail}");
}

fn saddle_config(eps: f64) -> SolverConfig {
    let mut c = SolverConfig::new(eps, eps / 4.0, Expr::parse(SADDLE).unwrap());
    c.n = 2;
    c.vertical_extent = 0.35;
    c
}

struct Instance {
    eps: f64,
    sol: Solution,
    report: GeometryReport,
}

struct Sweep {
    instances: Vec<Instance>,
    elapsed: Duration,
}

/// The curved reference instances, solved and reported once per test binary.
fn sweep() -> &'static Sweep {
    static CELL: OnceLock<Sweep> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let instances = SWEEP
            .iter()
            .map(|&eps| {
                let sol = solve(&saddle_config(eps)).unwrap();
                let report = theorem_report(&sol, &ALPHAS, &ReportOptions::default()).unwrap();
                Instance { eps, sol, report }
            })
            .collect();
        Sweep {
            instances,
            elapsed: t.elapsed(),
        }
    })
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    max / min
}

#[test]
fn criterion_01_oracle_suite() {
    let t = Instant::now();
    let r = oracle_suite(&SuiteOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let mut bad = Vec::new();
    for row in &r.rows {
        let order_ok = match (row.order, row.limit) {
            (Some(o), None) => o >= 1.0 || row.max_residual <= 1e-8,
            _ => true,
        };
        let profile_ok = !matches!(row.oracle.as_str(), "profile1d" | "tilted") || row.max_residual <= 1e-8;
        if !row.pass || !order_ok || !profile_ok {
            bad.push(row.csv_line());
        }
    }
    let spatial_min = r
        .rows
        .iter()
        .filter(|row| matches!(row.identity.as_str(), "lemma21" | "elliptic_corrected"))
        .filter_map(|row| row.order)
        .fold(f64::INFINITY, f64::min);
    verdict(
        1,
        bad.is_empty() && elapsed.as_secs_f64() <= 120.0,
        format!(
            "{} rows, min spatial order {spatial_min:.2}, {:.2}s, failing {bad:?}",
            r.rows.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_sign_convention() {
    let r = oracle_suite(&SuiteOptions::default()).unwrap();
    let fine = 1.0 / 128.0;
    let b_ok = [1.0 / 64.0, fine].iter().zip([1.0 / 32.0, 1.0 / 64.0]).all(|(&h, dtau)| {
        let row = r.row("distance", "ode_sigma_B", h).unwrap();
        row.max_residual <= 20.0 * (dtau * dtau + h)
    });
    let a = r.row("distance", "ode_sigma_A", fine).unwrap().limit.unwrap();
    let printed = r.row("harmonic_exp", "elliptic_printed", fine).unwrap().limit.unwrap();
    // the corrected residual at the probe is bounded by the row maximum
    let corrected = r.row("harmonic_exp", "elliptic_corrected", fine).unwrap().max_residual;
    let pass = b_ok && (a - 4.0).abs() <= 0.2 && (printed - 0.5).abs() <= 0.05 && corrected <= 20.0 * fine;
    verdict(
        2,
        pass,
        format!("variant B bounded {b_ok}, |A|(0.5) = {a:.4}, printed = {printed:.4}, corrected max = {corrected:.2e}"),
    );
}

#[test]
fn criterion_03_flat_recovery() {
    let eps = 0.1;
    let c = SolverConfig::new(eps, eps / 8.0, Expr::parse("0").unwrap());
    let t = Instant::now();
    let sol = solve(&c).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let p = OracleParams {
        eps: Some(eps),
        ..Default::default()
    };
    let exact = analytic_field("profile1d", &p, sol.u.grid().clone()).unwrap();
    let dev = sol
        .u
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let flux = fb_residual(&sol).unwrap().boundary_flux;
    let bounds = check_bounds(&sol).unwrap();
    let levels = solution_levels(&sol, &tau_levels(TAU_LEVELS)).unwrap();
    let h_max = levels
        .iter()
        .flat_map(|s| s.mean_curvature())
        .map(f64::abs)
        .fold(0.0, f64::max);
    let pass = dev <= 5e-3 && flux <= 1e-6 && bounds.sup_dev <= 1e-6 && h_max <= 1e-6 && elapsed <= 30.0;
    verdict(
        3,
        pass,
        format!(
            "sup|u - profile| = {dev:.2e}, flux = {flux:.2e}, sup|sigma - eps| = {:.2e}, sup|H| = {h_max:.2e}, {elapsed:.2}s",
            bounds.sup_dev
        ),
    );
}

#[test]
fn criterion_04_mode_agreement() {
    let eps = 0.05;
    let h = eps / 8.0;
    let mut c = SolverConfig::new(eps, h, Expr::parse("0.03*cos(pi*x)").unwrap());
    let t = Instant::now();
    let trial = solve(&c).unwrap();
    c.mode = Mode::Variational;
    // the default cap stops the first smoothing stage of this instance early
    c.max_iter = 40_000;
    let var = solve(&c).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let diff = trial
        .u
        .values()
        .iter()
        .zip(var.u.values())
        .filter(|(a, b)| a.abs() < 1.0 && b.abs() < 1.0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let limit = 10.0 * (h * h).max(1e-6);
    verdict(
        4,
        diff <= limit && elapsed <= 120.0,
        format!("sup|u_var - u_trial| over common layer = {diff:.3e}, limit {limit:.3e}, {elapsed:.1}s"),
    );
}

#[test]
fn criterion_05_naive_bound() {
    let mut worst: f64 = 0.0;
    for inst in &sweep().instances {
        let b = check_bounds(&inst.sol).unwrap();
        for dev in &b.per_level {
            worst = worst.max(dev / (inst.eps * inst.eps * b.eta));
        }
    }
    verdict(5, worst <= 2.5, format!("max over levels and eps of C_naive = {worst:.4}"));
}

#[test]
fn criterion_06_interior_scaling() {
    let s = sweep();
    let devs: Vec<f64> = s.instances.iter().map(|i| i.report.sup_sigma_dev_interior).collect();
    let drops: Vec<f64> = devs.windows(2).map(|w| w[0] / w[1]).collect();
    let ci: Vec<f64> = s.instances.iter().map(|i| i.report.ratios.C_interior.unwrap()).collect();
    let pass = drops.iter().all(|&d| d >= 5.0) && spread(&ci) < 3.0 && s.elapsed.as_secs_f64() <= 600.0;
    verdict(
        6,
        pass,
        format!(
            "drops {drops:.2?}, C_interior {ci:.3?} (spread {:.2}), sweep {:.1}s",
            spread(&ci),
            s.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_07_barrier() {
    let mut pass = true;
    let mut details = Vec::new();
    for inst in &sweep().instances {
        let r = check_barrier(&inst.sol).unwrap();
        let m = r.margins.as_ref().unwrap();
        let rel = (m.laplacian_at_free_boundary - r.analytic_margin).abs() / r.analytic_margin.abs();
        pass &= r.is_supersolution && rel <= 0.25;
        details.push(format!("eps {}: super {} rel {rel:.2e}", inst.eps, r.is_supersolution));
    }
    verdict(7, pass, details.join("; "));
}

#[test]
fn criterion_08_theorem_ratios() {
    let s = sweep();
    let mut finite = true;
    let mut fb_ok = true;
    for inst in &s.instances {
        let r = &inst.report.ratios;
        for list in [&r.C_thm_h, &r.C_thm_H] {
            finite &= list.len() == ALPHAS.len() && list.iter().all(|a| a.value.is_some_and(f64::is_finite));
        }
        fb_ok &= inst.report.fb_curvature.as_ref().is_some_and(|f| f.agrees);
    }
    let spreads: Vec<f64> = ALPHAS
        .iter()
        .map(|&a| {
            let v: Vec<f64> = s
                .instances
                .iter()
                .map(|i| GeometryReport::ratio(&i.report.ratios.C_thm_H, a).unwrap())
                .collect();
            spread(&v)
        })
        .collect();
    verdict(
        8,
        finite && fb_ok && spreads.iter().all(|&x| x < 3.0),
        format!("finite {finite}, fb curvature agrees {fb_ok}, C_thm_H spread per alpha {spreads:.2?}"),
    );
}

/// Straightforward scan over ordered pairs.
fn pair_scan(points: &[[f64; 2]], values: &[f64], alpha: f64) -> (f64, f64) {
    let mut sup: f64 = 0.0;
    let mut semi: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        sup = sup.max(values[i].abs());
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            semi = semi.max((values[i] - values[j]).abs() / d.powf(alpha));
        }
    }
    (sup, semi)
}

#[test]
fn criterion_09_holder_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact = true;
    let mut props = true;
    for _ in 0..100 {
        let (nx, ny) = (rng.gen_range(2..12), rng.gen_range(1..12));
        let h = rng.gen_range(0.01..0.2);
        let pts: Vec<[f64; 2]> = (0..nx)
            .flat_map(|i| (0..ny).map(move |j| [i as f64 * h, j as f64 * h]))
            .collect();
        let f: Vec<f64> = pts.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let alpha = rng.gen_range(0.05..=1.0);
        let n = holder_norm(&pts, &f, alpha, "random").unwrap();
        exact &= (n.sup_part, n.seminorm_part) == pair_scan(&pts, &f, alpha);

        let c: f64 = rng.gen_range(-3.0..3.0);
        let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
        let ns = holder_norm(&pts, &scaled, alpha, "random").unwrap();
        props &= (ns.total() - c.abs() * n.total()).abs() <= 1e-12 * n.total().max(1.0);
        let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
        let nt = holder_norm(&pts, &shifted, alpha, "random").unwrap();
        props &= (nt.seminorm_part - n.seminorm_part).abs() <= 1e-12 * n.seminorm_part.max(1.0);
    }
    verdict(9, exact && props, format!("exact match {exact}, homogeneity and shift {props}"));
}

#[test]
fn criterion_10_determinism() {
    let dump = |sol: &Solution| {
        let mut bufs = vec![Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        write_field(&mut bufs[0], &sol.u).unwrap();
        sol.write_graph_csv(false, &mut bufs[1]).unwrap();
        sol.write_graph_csv(true, &mut bufs[2]).unwrap();
        sol.log.write_csv(&mut bufs[3]).unwrap();
        bufs
    };
    let c = saddle_config(0.1);
    let first = dump(&solve(&c).unwrap());
    let second = dump(&solve(&c).unwrap());
    let repeat = first == second;
    let reread = read_field(first[0].as_slice()).unwrap();
    let mut again = Vec::new();
    write_field(&mut again, &reread).unwrap();
    let round_trip = again == first[0];

    let g = build_grid(&BoxDomain::new(&[-1.0, 0.0], &[1.5, 1.5]), 1.0 / 32.0).unwrap();
    let oracle = analytic_field("harmonic_exp", &OracleParams::default(), g).unwrap();
    let mut a = Vec::new();
    write_field(&mut a, &oracle).unwrap();
    let mut b = Vec::new();
    write_field(&mut b, &read_field(a.as_slice()).unwrap()).unwrap();
    let oracle_trip = a == b;
    let suite = oracle_suite(&SuiteOptions::default()).unwrap().to_csv() == oracle_suite(&SuiteOptions::default()).unwrap().to_csv();
    verdict(
        10,
        repeat && round_trip && oracle_trip && suite,
        format!("repeat solve {repeat}, solution dump {round_trip}, oracle dump {oracle_trip}, suite table {suite}"),
    );
}
