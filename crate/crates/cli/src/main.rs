//! `fbac`: batch front-end for the free-boundary Allen–Cahn lab.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fbac::field::{load_field, write_field, ScalarField};
use fbac::flow::{integrate_flow, project_to_level};
use fbac::levelset::extract_level;
use fbac::solver::{solve, ConfigError, Mode, Solution, SolverConfig, SolverError, KEYS};
use fbac::verify::{oracle_suite, sweep_csv, theorem_report, GeometryReport, ReportOptions, SuiteOptions};

#[derive(Parser, Debug)]
#[command(name = "fbac", version, about = "Free-boundary Allen-Cahn numerics")]
struct Cli {
    /// Directory for every file the subcommand writes.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads, `n` or `auto`.
    #[arg(long, global = true, default_value = "auto")]
    threads: String,
    /// Grid spacing; a comma list for `oracle`.
    #[arg(long, global = true, value_delimiter = ',')]
    h: Vec<f64>,
    /// Flow step; a comma list for `oracle`.
    #[arg(long, global = true, value_delimiter = ',')]
    dtau: Vec<f64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve one instance from a config file.
    Solve(SolveArgs),
    /// Convergence table of every identity on the analytic oracles.
    Oracle,
    /// Level surfaces and flow trajectories of a field dump.
    Analyze(AnalyzeArgs),
    /// Geometry report of a solved field dump.
    Verify(VerifyArgs),
    /// Merge reports of an ε-sweep into one ratio table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    config: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma0: Option<String>,
    /// Path of the field dump (default `<out-dir>/u.fbac`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    dump: PathBuf,
    /// Levels to extract.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-0.5, 0.0, 0.5])]
    tau: Vec<f64>,
    /// Trajectory start `x1,..,xd`; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    start: Vec<String>,
    /// `τ` interval of the trajectories.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-0.5, 0.5])]
    span: Vec<f64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    dump: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75])]
    alpha: Vec<f64>,
    /// Report path (default `<out-dir>/report.json`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Table path (default `<out-dir>/sweep.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Input { path: String, msg: String },
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Verification(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::NotConverged(_) => 2,
            CliError::Verification(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn input_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Input {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

/// What a run read, wrote and overrode; serialized next to the outputs.
struct Manifest {
    subcommand: &'static str,
    config: Option<PathBuf>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    overrides: Vec<(String, String)>,
    threads: usize,
    started: Instant,
    timings: Vec<(&'static str, f64)>,
}

impl Manifest {
    fn new(subcommand: &'static str, threads: usize) -> Self {
        Self {
            subcommand,
            config: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            overrides: Vec::new(),
            threads,
            started: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn lap(&mut self, name: &'static str, since: Instant) {
        self.timings.push((name, since.elapsed().as_secs_f64()));
    }

    fn to_json(&self) -> Value {
        let paths = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let mut timings = serde_json::Map::new();
        for (k, t) in &self.timings {
            timings.insert(k.to_string(), json!(t));
        }
        timings.insert("total_s".into(), json!(self.started.elapsed().as_secs_f64()));
        json!({
            "subcommand": self.subcommand,
            "config": self.config.as_ref().map(|p| p.display().to_string()),
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "overrides": self.overrides.iter().map(|(k, v)| json!({"key": k, "value": v})).collect::<Vec<_>>(),
            "threads": self.threads,
            "version": env!("CARGO_PKG_VERSION"),
            "timings": timings,
        })
    }
}

struct Ctx {
    out_dir: PathBuf,
    h: Vec<f64>,
    dtau: Vec<f64>,
    manifest: Manifest,
}

impl Ctx {
    /// Creates `path` (relative paths land in the output directory) and records it.
    fn create(&mut self, path: &Path) -> Result<(BufWriter<File>, PathBuf), CliError> {
        let full = if path.is_absolute() { path.to_path_buf() } else { self.out_dir.join(path) };
        let f = File::create(&full).map_err(io_err(&full))?;
        self.manifest.outputs.push(full.clone());
        Ok((BufWriter::new(f), full))
    }

    fn write_with(
        &mut self,
        path: &Path,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let (mut w, full) = self.create(path)?;
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&full))
    }

    fn single_dtau(&self, default: f64) -> Result<f64, CliError> {
        match self.dtau[..] {
            [] => Ok(default),
            [d] => Ok(d),
            _ => Err(CliError::Usage("--dtau takes a single value here".into())),
        }
    }

    fn load(&mut self, path: &Path) -> Result<ScalarField, CliError> {
        self.manifest.inputs.push(path.to_path_buf());
        load_field(path).map_err(|e| input_err(path, e))
    }
}

fn parse_threads(s: &str) -> Result<usize, CliError> {
    if s == "auto" {
        return Ok(std::thread::available_parallelism().map_or(1, |n| n.get()));
    }
    s.parse::<usize>()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Usage(format!("--threads expects a positive integer or `auto`, got `{s}`")))
}

fn cmd_solve(ctx: &mut Ctx, a: &SolveArgs) -> Result<(), CliError> {
    ctx.manifest.config = Some(a.config.clone());
    let text = fs::read_to_string(&a.config).map_err(io_err(&a.config))?;
    let mut overrides: Vec<(&'static str, String)> = Vec::new();
    if let Some(e) = a.eps {
        overrides.push(("eps", e.to_string()));
    }
    match ctx.h[..] {
        [] => {}
        [h] => overrides.push(("h", h.to_string())),
        _ => return Err(CliError::Usage("--h takes a single value for solve".into())),
    }
    if let Some(m) = &a.mode {
        overrides.push(("mode", m.clone()));
    }
    if let Some(g) = &a.gamma0 {
        overrides.push(("gamma0", g.clone()));
    }
    let config = parse_with_overrides(&text, &overrides).map_err(|e| input_err(&a.config, e))?;
    ctx.manifest.overrides = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();

    let t = Instant::now();
    let result = solve(&config);
    ctx.manifest.lap("solve_s", t);
    let sol = match result {
        Ok(s) => s,
        Err(SolverError::MaxIterations { log }) => {
            let iters = log.iterations;
            ctx.write_with(Path::new("convergence.csv"), |w| log.write_csv(w))?;
            return Err(CliError::NotConverged(format!("no convergence within {iters} iterations")));
        }
        Err(SolverError::Config(e)) => return Err(input_err(&a.config, e)),
        Err(e) => return Err(CliError::NotConverged(e.to_string())),
    };
    let t = Instant::now();
    let dump = a.out.clone().unwrap_or_else(|| "u.fbac".into());
    ctx.write_with(&dump, |w| write_field(w, &sol.u))?;
    if let Some(ext) = &sol.extension {
        ctx.write_with(Path::new("u_ext.fbac"), |w| write_field(w, ext))?;
    }
    ctx.write_with(Path::new("gamma_minus.csv"), |w| sol.write_graph_csv(false, w))?;
    ctx.write_with(Path::new("gamma_plus.csv"), |w| sol.write_graph_csv(true, w))?;
    ctx.write_with(Path::new("convergence.csv"), |w| sol.log.write_csv(w))?;
    ctx.manifest.lap("write_s", t);
    eprintln!(
        "converged in {} iterations, flux residual {:.3e}",
        sol.log.iterations, sol.log.final_flux_residual
    );
    Ok(())
}

/// Config text with command-line values taking precedence over the file's.
fn parse_with_overrides(text: &str, overrides: &[(&'static str, String)]) -> Result<SolverConfig, ConfigError> {
    let mut pairs: Vec<(&'static str, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = KEYS
            .iter()
            .find(|&&c| c == k.trim())
            .ok_or_else(|| ConfigError::UnknownKey {
                line: i + 1,
                key: k.trim().to_string(),
            })?;
        pairs.push((key, v.trim().to_string()));
    }
    pairs.extend(overrides.iter().cloned());
    if let Some((_, m)) = overrides.iter().find(|(k, _)| *k == "mode") {
        m.parse::<Mode>().map_err(|msg| ConfigError::BadValue { key: "mode", msg })?;
    }
    SolverConfig::from_pairs(&pairs)
}

fn cmd_oracle(ctx: &mut Ctx) -> Result<(), CliError> {
    let mut opts = SuiteOptions::default();
    if !ctx.h.is_empty() {
        opts.hs = ctx.h.clone();
    }
    if !ctx.dtau.is_empty() {
        opts.dtaus = ctx.dtau.clone();
    }
    if opts.hs.len() != opts.dtaus.len() {
        return Err(CliError::Usage(format!(
            "--h and --dtau lists must have equal length ({} vs {})",
            opts.hs.len(),
            opts.dtaus.len()
        )));
    }
    let t = Instant::now();
    let report = oracle_suite(&opts).map_err(|e| CliError::Usage(e.to_string()))?;
    ctx.manifest.lap("suite_s", t);
    let csv = report.to_csv();
    ctx.write_with(Path::new("oracle.csv"), |w| w.write_all(csv.as_bytes()))?;
    print!("{csv}");
    let failing = report.failures();
    if failing.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = failing.iter().map(|r| r.csv_line()).collect();
    Err(CliError::Verification(format!(
        "{} failing rows:\n{}",
        failing.len(),
        lines.join("\n")
    )))
}

fn parse_point(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::Usage(format!("bad --start point `{s}`")))
}

fn cmd_analyze(ctx: &mut Ctx, a: &AnalyzeArgs) -> Result<(), CliError> {
    let u = ctx.load(&a.dump)?;
    let dtau = ctx.single_dtau(1.0 / 32.0)?;
    let &[t0, t1] = &a.span[..] else {
        return Err(CliError::Usage("--span takes two values".into()));
    };
    let t = Instant::now();
    for (k, &tau) in a.tau.iter().enumerate() {
        let s = extract_level(&u, tau).map_err(|e| input_err(&a.dump, format!("level {tau}: {e}")))?;
        ctx.write_with(Path::new(&format!("level_{k}.csv")), |w| s.write_csv(w))?;
    }
    for (k, p) in a.start.iter().enumerate() {
        let p = parse_point(p)?;
        if p.len() != u.dim() {
            return Err(CliError::Usage(format!("--start needs {} coordinates", u.dim())));
        }
        let flow_err = |e: fbac::flow::FlowError| input_err(&a.dump, format!("trajectory {k}: {e}"));
        let x0 = project_to_level(&u, &p, t0).map_err(flow_err)?;
        let traj = integrate_flow(&u, &x0, (t0, t1), dtau).map_err(flow_err)?;
        ctx.write_with(Path::new(&format!("trajectory_{k}.csv")), |w| traj.write_csv(w))?;
    }
    ctx.manifest.lap("analyze_s", t);
    Ok(())
}

fn cmd_verify(ctx: &mut Ctx, a: &VerifyArgs) -> Result<(), CliError> {
    if let Some(bad) = a.alpha.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1], got {bad}")));
    }
    let field = ctx.load(&a.dump)?;
    let sol = Solution::from_dump(field).map_err(|e| input_err(&a.dump, e))?;
    let mut opts = ReportOptions::default();
    opts.dtau = ctx.single_dtau(opts.dtau)?;
    let t = Instant::now();
    let report = theorem_report(&sol, &a.alpha, &opts).map_err(|e| input_err(&a.dump, e))?;
    ctx.manifest.lap("report_s", t);
    for s in &report.skipped {
        eprintln!("skipped: {s}");
    }
    if !report.eta_below_half {
        eprintln!("warning: measured eta {:.3} violates eta < 1/2", report.eta);
    }
    let out = a.out.clone().unwrap_or_else(|| "report.json".into());
    let text = report.to_json();
    ctx.write_with(&out, |w| writeln!(w, "{text}"))
}

fn cmd_report(ctx: &mut Ctx, a: &ReportArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for p in &a.reports {
        ctx.manifest.inputs.push(p.clone());
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        let name = p.display().to_string();
        let r = GeometryReport::from_json(&text, &name).map_err(|e| CliError::Usage(e.to_string()))?;
        reports.push((name, r));
    }
    let csv = sweep_csv(&reports).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = a.out.clone().unwrap_or_else(|| "sweep.csv".into());
    ctx.write_with(&out, |w| w.write_all(csv.as_bytes()))?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = parse_threads(&cli.threads)?;
    fs::create_dir_all(&cli.out_dir).map_err(io_err(&cli.out_dir))?;
    let name = match cli.cmd {
        Cmd::Solve(_) => "solve",
        Cmd::Oracle => "oracle",
        Cmd::Analyze(_) => "analyze",
        Cmd::Verify(_) => "verify",
        Cmd::Report(_) => "report",
    };
    let mut ctx = Ctx {
        out_dir: cli.out_dir,
        h: cli.h,
        dtau: cli.dtau,
        manifest: Manifest::new(name, threads),
    };
    let result = match &cli.cmd {
        Cmd::Solve(a) => cmd_solve(&mut ctx, a),
        Cmd::Oracle => cmd_oracle(&mut ctx),
        Cmd::Analyze(a) => cmd_analyze(&mut ctx, a),
        Cmd::Verify(a) => cmd_verify(&mut ctx, a),
        Cmd::Report(a) => cmd_report(&mut ctx, a),
    };
    // the manifest is written even when the command fails part-way
    let path = ctx.out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&ctx.manifest.to_json()).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
