use std::fmt;
use std::str::FromStr;

use crate::expr::{Expr, ExprError};
use crate::field::{build_grid, BoxDomain, FieldError, Grid};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("key `{key}`: {msg}")]
    BadValue { key: &'static str, msg: String },
    #[error("gamma0: {0}")]
    Expr(#[from] ExprError),
    #[error("grid: {0}")]
    Grid(#[from] FieldError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Variational,
    TrialFb,
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "variational" => Ok(Mode::Variational),
            "trial_fb" => Ok(Mode::TrialFb),
            other => Err(format!("unknown mode `{other}` (expected variational or trial_fb)")),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Variational => "variational",
            Mode::TrialFb => "trial_fb",
        })
    }
}

/// Outer-iteration acceleration for the trial free-boundary mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Accel {
    /// Plain relaxed update.
    None,
    /// Anderson mixing over the given number of previous iterates.
    Anderson(usize),
}

impl FromStr for Accel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Accel::None),
            "anderson" => Ok(Accel::Anderson(6)),
            other => match other.strip_prefix("anderson:") {
                Some(m) => m
                    .parse::<usize>()
                    .ok()
                    .filter(|m| *m >= 1)
                    .map(Accel::Anderson)
                    .ok_or_else(|| format!("bad Anderson depth `{m}`")),
                None => Err(format!("unknown acceleration `{other}` (none, anderson, anderson:<m>)")),
            },
        }
    }
}

impl fmt::Display for Accel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Accel::None => f.write_str("none"),
            Accel::Anderson(m) => write!(f, "anderson:{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub eps: f64,
    /// Base dimension; the ambient box is `[-1, 1]^n × [-L, L]`.
    pub n: usize,
    pub vertical_extent: f64,
    pub h: f64,
    pub gamma0: Expr,
    pub mode: Mode,
    pub deltas: Vec<f64>,
    pub lambda: f64,
    pub lin_tol: f64,
    pub tol_fb: f64,
    pub max_iter: usize,
    pub accel: Accel,
}

pub const KEYS: [&str; 12] = [
    "eps", "n", "L", "h", "gamma0", "mode", "deltas", "lambda", "lin_tol", "tol_fb", "max_iter", "accel",
];

impl SolverConfig {
    /// Defaults for everything except `eps`, `h` and `gamma0`.
    pub fn new(eps: f64, h: f64, gamma0: Expr) -> Self {
        let n = gamma0.vars_used().max(1);
        Self {
            eps,
            n,
            vertical_extent: 0.5,
            h,
            gamma0,
            mode: Mode::TrialFb,
            deltas: vec![0.5, 0.25, 0.1, 0.05],
            lambda: 0.5,
            lin_tol: 1e-10,
            tol_fb: 1e-6,
            max_iter: 2000,
            accel: Accel::Anderson(6),
        }
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut pairs: Vec<(&'static str, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let k = k.trim();
            let key = KEYS.iter().find(|&&c| c == k).ok_or_else(|| ConfigError::UnknownKey {
                line: i + 1,
                key: k.to_string(),
            })?;
            pairs.push((key, v.trim().to_string()));
        }
        Self::from_pairs(&pairs)
    }

    /// Builds a config from key/value pairs (later pairs override earlier ones).
    pub fn from_pairs(pairs: &[(&'static str, String)]) -> Result<Self, ConfigError> {
        let get = |k: &str| pairs.iter().rev().find(|(key, _)| *key == k).map(|(_, v)| v.as_str());
        let eps = parse_num::<f64>("eps", get("eps").ok_or(ConfigError::Missing("eps"))?)?;
        let h = parse_num::<f64>("h", get("h").ok_or(ConfigError::Missing("h"))?)?;
        let gamma0 = Expr::parse(get("gamma0").ok_or(ConfigError::Missing("gamma0"))?)?;
        let mut c = SolverConfig::new(eps, h, gamma0);
        if let Some(v) = get("n") {
            c.n = parse_num("n", v)?;
        }
        if let Some(v) = get("L") {
            c.vertical_extent = parse_num("L", v)?;
        }
        if let Some(v) = get("mode") {
            c.mode = v.parse().map_err(|msg| ConfigError::BadValue { key: "mode", msg })?;
        }
        if let Some(v) = get("deltas") {
            c.deltas = v
                .split(',')
                .map(|t| parse_num::<f64>("deltas", t.trim()))
                .collect::<Result<_, _>>()?;
        }
        if let Some(v) = get("lambda") {
            c.lambda = parse_num("lambda", v)?;
        }
        if let Some(v) = get("lin_tol") {
            c.lin_tol = parse_num("lin_tol", v)?;
        }
        if let Some(v) = get("tol_fb") {
            c.tol_fb = parse_num("tol_fb", v)?;
        }
        if let Some(v) = get("max_iter") {
            c.max_iter = parse_num("max_iter", v)?;
        }
        if let Some(v) = get("accel") {
            c.accel = v.parse().map_err(|msg| ConfigError::BadValue { key: "accel", msg })?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Checks every invariant and that the ambient grid can be built.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &'static str, msg: String| Err(ConfigError::BadValue { key, msg });
        if !(self.eps > 0.0 && self.eps <= 0.2) {
            return bad("eps", format!("must lie in (0, 0.2], got {}", self.eps));
        }
        if !(self.n == 1 || self.n == 2) {
            return bad("n", format!("base dimension must be 1 or 2, got {}", self.n));
        }
        if self.gamma0.vars_used() > self.n {
            return bad("gamma0", format!("uses x2 but n = {}", self.n));
        }
        if !(self.h > 0.0 && self.h <= self.eps / 4.0 * (1.0 + 1e-12)) {
            return bad("h", format!("must satisfy 0 < h <= eps/4 = {}, got {}", self.eps / 4.0, self.h));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda", format!("must lie in (0, 1], got {}", self.lambda));
        }
        if !(self.lin_tol > 0.0) {
            return bad("lin_tol", "must be positive".into());
        }
        if !(self.tol_fb > 0.0) {
            return bad("tol_fb", "must be positive".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter", "must be positive".into());
        }
        if self.deltas.is_empty()
            || self.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0))
            || self.deltas.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("deltas", "must be a strictly decreasing list in (0, 1)".into());
        }
        let grid = self.grid()?;
        let sup = self.seed_sup(&grid);
        if !(sup + 2.0 * self.eps < self.vertical_extent) {
            return bad(
                "L",
                format!("layer does not fit: sup|gamma0| + 2 eps = {} >= L = {}", sup + 2.0 * self.eps, self.vertical_extent),
            );
        }
        Ok(())
    }

    pub fn domain(&self) -> BoxDomain {
        let mut lo = vec![-1.0; self.n];
        let mut hi = vec![1.0; self.n];
        lo.push(-self.vertical_extent);
        hi.push(self.vertical_extent);
        BoxDomain::new(&lo, &hi)
    }

    /// Ambient grid; the vertical axis is last.
    pub fn grid(&self) -> Result<Grid, FieldError> {
        build_grid(&self.domain(), self.h)
    }

    fn seed_sup(&self, grid: &Grid) -> f64 {
        let nb = if self.n == 1 { 1 } else { grid.shape()[1] };
        let mut sup: f64 = 0.0;
        for i in 0..grid.shape()[0] {
            for j in 0..nb {
                let x = [grid.coord(0, i), if self.n == 2 { grid.coord(1, j) } else { 0.0 }];
                sup = sup.max(self.gamma0.eval(&x).abs());
            }
        }
        sup
    }

    /// One-line description embedded in dump labels and reports.
    pub fn describe(&self) -> String {
        format!(
            "mode={} eps={} h={} n={} L={} gamma0={}",
            self.mode,
            self.eps,
            self.h,
            self.n,
            self.vertical_extent,
            self.gamma0.source().replace(' ', "")
        )
    }

    /// Canonical `key = value` text that parses back to the same config.
    pub fn to_text(&self) -> String {
        let deltas: Vec<String> = self.deltas.iter().map(|d| d.to_string()).collect();
        format!(
            "eps = {}\nn = {}\nL = {}\nh = {}\ngamma0 = {}\nmode = {}\ndeltas = {}\nlambda = {}\nlin_tol = {}\ntol_fb = {}\nmax_iter = {}\naccel = {}\n",
            self.eps,
            self.n,
            self.vertical_extent,
            self.h,
            self.gamma0.source(),
            self.mode,
            deltas.join(", "),
            self.lambda,
            self.lin_tol,
            self.tol_fb,
            self.max_iter,
            self.accel
        )
    }
}

fn parse_num<T: FromStr>(key: &'static str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::BadValue {
        key,
        msg: format!("`{v}`: {e}"),
    })
}
