//! `FBAC1` text dump: an eight-line header followed by one value per line,
//! row-major with the last axis fastest. Reals are written with 17
//! significant digits so that dump → load → dump is byte-identical.

use std::io::{BufRead, Write};
use std::path::Path;

use super::{FieldError, Grid, ScalarField};

const MAGIC: &str = "FBAC1";

/// Formats a real with 17 significant digits (round-trips every `f64`).
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_field<W: Write>(mut w: W, f: &ScalarField) -> std::io::Result<()> {
    let g = f.grid();
    let join = |it: Vec<String>| it.join(" ");
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "dim {}", g.dim())?;
    writeln!(w, "shape {}", join(g.shape().iter().map(|n| n.to_string()).collect()))?;
    writeln!(w, "origin {}", join(g.origin().iter().map(|&o| fmt_real(o)).collect()))?;
    writeln!(w, "spacing {}", fmt_real(g.spacing()))?;
    match f.eps() {
        Some(e) => writeln!(w, "eps {}", fmt_real(e))?,
        None => writeln!(w, "eps none")?,
    }
    writeln!(w, "label {}", f.label())?;
    writeln!(w, "data")?;
    let mut buf = String::with_capacity(32 * 1024);
    for v in f.values() {
        buf.push_str(&fmt_real(*v));
        buf.push('\n');
        if buf.len() > 30 * 1024 {
            w.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> FieldError {
    FieldError::Parse {
        line,
        msg: msg.into(),
    }
}

fn keyed<'a>(line_no: usize, line: &'a str, key: &str) -> Result<&'a str, FieldError> {
    match line.strip_prefix(key) {
        Some("") => Ok(""),
        Some(rest) if rest.starts_with(' ') => Ok(&rest[1..]),
        _ => Err(parse_err(line_no, format!("expected `{key}`"))),
    }
}

fn parse_reals(line_no: usize, s: &str) -> Result<Vec<f64>, FieldError> {
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| parse_err(line_no, format!("bad real `{t}`: {e}"))))
        .collect()
}

pub fn read_field<R: BufRead>(r: R) -> Result<ScalarField, FieldError> {
    let mut lines = r.lines();
    let mut next = |n: usize| -> Result<String, FieldError> {
        match lines.next() {
            Some(l) => Ok(l?),
            None => Err(parse_err(n, "unexpected end of file")),
        }
    };
    if next(1)? != MAGIC {
        return Err(parse_err(1, "missing FBAC1 magic"));
    }
    let l = next(2)?;
    let dim: usize = keyed(2, &l, "dim")?
        .trim()
        .parse()
        .map_err(|_| parse_err(2, "bad dim"))?;
    let l = next(3)?;
    let shape: Vec<usize> = keyed(3, &l, "shape")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(3, format!("bad node count `{t}`"))))
        .collect::<Result<_, _>>()?;
    let l = next(4)?;
    let origin = parse_reals(4, keyed(4, &l, "origin")?)?;
    if shape.len() != dim || origin.len() != dim {
        return Err(parse_err(3, format!("shape/origin length does not match dim {dim}")));
    }
    let l = next(5)?;
    let spacing = parse_reals(5, keyed(5, &l, "spacing")?)?;
    if spacing.len() != 1 {
        return Err(parse_err(5, "expected one spacing value"));
    }
    let l = next(6)?;
    let eps_text = keyed(6, &l, "eps")?.trim().to_string();
    let eps = if eps_text == "none" {
        None
    } else {
        Some(
            eps_text
                .parse::<f64>()
                .map_err(|_| parse_err(6, format!("bad eps `{eps_text}`")))?,
        )
    };
    let l = next(7)?;
    let label = keyed(7, &l, "label")?.to_string();
    if next(8)? != "data" {
        return Err(parse_err(8, "expected `data`"));
    }
    let grid = Grid::new(&shape, &origin, spacing[0]).map_err(|e| parse_err(3, e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (k, l) in lines.enumerate() {
        let l = l?;
        let line_no = 9 + k;
        if l.is_empty() {
            continue;
        }
        let v: f64 = l
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad value `{l}`")))?;
        values.push(v);
    }
    let expected = grid.len();
    if values.len() != expected {
        return Err(parse_err(9 + values.len(), format!("expected {expected} values, found {}", values.len())));
    }
    let f = ScalarField::new(grid, values, label)?;
    match eps {
        Some(e) => f.with_eps(e).map_err(|e| parse_err(6, e.to_string())),
        None => Ok(f),
    }
}

pub fn load_field(path: &Path) -> Result<ScalarField, FieldError> {
    let file = std::fs::File::open(path)?;
    read_field(std::io::BufReader::new(file))
}
