//! Closed-form seed graphs `γ₀` over the base.
//!
//! Grammar: numbers, `x` (alias of `x1`), `x1`, `x2`, `pi`/`π`, `+`, `-`/`−`,
//! `*`/`·`, parentheses, unary minus, and the functions `cos`, `sin`.
//! Evaluation carries first and second derivatives along, so the seed's slope
//! and curvature come out exactly.

use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character `{ch}` at byte {pos}")]
    BadChar { ch: char, pos: usize },
    #[error("unexpected {found} at byte {pos}")]
    Unexpected { found: String, pos: usize },
    #[error("unknown identifier `{0}`")]
    UnknownIdent(String),
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Cos(Box<Node>),
    Sin(Box<Node>),
}

/// Value with gradient and Hessian in the (up to two) base variables.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d: [f64; 2],
    pub dd: [[f64; 2]; 2],
}

impl Jet {
    fn constant(v: f64) -> Self {
        Jet {
            v,
            ..Default::default()
        }
    }

    fn var(i: usize, v: f64) -> Self {
        let mut j = Jet::constant(v);
        j.d[i] = 1.0;
        j
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        let mut r = Jet::constant(f(self.v));
        for a in 0..2 {
            r.d[a] = f(self.d[a]);
            for b in 0..2 {
                r.dd[a][b] = f(self.dd[a][b]);
            }
        }
        r
    }

    fn zip(self, o: Jet, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut r = Jet::constant(f(self.v, o.v));
        for a in 0..2 {
            r.d[a] = f(self.d[a], o.d[a]);
            for b in 0..2 {
                r.dd[a][b] = f(self.dd[a][b], o.dd[a][b]);
            }
        }
        r
    }

    fn mul(self, o: Jet) -> Self {
        let mut r = Jet::constant(self.v * o.v);
        for a in 0..2 {
            r.d[a] = self.d[a] * o.v + self.v * o.d[a];
            for b in 0..2 {
                r.dd[a][b] = self.dd[a][b] * o.v
                    + self.d[a] * o.d[b]
                    + self.d[b] * o.d[a]
                    + self.v * o.dd[a][b];
            }
        }
        r
    }

    /// Chain rule for a scalar function with value `f0`, derivative `f1`, second derivative `f2`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut r = Jet::constant(f0);
        for a in 0..2 {
            r.d[a] = f1 * self.d[a];
            for b in 0..2 {
                r.dd[a][b] = f2 * self.d[a] * self.d[b] + f1 * self.dd[a][b];
            }
        }
        r
    }
}

/// Parsed seed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
    vars: usize,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = lex(src)?;
        if tokens.is_empty() {
            return Err(ExprError::Empty);
        }
        let mut p = Parser { tokens, at: 0 };
        let root = p.sum()?;
        if let Some((t, pos)) = p.tokens.get(p.at) {
            return Err(ExprError::Unexpected {
                found: format!("`{t}`"),
                pos: *pos,
            });
        }
        let vars = max_var(&root);
        Ok(Expr {
            root,
            source: src.trim().to_string(),
            vars,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of base variables referenced (0, 1 or 2).
    pub fn vars_used(&self) -> usize {
        self.vars
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.jet(x).v
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        eval(&self.root, x)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn max_var(n: &Node) -> usize {
    match n {
        Node::Num(_) => 0,
        Node::Var(i) => i + 1,
        Node::Neg(a) | Node::Cos(a) | Node::Sin(a) => max_var(a),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => max_var(a).max(max_var(b)),
    }
}

fn eval(n: &Node, x: &[f64]) -> Jet {
    match n {
        Node::Num(v) => Jet::constant(*v),
        Node::Var(i) => Jet::var(*i, x.get(*i).copied().unwrap_or(0.0)),
        Node::Neg(a) => eval(a, x).map(|v| -v),
        Node::Add(a, b) => eval(a, x).zip(eval(b, x), |p, q| p + q),
        Node::Sub(a, b) => eval(a, x).zip(eval(b, x), |p, q| p - q),
        Node::Mul(a, b) => eval(a, x).mul(eval(b, x)),
        Node::Cos(a) => {
            let j = eval(a, x);
            j.chain(j.v.cos(), -j.v.sin(), -j.v.cos())
        }
        Node::Sin(a) => {
            let j = eval(a, x);
            j.chain(j.v.sin(), j.v.cos(), -j.v.sin())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Plus => f.write_str("+"),
            Tok::Minus => f.write_str("-"),
            Tok::Star => f.write_str("*"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let mut out = Vec::new();
    let mut it = src.char_indices().peekable();
    while let Some(&(pos, ch)) = it.peek() {
        match ch {
            c if c.is_whitespace() => {
                it.next();
            }
            '+' => {
                it.next();
                out.push((Tok::Plus, pos));
            }
            '-' | '−' => {
                it.next();
                out.push((Tok::Minus, pos));
            }
            '*' | '·' => {
                it.next();
                out.push((Tok::Star, pos));
            }
            '(' => {
                it.next();
                out.push((Tok::LParen, pos));
            }
            ')' => {
                it.next();
                out.push((Tok::RParen, pos));
            }
            'π' => {
                it.next();
                out.push((Tok::Num(std::f64::consts::PI), pos));
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut s = String::new();
                while let Some(&(_, c)) = it.peek() {
                    let exp_sign = (c == '-' || c == '+') && s.ends_with(['e', 'E']);
                    if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                        s.push(c);
                        it.next();
                    } else {
                        break;
                    }
                }
                let v = s
                    .parse::<f64>()
                    .map_err(|_| ExprError::Unexpected {
                        found: format!("number `{s}`"),
                        pos,
                    })?;
                out.push((Tok::Num(v), pos));
            }
            c if c.is_ascii_alphabetic() => {
                let mut s = String::new();
                while let Some(&(_, c)) = it.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        it.next();
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            c => return Err(ExprError::BadChar { ch: c, pos }),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.at).map(|t| &t.0)
    }

    fn unexpected(&self) -> ExprError {
        match self.tokens.get(self.at) {
            Some((t, pos)) => ExprError::Unexpected {
                found: format!("`{t}`"),
                pos: *pos,
            },
            None => ExprError::Unexpected {
                found: "end of input".into(),
                pos: self.tokens.last().map(|t| t.1 + 1).unwrap_or(0),
            },
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.at += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(Tok::Minus) => {
                    self.at += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Star) = self.peek() {
            self.at += 1;
            lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.at += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Plus) => {
                self.at += 1;
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        let tok = self.peek().cloned().ok_or_else(|| self.unexpected())?;
        match tok {
            Tok::Num(v) => {
                self.at += 1;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.at += 1;
                let inner = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.at += 1;
                match name.as_str() {
                    "x" | "x1" => Ok(Node::Var(0)),
                    "x2" => Ok(Node::Var(1)),
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "cos" | "sin" => {
                        self.expect(Tok::LParen)?;
                        let arg = Box::new(self.sum()?);
                        self.expect(Tok::RParen)?;
                        Ok(if name == "cos" { Node::Cos(arg) } else { Node::Sin(arg) })
                    }
                    _ => Err(ExprError::UnknownIdent(name)),
                }
            }
            _ => Err(self.unexpected()),
        }
    }

    fn expect(&mut self, t: Tok) -> Result<(), ExprError> {
        if self.peek() == Some(&t) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.unexpected())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cosine_seed_value_and_derivatives() {
        let e = Expr::parse("0.03*cos(pi*x)").unwrap();
        let j = e.jet(&[0.25]);
        assert!((j.v - 0.03 * (PI / 4.0).cos()).abs() < 1e-15);
        assert!((j.d[0] + 0.03 * PI * (PI / 4.0).sin()).abs() < 1e-15);
        assert!((j.dd[0][0] + 0.03 * PI * PI * (PI / 4.0).cos()).abs() < 1e-14);
        assert_eq!(e.vars_used(), 1);
    }

    #[test]
    fn unicode_operators_and_precedence() {
        let e = Expr::parse("0.1·(x1·x1 − x2·x2) + −2*3").unwrap();
        let j = e.jet(&[0.5, 0.25]);
        assert!((j.v - (0.1 * (0.25 - 0.0625) - 6.0)).abs() < 1e-15);
        assert_eq!(j.dd, [[0.2, 0.0], [0.0, -0.2]]);
        assert_eq!(e.vars_used(), 2);
        assert_eq!(Expr::parse("2*π").unwrap().eval(&[]), 2.0 * PI);
    }

    #[test]
    fn mixed_second_derivative() {
        let e = Expr::parse("sin(x1*x2)").unwrap();
        let (a, b) = (0.3, -0.7);
        let j = e.jet(&[a, b]);
        let c = (a * b).cos();
        let s = (a * b).sin();
        assert!((j.dd[0][1] - (c - a * b * s)).abs() < 1e-15);
        assert_eq!(j.dd[0][1], j.dd[1][0]);
        assert!((j.dd[0][0] + b * b * s).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(Expr::parse("  "), Err(ExprError::Empty));
        assert!(matches!(Expr::parse("exp(x)"), Err(ExprError::UnknownIdent(_))));
        assert!(matches!(Expr::parse("x +"), Err(ExprError::Unexpected { .. })));
        assert!(matches!(Expr::parse("x $ 2"), Err(ExprError::BadChar { ch: '$', .. })));
        assert!(matches!(Expr::parse("cos x"), Err(ExprError::Unexpected { .. })));
        assert!(Expr::parse("1e-3*x").is_ok());
    }
}
