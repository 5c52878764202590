//! Closed-form oracle fields used to validate every numerical path.

use super::{FieldError, Grid, ScalarField};

/// Parameters accepted by [`analytic_field`]; each oracle reads only what it needs.
#[derive(Debug, Clone, Default)]
pub struct OracleParams {
    pub eps: Option<f64>,
    pub direction: Option<Vec<f64>>,
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// `clamp(x_d / eps, -1, 1)`, the one-dimensional free-boundary layer.
    Profile1d { eps: f64 },
    /// `clamp(x·e / eps, -1, 1)` for a unit vector `e`.
    Tilted { eps: f64, direction: Vec<f64> },
    /// `|x - c|`.
    Distance { center: Vec<f64> },
    /// `e^{x1} cos x2`.
    HarmonicExp,
}

impl Oracle {
    pub fn from_name(name: &str, params: &OracleParams) -> Result<Self, FieldError> {
        let eps = || {
            params
                .eps
                .filter(|e| *e > 0.0 && e.is_finite())
                .ok_or_else(|| FieldError::BadParams(format!("{name} needs eps > 0")))
        };
        match name {
            "profile1d" => Ok(Oracle::Profile1d { eps: eps()? }),
            "tilted" => {
                let e = params
                    .direction
                    .clone()
                    .ok_or_else(|| FieldError::BadParams("tilted needs a direction".into()))?;
                let n: f64 = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (n - 1.0).abs() > 1e-12 {
                    return Err(FieldError::BadParams(format!("direction must be a unit vector (|e| = {n})")));
                }
                Ok(Oracle::Tilted {
                    eps: eps()?,
                    direction: e,
                })
            }
            "distance" => Ok(Oracle::Distance {
                center: params
                    .center
                    .clone()
                    .ok_or_else(|| FieldError::BadParams("distance needs a center".into()))?,
            }),
            "harmonic_exp" => Ok(Oracle::HarmonicExp),
            other => Err(FieldError::UnknownOracle(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Oracle::Profile1d { .. } => "profile1d",
            Oracle::Tilted { .. } => "tilted",
            Oracle::Distance { .. } => "distance",
            Oracle::HarmonicExp => "harmonic_exp",
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        match self {
            Oracle::Profile1d { eps } => (p[p.len() - 1] / eps).clamp(-1.0, 1.0),
            Oracle::Tilted { eps, direction } => {
                let s: f64 = p.iter().zip(direction).map(|(a, b)| a * b).sum();
                (s / eps).clamp(-1.0, 1.0)
            }
            Oracle::Distance { center } => p
                .iter()
                .zip(center)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Oracle::HarmonicExp => p[0].exp() * p[1].cos(),
        }
    }

    pub fn field(&self, grid: Grid) -> Result<ScalarField, FieldError> {
        let dim = grid.dim();
        match self {
            Oracle::Tilted { direction, .. } if direction.len() != dim => {
                return Err(FieldError::BadParams("direction length must match the grid dimension".into()))
            }
            Oracle::Distance { center } if center.len() != dim => {
                return Err(FieldError::BadParams("center length must match the grid dimension".into()))
            }
            _ => {}
        }
        let f = ScalarField::from_fn(grid, self.name(), |p| self.eval(p))?;
        match self {
            Oracle::Profile1d { eps } | Oracle::Tilted { eps, .. } => f.with_eps(*eps),
            _ => Ok(f),
        }
    }
}

/// Builds the named oracle field on `grid`; nodal values equal the formula exactly.
pub fn analytic_field(name: &str, params: &OracleParams, grid: Grid) -> Result<ScalarField, FieldError> {
    Oracle::from_name(name, params)?.field(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_grid, BoxDomain};

    fn grid() -> Grid {
        build_grid(&BoxDomain::new(&[-1.0, -1.0], &[1.0, 1.0]), 0.05).unwrap()
    }

    fn value_at(f: &ScalarField, p: [f64; 2]) -> f64 {
        let g = f.grid();
        let i = g.to_index_space(0, p[0]).round() as usize;
        let j = g.to_index_space(1, p[1]).round() as usize;
        f.at(&[i, j, 0])
    }

    #[test]
    fn profile1d_node_value() {
        let p = OracleParams {
            eps: Some(0.1),
            ..Default::default()
        };
        let f = analytic_field("profile1d", &p, grid()).unwrap();
        assert!((value_at(&f, [0.0, 0.05]) - 0.5).abs() < 1e-12);
        assert_eq!(f.eps(), Some(0.1));
    }

    #[test]
    fn distance_node_value() {
        let p = OracleParams {
            center: Some(vec![0.0, 0.0]),
            ..Default::default()
        };
        let f = analytic_field("distance", &p, grid()).unwrap();
        assert!((value_at(&f, [0.3, 0.4]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn harmonic_exp_formula() {
        let o = Oracle::HarmonicExp;
        assert!((o.eval(&[0.0, std::f64::consts::FRAC_PI_4]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn unknown_oracle() {
        let err = analytic_field("sphere", &OracleParams::default(), grid()).unwrap_err();
        assert!(matches!(err, FieldError::UnknownOracle(_)));
    }

    #[test]
    fn tilted_requires_unit_direction() {
        let p = OracleParams {
            eps: Some(0.1),
            direction: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        assert!(matches!(
            analytic_field("tilted", &p, grid()),
            Err(FieldError::BadParams(_))
        ));
    }
}
