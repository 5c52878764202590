//! Hölder norms by exhaustive pair scan.

use super::LevelError;
use crate::field::Mat3;
use crate::linalg::{mat_sub, sym_spectral_norm};

/// Quantity whose pointwise size and pairwise differences can be measured.
pub trait HolderValue {
    fn magnitude(&self) -> f64;
    fn distance(&self, other: &Self) -> f64;
}

impl HolderValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }

    fn distance(&self, other: &Self) -> f64 {
        (self - other).abs()
    }
}

/// Symmetric matrices, measured in the spectral norm.
impl HolderValue for Mat3 {
    fn magnitude(&self) -> f64 {
        sym_spectral_norm(self)
    }

    fn distance(&self, other: &Self) -> f64 {
        sym_spectral_norm(&mat_sub(self, other))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HolderNorm {
    pub alpha: f64,
    pub sup_part: f64,
    pub seminorm_part: f64,
    pub region: String,
}

impl HolderNorm {
    pub fn total(&self) -> f64 {
        self.sup_part + self.seminorm_part
    }
}

/// `sup|f| + max_{x≠y} |f(x) - f(y)| / |x - y|^α` over the given points.
pub fn holder_norm<V: HolderValue>(
    points: &[[f64; 2]],
    values: &[V],
    alpha: f64,
    region: &str,
) -> Result<HolderNorm, LevelError> {
    Ok(holder_norms(points, values, &[alpha], region)?.remove(0))
}

/// Several exponents from one pair scan.
pub fn holder_norms<V: HolderValue>(
    points: &[[f64; 2]],
    values: &[V],
    alphas: &[f64],
    region: &str,
) -> Result<Vec<HolderNorm>, LevelError> {
    if let Some(&a) = alphas.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(LevelError::BadAlpha(a));
    }
    if points.len() != values.len() {
        return Err(LevelError::SizeMismatch {
            expected: points.len(),
            got: values.len(),
        });
    }
    if points.is_empty() {
        return Err(LevelError::EmptyRegion);
    }
    let sup = values.iter().map(|v| v.magnitude()).fold(0.0, f64::max);
    let mut semi = vec![0.0f64; alphas.len()];
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let dx = points[i][0] - points[j][0];
            let dy = points[i][1] - points[j][1];
            let d = (dx * dx + dy * dy).sqrt();
            if d == 0.0 {
                continue;
            }
            let df = values[i].distance(&values[j]);
            if df == 0.0 {
                continue;
            }
            for (s, &a) in semi.iter_mut().zip(alphas) {
                *s = s.max(df / d.powf(a));
            }
        }
    }
    Ok(alphas
        .iter()
        .zip(semi)
        .map(|(&alpha, seminorm_part)| HolderNorm {
            alpha,
            sup_part: sup,
            seminorm_part,
            region: region.to_string(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(h: f64) -> Vec<[f64; 2]> {
        let n = (1.0 / h).round() as usize;
        (0..=n).map(|i| [-0.5 + i as f64 * h, 0.0]).collect()
    }

    #[test]
    fn slope_and_constant() {
        let pts = line(0.05);
        let f: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let n = holder_norm(&pts, &f, 1.0, "B").unwrap();
        assert!((n.seminorm_part - 1.0).abs() < 1e-12);
        assert!((n.sup_part - 0.5).abs() < 1e-15);
        let c = vec![-2.5; pts.len()];
        let n = holder_norm(&pts, &c, 0.5, "B").unwrap();
        assert_eq!((n.sup_part, n.seminorm_part), (2.5, 0.0));
    }

    #[test]
    fn quadratic_seminorm() {
        let h = 1.0 / 16.0;
        let pts = line(h);
        let f: Vec<f64> = pts.iter().map(|p| p[0] * p[0]).collect();
        let n = holder_norm(&pts, &f, 1.0, "B").unwrap();
        assert!((n.seminorm_part - (1.0 - h)).abs() < 1e-12, "{}", n.seminorm_part);
    }

    #[test]
    fn errors() {
        let pts = line(0.25);
        let f = vec![0.0; pts.len()];
        assert!(matches!(holder_norm(&pts, &f, 0.0, ""), Err(LevelError::BadAlpha(_))));
        assert!(matches!(holder_norm(&pts, &f, 1.5, ""), Err(LevelError::BadAlpha(_))));
        let none: Vec<f64> = Vec::new();
        assert!(matches!(holder_norm(&[], &none, 0.5, ""), Err(LevelError::EmptyRegion)));
    }
}
