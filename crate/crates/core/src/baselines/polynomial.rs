//! Least-squares polynomial regression over all monomials up to a total degree.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent tuples of every monomial in `dims` variables with total degree
/// at most `degree`, ordered by degree and then lexicographically.
pub fn monomials(dims: usize, degree: u32) -> Vec<Vec<u32>> {
    fn fill(prefix: &mut Vec<u32>, dims: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dims {
            if remaining == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(prefix, dims, remaining - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for d in 0..=degree {
        fill(&mut Vec::with_capacity(dims), dims, d, &mut out);
    }
    out
}

fn eval_term(exponents: &[u32], x: &[f64]) -> f64 {
    exponents.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub degree: u32,
    pub exponents: Vec<Vec<u32>>,
    pub coefficients: Vec<f64>,
}

impl PolynomialModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * eval_term(e, x))
            .sum()
    }

    /// Euclidean norm of the training residuals.
    pub fn residual_norm(&self, rows: &[Vec<f64>], targets: &[f64]) -> f64 {
        rows.iter()
            .zip(targets)
            .map(|(x, y)| (self.predict(x) - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Fits by singular value decomposition of the design matrix, giving the
/// minimum-norm least-squares coefficients when columns are dependent.
pub fn fit(rows: &[Vec<f64>], targets: &[f64], degree: u32) -> Result<PolynomialModel> {
    let dims = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.len() != targets.len() || rows.iter().any(|r| r.len() != dims) {
        return Err(Error::domain("polynomial fit needs equally sized, non-empty rows and targets"));
    }
    let exponents = monomials(dims, degree);
    if rows.len() < exponents.len() {
        return Err(Error::Rank {
            samples: rows.len(),
            terms: exponents.len(),
        });
    }
    let design = DMatrix::from_fn(rows.len(), exponents.len(), |i, j| eval_term(&exponents[j], &rows[i]));
    let b = DVector::from_column_slice(targets);
    let svd = design.svd(true, true);
    let cutoff = svd.singular_values.max() * (rows.len().max(exponents.len()) as f64) * f64::EPSILON;
    let solution = svd.solve(&b, cutoff).map_err(|e| Error::domain(e.to_string()))?;
    Ok(PolynomialModel {
        degree,
        exponents,
        coefficients: solution.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(x: f64) -> Vec<f64> {
        vec![x, 0.0, 0.0, 0.0]
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials(4, 0).len(), 1);
        assert_eq!(monomials(4, 1).len(), 5);
        assert_eq!(monomials(4, 2).len(), 15);
        assert_eq!(monomials(4, 5).len(), 126);
        assert_eq!(monomials(1, 2), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn recovers_line_with_one_active_feature() {
        let xs: Vec<f64> = (0..8).map(|i| i as f64 * 0.7 - 1.0).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| embed(x)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let m = fit(&rows, &ys, 1).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
        // exponents[1] is x0
        assert_eq!(m.exponents[1], vec![1, 0, 0, 0]);
        assert!((m.coefficients[1] - 3.0).abs() < 1e-9);
        assert!(m.coefficients[2..].iter().all(|c| c.abs() < 1e-9));
    }

    #[test]
    fn recovers_quadratic() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.25 - 2.0).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 + x + x * x).collect();
        let m = fit(&rows, &ys, 2).unwrap();
        for (c, want) in m.coefficients.iter().zip([1.0, 1.0, 1.0]) {
            assert!((c - want).abs() < 1e-8, "{c}");
        }
    }

    #[test]
    fn too_few_samples_is_a_rank_error() {
        let rows = vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 1.0, 0.0, 1.0], vec![0.5, 0.5, 0.5, 0.5]];
        let err = fit(&rows, &[1.0, 2.0, 3.0], 5).unwrap_err();
        assert!(matches!(err, Error::Rank { samples: 3, terms: 126 }));
    }
}
