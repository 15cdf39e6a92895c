//! Ridge least squares on standardized features.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Fitted `y ≈ intercept + weights · φ` in the raw feature coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFit {
    pub intercept: f64,
    pub weights: Vec<f64>,
    /// Number of samples in the regression.
    pub n: usize,
    /// Ridge parameter actually used after any escalation.
    pub lambda: f64,
    /// Sample standard deviation of the residuals.
    pub residual_std: f64,
}

impl CellFit {
    pub fn predict(&self, phi: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(phi)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }
}

const ESCALATIONS: usize = 3;
// reciprocal pivot ratio below which the normal equations count as singular
const PIVOT_FLOOR: f64 = 1e-12;

/// Fit `y` on the `n × f` row-major matrix `rows`. Columns are centred and
/// scaled; constant columns are dropped (the intercept absorbs them). The
/// penalty `λ‖w‖²` is added to the mean squared error in standardized units;
/// singular systems are retried with `λ ← max(10λ, 1e-10)` up to three times.
pub fn ridge_fit(
    rows: &[f64],
    y: &[f64],
    f: usize,
    lambda: f64,
    step: usize,
    action: usize,
) -> Result<CellFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyActionCell { step, action });
    }
    debug_assert_eq!(rows.len(), n * f);
    if !rows.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::SingularRegression {
            step,
            action,
            lambda,
        });
    }
    let nf = n as f64;
    let y_mean = y.iter().sum::<f64>() / nf;

    let mut mean = vec![0.0; f];
    for row in rows.chunks_exact(f) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut scale = vec![0.0; f];
    for row in rows.chunks_exact(f) {
        for ((s, x), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let active: Vec<usize> = (0..f)
        .filter(|&i| {
            scale[i] = (scale[i] / nf).sqrt();
            scale[i] > 1e-12 * (1.0 + mean[i].abs())
        })
        .collect();

    let p = active.len();
    let mut weights = vec![0.0; f];
    let mut used = lambda;
    if p > 0 {
        let mut gram = DMatrix::<f64>::zeros(p, p);
        let mut rhs = DVector::<f64>::zeros(p);
        let mut z = vec![0.0; p];
        for (row, &yi) in rows.chunks_exact(f).zip(y) {
            for (zi, &c) in z.iter_mut().zip(&active) {
                *zi = (row[c] - mean[c]) / scale[c];
            }
            for a in 0..p {
                rhs[a] += z[a] * (yi - y_mean);
                for b in a..p {
                    gram[(a, b)] += z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                gram[(a, b)] /= nf;
                gram[(b, a)] = gram[(a, b)];
            }
            rhs[a] /= nf;
        }
        let mut attempt = 0;
        let solution = loop {
            let mut m = gram.clone();
            for a in 0..p {
                m[(a, a)] += used;
            }
            if let Some(chol) = m.cholesky() {
                let diag: Vec<f64> = (0..p).map(|a| chol.l_dirty()[(a, a)].powi(2)).collect();
                let hi = diag.iter().cloned().fold(0.0, f64::max);
                let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
                if lo > PIVOT_FLOOR * hi {
                    break chol.solve(&rhs);
                }
            }
            if attempt == ESCALATIONS {
                return Err(Error::SingularRegression {
                    step,
                    action,
                    lambda: used,
                });
            }
            attempt += 1;
            used = (10.0 * used).max(1e-10);
        };
        for (k, &c) in active.iter().enumerate() {
            weights[c] = solution[k] / scale[c];
        }
    }
    let intercept = y_mean - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    let fit = CellFit {
        intercept,
        weights,
        n,
        lambda: used,
        residual_std: 0.0,
    };
    let residual_std = if n > 1 {
        let ss: f64 = rows
            .chunks_exact(f)
            .zip(y)
            .map(|(row, &yi)| (yi - fit.predict(row)).powi(2))
            .sum();
        (ss / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(CellFit {
        residual_std,
        ..fit
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_linear_model() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let rows: Vec<f64> = xs.iter().flat_map(|&x| [1.0, x, x * x]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 2.0 - 3.0 * x + 0.5 * x * x).collect();
        let fit = ridge_fit(&rows, &y, 3, 0.0, 0, 0).unwrap();
        for (&x, &yi) in xs.iter().zip(&y) {
            assert!((fit.predict(&[1.0, x, x * x]) - yi).abs() < 1e-9);
        }
        assert!(fit.residual_std < 1e-9);
        assert_eq!(fit.lambda, 0.0);
    }

    #[test]
    fn intercept_only_is_the_sample_mean() {
        let y = [1.0, 2.0, 4.0, 8.0];
        let rows = [1.0; 4];
        let fit = ridge_fit(&rows, &y, 1, 0.0, 0, 0).unwrap();
        assert_eq!(fit.intercept, y.iter().sum::<f64>() / 4.0);
        assert_eq!(fit.weights, vec![0.0]);
    }

    #[test]
    fn collinear_columns_trigger_ridge_escalation() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let rows: Vec<f64> = xs.iter().flat_map(|&x| [x, 2.0 * x]).collect();
        let y: Vec<f64> = xs.iter().map(|&x| 3.0 * x + 1.0).collect();
        let fit = ridge_fit(&rows, &y, 2, 0.0, 0, 0).unwrap();
        assert!(fit.lambda > 0.0 && fit.lambda <= 1e-8);
        assert!((fit.predict(&[5.0, 10.0]) - 16.0).abs() < 1e-6);
    }

    #[test]
    fn empty_and_non_finite_inputs_are_errors() {
        assert!(matches!(
            ridge_fit(&[], &[], 2, 0.0, 3, 4),
            Err(Error::EmptyActionCell { step: 3, action: 4 })
        ));
        let rows = [1.0, f64::NAN, 2.0, 1.0];
        assert!(matches!(
            ridge_fit(&rows, &[1.0, 2.0], 2, 0.0, 1, 0),
            Err(Error::SingularRegression { .. })
        ));
    }
}
