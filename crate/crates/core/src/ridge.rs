//! Ridge regression with an unpenalised intercept.
//!
//! Minimises `(1/N) ||y - X a - c||^2 + lambda ||a||^2`. Using the mean
//! rather than the sum keeps the fit unchanged when every training row is
//! duplicated. With `lambda = 0` the minimum-norm least-squares solution is
//! returned, which is well defined even for rank-deficient features.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
}

impl RegressionModel {
    pub fn predict(&self, features: &[f64]) -> f64 {
        dot(&self.weights, features) + self.intercept
    }

    pub fn predict_rows(&self, features: &Matrix) -> Vec<f64> {
        features.iter_rows().map(|r| self.predict(r)).collect()
    }
}

pub fn fit_regression(features: &Matrix, targets: &[f64], lambda: f64) -> Result<RegressionModel> {
    let (n, d) = features.shape();
    if n < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 training rows, got {n}"
        )));
    }
    if targets.len() != n {
        return Err(Error::Domain(format!(
            "{} targets for {n} rows",
            targets.len()
        )));
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Config(format!(
            "ridge lambda must be nonnegative, got {lambda}"
        )));
    }
    if !features.is_finite() || targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("regression inputs are not finite".into()));
    }

    let nf = n as f64;
    let mut mean_x = vec![0.0; d];
    for row in features.iter_rows() {
        for (m, v) in mean_x.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean_x.iter_mut().for_each(|m| *m /= nf);
    let mean_y = targets.iter().sum::<f64>() / nf;

    let xc = DMatrix::from_fn(n, d, |i, j| features.get(i, j) - mean_x[j]);
    let yc = DVector::from_iterator(n, targets.iter().map(|y| y - mean_y));

    let weights: DVector<f64> = if lambda > 0.0 {
        let mut gram = xc.tr_mul(&xc) / nf;
        for k in 0..d {
            gram[(k, k)] += lambda;
        }
        let rhs = xc.tr_mul(&yc) / nf;
        gram.cholesky()
            .ok_or_else(|| Error::Numeric("ridge system is not positive definite".into()))?
            .solve(&rhs)
    } else {
        let svd = xc.svd(true, true);
        let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
        let tol = smax * n.max(d) as f64 * f64::EPSILON;
        let pinv = svd
            .pseudo_inverse(tol.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Numeric(e.to_string()))?;
        pinv * yc
    };

    let weights: Vec<f64> = weights.iter().copied().collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("regression weights are not finite".into()));
    }
    let intercept = mean_y - dot(&weights, &mean_x);
    Ok(RegressionModel {
        weights,
        intercept,
        lambda,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Solve `(Z^T Z / N + lambda D) theta = Z^T y / N` with `Z = [X, 1]` and
    /// `D = diag(1, ..., 1, 0)` by Gaussian elimination with partial pivoting.
    fn normal_equation_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        let d = x[0].len();
        let p = d + 1;
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().copied().chain([1.0]).collect())
            .collect();
        let mut a = vec![vec![0.0; p + 1]; p];
        for r in 0..p {
            for c in 0..p {
                a[r][c] = (0..n).map(|i| z[i][r] * z[i][c]).sum::<f64>() / n as f64;
            }
            if r < d {
                a[r][r] += lambda;
            }
            a[r][p] = (0..n).map(|i| z[i][r] * y[i]).sum::<f64>() / n as f64;
        }
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            for r in 0..p {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=p {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let theta: Vec<f64> = (0..p).map(|r| a[r][p] / a[r][r]).collect();
        (theta[..d].to_vec(), theta[d])
    }

    #[test]
    fn simple_line_without_penalty() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let fit = fit_regression(&x, &[0.2, 0.4, 0.6], 0.0).unwrap();
        assert!((fit.weights[0] - 0.2).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }

    #[test]
    fn constant_targets_give_zero_weights() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, -1.0], vec![0.5, 3.0]]);
        let fit = fit_regression(&x, &[0.3, 0.3, 0.3], 0.1).unwrap();
        assert!(fit.weights.iter().all(|w| w.abs() < 1e-15));
        assert!((fit.intercept - 0.3).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_without_penalty_fall_back_to_min_norm() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        let fit = fit_regression(&x, &[0.1, 0.5, 0.9], 0.0).unwrap();
        assert_eq!(fit.weights, vec![0.0, 0.0]);
        assert!((fit.intercept - 0.5).abs() < 1e-15);
    }

    #[test]
    fn more_features_than_rows_min_norm() {
        // two rows in 3-d: the min-norm interpolant is exact on training data
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 2.0], vec![0.0, 1.0, -1.0]]);
        let fit = fit_regression(&x, &[0.25, 0.75], 0.0).unwrap();
        assert!((fit.predict(x.row(0)) - 0.25).abs() < 1e-12);
        assert!((fit.predict(x.row(1)) - 0.75).abs() < 1e-12);
        // weights lie in the row space of the centered data, direction (1,-1,3)
        let w = &fit.weights;
        assert!((w[1] + w[0]).abs() < 1e-12 && (w[2] - 3.0 * w[0]).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equation_oracle() {
        let mut rng = rng_from_seed(21);
        for _ in 0..25 {
            let n = rng.random_range(3..30);
            let d = rng.random_range(1..12);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let fit = fit_regression(&Matrix::from_rows(&rows), &y, 1e-2).unwrap();
            let (w, c) = normal_equation_oracle(&rows, &y, 1e-2);
            for (a, b) in fit.weights.iter().zip(&w) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            assert!((fit.intercept - c).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let x = Matrix::from_rows(&[vec![1.0]]);
        assert!(fit_regression(&x, &[0.5], 0.1).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        assert!(fit_regression(&x, &[0.5, 0.2], -1.0).is_err());
        assert!(fit_regression(&x, &[0.5], 0.1).is_err());
    }

    proptest! {
        #[test]
        fn duplicating_rows_leaves_fit_unchanged(
            seed in 0u64..1000,
            n in 2usize..15,
            d in 1usize..6,
            lambda in 1e-3f64..1.0,
        ) {
            let mut rng = rng_from_seed(seed);
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let once = fit_regression(&Matrix::from_rows(&rows), &y, lambda).unwrap();
            let doubled_rows: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
            let doubled_y: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
            let twice = fit_regression(&Matrix::from_rows(&doubled_rows), &doubled_y, lambda).unwrap();
            for (a, b) in once.weights.iter().zip(&twice.weights) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            prop_assert!((once.intercept - twice.intercept).abs() < 1e-10);
        }
    }
}
