//! Small dense symmetric-matrix helpers for the multivariate kernel and the
//! synthetic-likelihood estimator. Dimensions here are tiny (a handful of
//! parameters or summary components), so a plain Cholesky factorization is all
//! that is needed.

use crate::error::{AbcError, Result};

/// Row-major symmetric matrix of order `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SymMatrix::zeros(n);
        for i in 0..n {
            *m.at_mut(i, i) = 1.0;
        }
        m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }

    /// Lower-triangular Cholesky factor L with A = L·Lᵀ. Pivots below a
    /// relative threshold of the largest diagonal entry are treated as
    /// numerically singular.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let n = self.n;
        let max_diag = (0..n).map(|i| self.at(i, i)).fold(0.0f64, f64::max);
        let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0f64; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.at(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= tol || !sum.is_finite() {
                        return Err(AbcError::DegenerateCovariance(format!(
                            "matrix not positive definite at pivot {i} (value {sum:e})"
                        )));
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(Cholesky { n, l })
    }
}

/// Cached Cholesky factor supporting solves and log-determinants.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// ln |A| of the factored matrix.
    pub fn log_det(&self) -> f64 {
        (0..self.n)
            .map(|i| 2.0 * self.l[i * self.n + i].ln())
            .sum()
    }

    /// Solve A·x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        // Forward: L·y = b
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * y[k];
            }
            y[i] = sum / self.l[i * n + i];
        }
        // Backward: Lᵀ·x = y
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= self.l[k * n + i] * x[k];
            }
            x[i] = sum / self.l[i * n + i];
        }
        x
    }

    /// L·z for the lower-triangular factor; maps standard-normal draws to
    /// draws with the factored covariance.
    pub fn lower_times(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(z.len(), n);
        (0..n)
            .map(|i| (0..=i).map(|k| self.l[i * n + k] * z[k]).sum())
            .collect()
    }

    /// Quadratic form xᵀ·A⁻¹·x.
    pub fn inv_quad(&self, x: &[f64]) -> f64 {
        let n = self.n;
        // Solve L·y = x, then the form is yᵀy.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut sum = x[i];
            for k in 0..i {
                sum -= self.l[i * n + k] * y[k];
            }
            y[i] = sum / self.l[i * n + i];
        }
        y.iter().map(|v| v * v).sum()
    }
}

/// Log-density of a multivariate normal with the given mean and covariance
/// factor, evaluated at `x`.
pub fn mvn_log_density(x: &[f64], mean: &[f64], chol: &Cholesky) -> f64 {
    let d = x.len();
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let quad = chol.inv_quad(&diff);
    -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + chol.log_det() + quad)
}
