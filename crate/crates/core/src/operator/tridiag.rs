//! `(omega/2) tridiag(-1, 2, -1)` with closed-form eigenpairs.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TridiagonalOperator {
    omega: f64,
    n: usize,
}

impl TridiagonalOperator {
    pub fn new(omega: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("tridiagonal operator needs N >= 2, got {n}")));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
        }
        Ok(TridiagonalOperator { omega, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let h = 0.5 * self.omega;
        let n = self.n;
        out[0] = h * (2.0 * x[0] - x[1]);
        for i in 1..n - 1 {
            out[i] = h * (2.0 * x[i] - x[i - 1] - x[i + 1]);
        }
        out[n - 1] = h * (2.0 * x[n - 1] - x[n - 2]);
    }

    /// `lambda_k = omega (1 - cos(k pi / (N+1)))`, `k = 1..N`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let np1 = (self.n + 1) as f64;
        (1..=self.n).map(|k| self.omega * (1.0 - (k as f64 * PI / np1).cos())).collect()
    }

    /// Eigenvalues with sine eigenvectors `sqrt(2/(N+1)) sin(j k pi/(N+1))` as columns.
    pub fn eigen_decomposition(&self) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.n;
        let np1 = (n + 1) as f64;
        let c = (2.0 / np1).sqrt();
        let vecs = DMatrix::from_fn(n, n, |j, k| c * (((j + 1) * (k + 1)) as f64 * PI / np1).sin());
        (self.eigenvalues(), vecs)
    }
}
