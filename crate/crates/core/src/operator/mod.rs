//! Matrix-free real-symmetric Hamiltonians, spectral-radius estimates and `H`-power norms.

mod config;
mod fourier;
mod tridiag;

pub use config::{InitialState, OperatorSpec, ProblemConfig};
pub use fourier::{gaussian_state, poschl_teller_bound_states, FourierOperator, GridSpec, Potential};
pub use tridiag::TridiagonalOperator;

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Seed of the power-iteration start vector.
pub const POWER_SEED: u64 = 42;
/// Iteration cap of the power method.
pub const POWER_MAX_ITER: usize = 10_000;
/// Safety factor applied to the raw spectral-radius estimate.
pub const RHO_SAFETY: f64 = 1.01;
/// Largest dimension for which dense eigendecompositions are formed.
pub const DENSE_LIMIT: usize = 4096;

/// Which vector norm to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize)]
pub enum NormConvention {
    /// `||u||^2 = sum |u_j|^2 / N`.
    #[default]
    Discrete,
    /// `||u||^2 = sum |u_j|^2`.
    Euclidean,
}

impl NormConvention {
    pub fn norm(self, u: &[Complex64]) -> f64 {
        let ss: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        match self {
            NormConvention::Discrete => (ss / u.len().max(1) as f64).sqrt(),
            NormConvention::Euclidean => ss.sqrt(),
        }
    }

    pub fn norm_real(self, x: &[f64]) -> f64 {
        let ss: f64 = x.iter().map(|v| v * v).sum();
        match self {
            NormConvention::Discrete => (ss / x.len().max(1) as f64).sqrt(),
            NormConvention::Euclidean => ss.sqrt(),
        }
    }
}

/// Result of the power method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralRadius {
    /// Raw Rayleigh-quotient estimate.
    pub rho: f64,
    /// `rho` inflated by the safety factor; used for step-size selection.
    pub bound: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    Fourier(FourierOperator),
    Tridiagonal(TridiagonalOperator),
    Dense(DMatrix<f64>),
    Diagonal(Vec<f64>),
}

/// A real-symmetric `H - shift*I` acting on real or complex vectors.
#[derive(Debug)]
pub struct HamiltonianOperator {
    kind: OperatorKind,
    shift: f64,
    rho: OnceLock<SpectralRadius>,
}

impl Clone for HamiltonianOperator {
    fn clone(&self) -> Self {
        let rho = OnceLock::new();
        if let Some(r) = self.rho.get() {
            let _ = rho.set(*r);
        }
        HamiltonianOperator { kind: self.kind.clone(), shift: self.shift, rho }
    }
}

impl HamiltonianOperator {
    pub fn new(kind: OperatorKind) -> Self {
        HamiltonianOperator { kind, shift: 0.0, rho: OnceLock::new() }
    }

    pub fn fourier(grid: &GridSpec) -> Result<Self> {
        Ok(Self::new(OperatorKind::Fourier(FourierOperator::new(grid)?)))
    }

    pub fn tridiagonal(omega: f64, n: usize) -> Result<Self> {
        Ok(Self::new(OperatorKind::Tridiagonal(TridiagonalOperator::new(omega, n)?)))
    }

    /// Dense symmetric matrix; asymmetry beyond round-off is rejected.
    pub fn dense(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidInput("dense operator must be square and non-empty".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).amax() > 1e-14 * scale {
            return Err(Error::InvalidInput("dense operator is not symmetric".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense operator entry".into()));
        }
        Ok(Self::new(OperatorKind::Dense(matrix)))
    }

    pub fn diagonal(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("diagonal operator must be non-empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagonal entry".into()));
        }
        Ok(Self::new(OperatorKind::Diagonal(values)))
    }

    /// Same operator minus `shift*I`.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self.rho = OnceLock::new();
        self
    }

    /// Installs an exactly known spectral radius in place of the power-method estimate.
    pub fn with_known_spectral_radius(self, rho: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(SpectralRadius { rho, bound: rho, converged: true, iterations: 0 });
        HamiltonianOperator { rho: cell, ..self }
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            OperatorKind::Fourier(f) => f.dim(),
            OperatorKind::Tridiagonal(t) => t.dim(),
            OperatorKind::Dense(m) => m.nrows(),
            OperatorKind::Diagonal(d) => d.len(),
        }
    }

    /// `out = (H - shift) x` for real `x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        match &self.kind {
            OperatorKind::Fourier(f) => f.apply_real(x, out),
            OperatorKind::Tridiagonal(t) => t.apply(x, out),
            OperatorKind::Dense(m) => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = m.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            OperatorKind::Diagonal(d) => {
                for ((o, &v), &di) in out.iter_mut().zip(x).zip(d) {
                    *o = di * v;
                }
            }
        }
        if self.shift != 0.0 {
            for (o, &v) in out.iter_mut().zip(x) {
                *o -= self.shift * v;
            }
        }
    }

    /// `out = (H - shift) x` for complex `x`.
    pub fn apply_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        if let OperatorKind::Fourier(f) = &self.kind {
            f.apply_complex(x, out);
            if self.shift != 0.0 {
                for (o, &v) in out.iter_mut().zip(x) {
                    *o -= v * self.shift;
                }
            }
            return;
        }
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let mut hre = vec![0.0; re.len()];
        let mut him = vec![0.0; im.len()];
        self.apply(&re, &mut hre);
        self.apply(&im, &mut him);
        for (o, (r, i)) in out.iter_mut().zip(hre.into_iter().zip(him)) {
            *o = Complex64::new(r, i);
        }
    }

    /// Power-method estimate of `rho(H - shift)`, computed once with tolerance 1e-9.
    pub fn spectral_radius_estimate(&self) -> SpectralRadius {
        *self.rho.get_or_init(|| spectral_radius(self, 1e-9))
    }

    /// Upper estimate of `rho(H - shift)` used for step sizes and bounds.
    pub fn rho_bound(&self) -> f64 {
        self.spectral_radius_estimate().bound
    }

    /// Dense matrix of `H - shift`, built column by column.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            m.set_column(j, &nalgebra::DVector::from_column_slice(&col));
            e[j] = 0.0;
        }
        // Symmetrize away round-off from the transforms.
        (&m + m.transpose()) * 0.5
    }

    /// Eigenvalues and orthonormal eigenvectors (columns) of `H - shift`.
    pub fn eigen_decomposition(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(Error::InvalidInput(format!("dimension {n} exceeds the dense limit {DENSE_LIMIT}")));
        }
        let (vals, vecs) = match &self.kind {
            OperatorKind::Tridiagonal(t) => t.eigen_decomposition(),
            OperatorKind::Diagonal(d) => (d.clone(), DMatrix::identity(n, n)),
            _ => {
                // to_dense already carries the shift.
                let eig = SymmetricEigen::new(self.to_dense());
                return Ok((eig.eigenvalues.iter().cloned().collect(), eig.eigenvectors));
            }
        };
        Ok((vals.into_iter().map(|v| v - self.shift).collect(), vecs))
    }
}

/// Power iteration on `H^2` from a fixed-seed start; the estimate is `sqrt` of
/// the Rayleigh quotient, stopping when its relative change drops below `tol`.
pub fn spectral_radius(op: &HamiltonianOperator, tol: f64) -> SpectralRadius {
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut hx = vec![0.0; n];
    let mut h2x = vec![0.0; n];
    let mut prev = 0.0;
    let mut lambda = 0.0;
    for it in 1..=POWER_MAX_ITER {
        op.apply(&x, &mut hx);
        // Rayleigh quotient of H^2 at the unit vector x.
        lambda = hx.iter().map(|a| a * a).sum::<f64>();
        op.apply(&hx, &mut h2x);
        let nn = norm(&h2x);
        if nn == 0.0 {
            return SpectralRadius { rho: 0.0, bound: 0.0, converged: true, iterations: it };
        }
        if it > 1 && (lambda - prev).abs() <= tol * lambda {
            let rho = lambda.sqrt();
            return SpectralRadius { rho, bound: RHO_SAFETY * rho, converged: true, iterations: it };
        }
        prev = lambda;
        for (xi, v) in x.iter_mut().zip(&h2x) {
            *xi = v / nn;
        }
    }
    let rho = lambda.sqrt();
    SpectralRadius { rho, bound: RHO_SAFETY * rho, converged: false, iterations: POWER_MAX_ITER }
}

/// `||H^k u||` under the given convention.
pub fn h_power_norm(op: &HamiltonianOperator, u: &[Complex64], k: usize, conv: NormConvention) -> f64 {
    let mut cur = u.to_vec();
    let mut next = vec![Complex64::new(0.0, 0.0); u.len()];
    for _ in 0..k {
        op.apply_complex(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    conv.norm(&cur)
}

/// Uniform random complex vector of unit Euclidean norm.
pub fn random_unit_vector(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let nv = NormConvention::Euclidean.norm(&v);
    v.iter_mut().for_each(|z| *z /= nv);
    v
}

/// Random symmetric matrix with entries uniform in `[-1, 1]`.
pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = rng.random_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
