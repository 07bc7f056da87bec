//! Reference solutions `exp(-itH) u0`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{propagate_steps, Checkpoints, PropagateOptions};
use crate::error::{Error, Result};
use crate::methods::builtin;
use crate::operator::{HamiltonianOperator, NormConvention, DENSE_LIMIT};

/// Agreement required between successive extrapolated fallback answers.
pub const RICHARDSON_TOL: f64 = 1e-12;
const RICHARDSON_LEVELS: usize = 14;

/// Exact propagator: spectral for moderate dimensions, otherwise Strang
/// steps with Richardson extrapolation in `tau^2`.
pub enum ReferencePropagator<'a> {
    Spectral { vals: Vec<f64>, vecs: DMatrix<f64> },
    Extrapolated { op: &'a HamiltonianOperator },
}

impl<'a> ReferencePropagator<'a> {
    pub fn new(op: &'a HamiltonianOperator) -> Result<Self> {
        if op.dim() <= DENSE_LIMIT {
            let (vals, vecs) = op.eigen_decomposition()?;
            Ok(ReferencePropagator::Spectral { vals, vecs })
        } else {
            Ok(ReferencePropagator::Extrapolated { op })
        }
    }

    pub fn at(&self, u0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        match self {
            ReferencePropagator::Spectral { vals, vecs } => {
                if u0.len() != vals.len() {
                    return Err(Error::InvalidInput("state dimension mismatch".into()));
                }
                let re = vecs.tr_mul(&DVector::from_iterator(u0.len(), u0.iter().map(|z| z.re)));
                let im = vecs.tr_mul(&DVector::from_iterator(u0.len(), u0.iter().map(|z| z.im)));
                let mut cr = DVector::zeros(u0.len());
                let mut ci = DVector::zeros(u0.len());
                for (j, &l) in vals.iter().enumerate() {
                    let c = Complex64::new(re[j], im[j]) * Complex64::from_polar(1.0, -t * l);
                    cr[j] = c.re;
                    ci[j] = c.im;
                }
                let ur = vecs * cr;
                let ui = vecs * ci;
                Ok(ur.iter().zip(ui.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect())
            }
            ReferencePropagator::Extrapolated { op } => extrapolated(op, u0, t),
        }
    }
}

pub fn reference_propagate(op: &HamiltonianOperator, u0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    ReferencePropagator::new(op)?.at(u0, t)
}

/// Romberg table over Strang runs with `n0 2^i` steps, `tau0 rho <= 1`.
fn extrapolated(op: &HamiltonianOperator, u0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    if t == 0.0 {
        return Ok(u0.to_vec());
    }
    let strang = builtin("strang")?;
    let opts = PropagateOptions { checkpoints: Checkpoints::Final, allow_unstable: false, transformed_norm: false };
    let n0 = (t.abs() * op.rho_bound()).ceil().max(1.0) as usize;
    let scale = NormConvention::Euclidean.norm(u0).max(f64::MIN_POSITIVE);
    let mut prev_row: Vec<Vec<Complex64>> = Vec::new();
    for level in 0..RICHARDSON_LEVELS {
        let n = n0 << level;
        let run = propagate_steps(&strang, op, u0, t / n as f64, n, &opts)?;
        let mut row = vec![run.final_state().to_vec()];
        for j in 1..=level {
            let f = 1.0 / (4f64.powi(j as i32) - 1.0);
            let next: Vec<Complex64> = row[j - 1].iter().zip(&prev_row[j - 1]).map(|(a, b)| a + (a - b) * f).collect();
            row.push(next);
        }
        if level > 0 {
            let diff = super::state_error(&row[level], &prev_row[level - 1], NormConvention::Euclidean);
            if diff <= RICHARDSON_TOL * scale {
                return Ok(row.pop().expect("row is non-empty"));
            }
        }
        prev_row = row;
    }
    Err(Error::NoConvergence(format!("Richardson extrapolation did not reach {RICHARDSON_TOL}")))
}
