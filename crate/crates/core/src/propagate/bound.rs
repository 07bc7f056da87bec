//! A-priori error bounds in terms of `mu_k`, `nu_k` and `||H^k u0||`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::methods::SplittingMethod;
use crate::operator::{h_power_norm, HamiltonianOperator, NormConvention};
use crate::polyprop::{compose_k, Analyzer};

/// `(t mu_k ||u0||_{k+1} + nu_k ||u0||_k) / rho^k` with Euclidean norms.
///
/// `rho` may be any upper estimate of the spectral radius as long as
/// `theta = tau rho`: `mu_k(theta)/theta^k` and `nu_k(theta)/theta^k` are
/// nondecreasing in `theta`, so the bound stays valid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AprioriBound {
    pub k: usize,
    pub theta: f64,
    pub rho: f64,
    pub mu_k: f64,
    pub nu_k: f64,
    pub norm_k: f64,
    pub norm_k1: f64,
    pub warnings: Vec<String>,
}

/// `c * x`, with `0 * inf = 0` so that a zero state gives a zero bound.
fn weighted(c: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        c * x
    }
}

impl AprioriBound {
    pub fn bound(&self, t: f64) -> f64 {
        let scale = self.rho.powi(self.k as i32);
        (weighted(t * self.mu_k, self.norm_k1) + weighted(self.nu_k, self.norm_k)) / scale
    }

    /// Fixed-`H` estimate for any step `tau <= theta / rho`, scaling as `tau^k`.
    pub fn bound_small_tau(&self, t: f64, tau: f64) -> f64 {
        let tk = self.theta.powi(self.k as i32);
        let lead = weighted(t * self.mu_k / tk, self.norm_k1) + weighted(self.nu_k / tk, self.norm_k);
        lead * tau.powi(self.k as i32)
    }
}

/// Bound for steps with `tau rho = theta`, `rho` the operator's estimate.
pub fn apriori_bound(
    method: &SplittingMethod,
    op: &HamiltonianOperator,
    u0: &[Complex64],
    k: usize,
    theta: f64,
) -> Result<AprioriBound> {
    let an = Analyzer::new(&compose_k(method)?)?;
    apriori_bound_with(&an, op, u0, k, theta)
}

/// As [`apriori_bound`] with a prebuilt analyzer.
pub fn apriori_bound_with(
    an: &Analyzer,
    op: &HamiltonianOperator,
    u0: &[Complex64],
    k: usize,
    theta: f64,
) -> Result<AprioriBound> {
    if !(theta > 0.0) {
        return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
    }
    let coeffs = an.error_coefficients(theta, &[k])?;
    Ok(AprioriBound {
        k,
        theta,
        rho: op.rho_bound(),
        mu_k: coeffs.mu[&k],
        nu_k: coeffs.nu[&k],
        norm_k: h_power_norm(op, u0, k, NormConvention::Euclidean),
        norm_k1: h_power_norm(op, u0, k + 1, NormConvention::Euclidean),
        warnings: coeffs.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::builtin;

    #[test]
    fn scalar_leapfrog_closed_form() {
        let lf = builtin("leapfrog").unwrap();
        let op = HamiltonianOperator::diagonal(vec![1.0]).unwrap().with_known_spectral_radius(1.0);
        let u0 = vec![Complex64::new(1.0, 0.0)];
        let b = apriori_bound(&lf, &op, &u0, 0, 0.5).unwrap();
        let mu = 2.0 * 0.25f64.asin() - 0.5;
        assert!((mu - 0.005_360_5).abs() < 1e-7);
        // nu_0(0.5) = ||E(0.5)|| since ||E|| grows on (0, 0.5]; E from the closed forms.
        let y: f64 = 0.5;
        let g = 2.0 / (4.0 - y * y).sqrt();
        let e = -y / (4.0 - y * y).sqrt();
        let m = nalgebra::Matrix2::new(e, g - 1.0, 1.0 - (1.0 + e * e) / g, -e);
        let nu = m.singular_values().max();
        let expect = 20.0 * mu + nu;
        assert!((b.bound(10.0) - expect).abs() < 1e-9 * expect, "{} vs {expect}", b.bound(10.0));
    }

    #[test]
    fn zero_state_has_zero_bound() {
        let lf = builtin("leapfrog").unwrap();
        let op = HamiltonianOperator::diagonal(vec![1.0, 2.0]).unwrap();
        let u0 = vec![Complex64::default(); 2];
        let b = apriori_bound(&lf, &op, &u0, 5, 0.5).unwrap();
        assert!(!b.warnings.is_empty());
        assert_eq!(b.bound(100.0), 0.0);
    }

    #[test]
    fn bound_is_nondecreasing_in_t() {
        let st = builtin("strang").unwrap();
        let op = HamiltonianOperator::diagonal(vec![0.5, 1.0, 2.0]).unwrap();
        let u0 = crate::operator::random_unit_vector(3, 1);
        let b = apriori_bound(&st, &op, &u0, 2, 1.0).unwrap();
        let vals: Vec<f64> = (0..10).map(|i| b.bound(i as f64)).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
        let tau = b.theta / b.rho;
        assert!((b.bound_small_tau(3.0, tau) - b.bound(3.0)).abs() < 1e-12 * b.bound(3.0));
    }
}
