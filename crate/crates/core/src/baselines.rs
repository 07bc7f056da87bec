//! Chebyshev and Lanczos approximations of `exp(-itH) u0`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::operator::{HamiltonianOperator, NormConvention};

/// Chebyshev coefficients below this magnitude end the expansion early.
pub const CHEBYSHEV_CUTOFF: f64 = 1e-18;
/// Relative size of `beta_j` treated as an invariant subspace.
pub const BREAKDOWN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpmResult {
    pub state: Vec<Complex64>,
    /// Complex `H`-applications spent.
    pub h_applies: usize,
    pub warnings: Vec<String>,
}

/// Degree and spectral interval of a Chebyshev expansion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChebyshevPlan {
    pub degree: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ChebyshevPlan {
    /// Interval `[-rho, rho]` from the operator's spectral-radius estimate.
    pub fn estimated(op: &HamiltonianOperator, degree: usize) -> Self {
        let r = op.rho_bound();
        ChebyshevPlan { degree, lambda_min: -r, lambda_max: r }
    }

    pub fn shift(&self) -> f64 {
        0.5 * (self.lambda_min + self.lambda_max)
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.lambda_max - self.lambda_min)
    }
}

/// `J_0(x), ..., J_n(x)` by downward recurrence normalized with
/// `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_sequence(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = n.max(ax.ceil() as usize);
    let start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    let start = start + start % 2;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        // J_{k-1} = (2k/x) J_k - J_{k+1}
        let j_prev = 2.0 * k as f64 / ax * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        let idx = k - 1;
        if idx <= n {
            out[idx] = j_cur;
        }
        if idx % 2 == 0 {
            norm += if idx == 0 { j_cur } else { 2.0 * j_cur };
        }
        if j_cur.abs() > 1e250 {
            let s = 1e-250;
            j_cur *= s;
            j_next *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    out.iter_mut().for_each(|v| *v /= norm);
    if x < 0.0 {
        out.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
    }
    out
}

/// Chebyshev expansion on the estimated interval `[-rho, rho]`.
pub fn chebyshev_expm(op: &HamiltonianOperator, u0: &[Complex64], t: f64, m: usize) -> Result<ExpmResult> {
    chebyshev_expm_with(op, u0, t, &ChebyshevPlan::estimated(op, m))
}

/// `exp(-i t sigma) sum_k c_k T_k((H - sigma)/w) u0`, `c_k = (2 - delta_k0) (-i)^k J_k(t w)`.
pub fn chebyshev_expm_with(
    op: &HamiltonianOperator,
    u0: &[Complex64],
    t: f64,
    plan: &ChebyshevPlan,
) -> Result<ExpmResult> {
    check_state(op, u0)?;
    let (sigma, w) = (plan.shift(), plan.half_width());
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::InvalidInput(format!(
            "invalid spectral interval [{}, {}]",
            plan.lambda_min, plan.lambda_max
        )));
    }
    if w == 0.0 {
        // Single-point spectrum: H = sigma on the interval.
        let phase = Complex64::from_polar(1.0, -t * sigma);
        return Ok(ExpmResult { state: u0.iter().map(|z| z * phase).collect(), h_applies: 0, warnings: vec![] });
    }
    let m = plan.degree;
    let bessel = bessel_j_sequence(m, t * w);
    let coeff = |k: usize| -> Complex64 {
        let ik =
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0), Complex64::new(-1.0, 0.0), Complex64::new(0.0, 1.0)];
        ik[k % 4] * bessel[k] * if k == 0 { 1.0 } else { 2.0 }
    };
    let n = u0.len();
    let scaled = |x: &[Complex64], out: &mut [Complex64]| {
        op.apply_complex(x, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = (*o - xi * sigma) / w;
        }
    };
    let u_norm = NormConvention::Euclidean.norm(u0);
    let mut warnings = Vec::new();
    let mut acc: Vec<Complex64> = u0.iter().map(|z| z * coeff(0)).collect();
    let mut prev = u0.to_vec();
    let mut cur = vec![Complex64::default(); n];
    let mut tmp = vec![Complex64::default(); n];
    let mut applies = 0;
    if m >= 1 {
        scaled(u0, &mut cur);
        applies += 1;
        let c = coeff(1);
        acc.iter_mut().zip(&cur).for_each(|(a, v)| *a += v * c);
    }
    let mut blown = false;
    for k in 2..=m {
        // Past the turning point the coefficients only shrink.
        if k as f64 > (t * w).abs() && bessel[k].abs() < CHEBYSHEV_CUTOFF {
            break;
        }
        scaled(&cur, &mut tmp);
        applies += 1;
        for (tv, p) in tmp.iter_mut().zip(&prev) {
            *tv = *tv * 2.0 - p;
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut tmp);
        let c = coeff(k);
        acc.iter_mut().zip(&cur).for_each(|(a, v)| *a += v * c);
        if !blown && NormConvention::Euclidean.norm(&cur) > 1e3 * u_norm {
            blown = true;
            warnings.push(format!("T_{k} grew beyond 1e3 ||u0||: spectrum exceeds the interval"));
        }
    }
    let phase = Complex64::from_polar(1.0, -t * sigma);
    acc.iter_mut().for_each(|z| *z *= phase);
    Ok(ExpmResult { state: acc, h_applies: applies, warnings })
}

/// Orthonormal Krylov basis and the projected tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct KrylovBasis {
    pub vectors: Vec<Vec<Complex64>>,
    pub alpha: Vec<f64>,
    /// `beta[j]` couples vectors `j` and `j + 1`.
    pub beta: Vec<f64>,
    pub h_applies: usize,
    pub breakdown: bool,
}

impl KrylovBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// `max |<v_i, v_j> - delta_ij|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, vi) in self.vectors.iter().enumerate() {
            for (j, vj) in self.vectors.iter().enumerate() {
                let d = inner(vi, vj) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    pub fn projected(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                self.alpha[i]
            } else if i + 1 == j {
                self.beta[i]
            } else if j + 1 == i {
                self.beta[j]
            } else {
                0.0
            }
        })
    }
}

/// `<x, y> = sum conj(x_i) y_i`.
fn inner(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

fn check_state(op: &HamiltonianOperator, u0: &[Complex64]) -> Result<()> {
    if u0.len() != op.dim() {
        return Err(Error::InvalidInput(format!("state has {} entries, operator dimension is {}", u0.len(), op.dim())));
    }
    if u0.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    Ok(())
}

/// `m`-step Lanczos from `u0 / ||u0||` with two passes of full re-orthogonalization.
pub fn lanczos_basis(op: &HamiltonianOperator, u0: &[Complex64], m: usize) -> Result<KrylovBasis> {
    check_state(op, u0)?;
    let n = u0.len();
    if m == 0 || m > n {
        return Err(Error::InvalidInput(format!("Krylov dimension must be in 1..={n}, got {m}")));
    }
    let nu = NormConvention::Euclidean.norm(u0);
    if nu == 0.0 {
        return Err(Error::InvalidInput("Lanczos needs a nonzero start vector".into()));
    }
    let mut basis = KrylovBasis {
        vectors: vec![u0.iter().map(|z| z / nu).collect()],
        alpha: vec![],
        beta: vec![],
        h_applies: 0,
        breakdown: false,
    };
    let mut w = vec![Complex64::default(); n];
    for j in 0..m {
        op.apply_complex(&basis.vectors[j], &mut w);
        basis.h_applies += 1;
        let alpha = inner(&basis.vectors[j], &w).re;
        basis.alpha.push(alpha);
        if j + 1 == m {
            break;
        }
        for (wi, vi) in w.iter_mut().zip(&basis.vectors[j]) {
            *wi -= vi * alpha;
        }
        if j > 0 {
            let b = basis.beta[j - 1];
            for (wi, vi) in w.iter_mut().zip(&basis.vectors[j - 1]) {
                *wi -= vi * b;
            }
        }
        for _ in 0..2 {
            for v in &basis.vectors {
                let c = inner(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= vi * c;
                }
            }
        }
        let beta = NormConvention::Euclidean.norm(&w);
        let scale = alpha.abs() + basis.beta.last().copied().unwrap_or(0.0).abs() + beta;
        if beta <= BREAKDOWN_TOL * scale.max(f64::MIN_POSITIVE) {
            basis.breakdown = true;
            break;
        }
        basis.beta.push(beta);
        basis.vectors.push(w.iter().map(|z| z / beta).collect());
    }
    Ok(basis)
}

/// `||u0|| V exp(-i t T_m) e_1`.
pub fn lanczos_expm(op: &HamiltonianOperator, u0: &[Complex64], t: f64, m: usize) -> Result<ExpmResult> {
    check_state(op, u0)?;
    let nu = NormConvention::Euclidean.norm(u0);
    if nu == 0.0 {
        return Ok(ExpmResult { state: u0.to_vec(), h_applies: 0, warnings: vec![] });
    }
    let basis = lanczos_basis(op, u0, m)?;
    let eig = SymmetricEigen::new(basis.projected());
    let k = basis.dim();
    // y = Q exp(-i t Lambda) Q^T e_1
    let mut y = vec![Complex64::default(); k];
    for (l, &lam) in eig.eigenvalues.iter().enumerate() {
        let c = Complex64::from_polar(eig.eigenvectors[(0, l)], -t * lam);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += c * eig.eigenvectors[(i, l)];
        }
    }
    let mut state = vec![Complex64::default(); u0.len()];
    for (v, &yj) in basis.vectors.iter().zip(&y) {
        for (s, vi) in state.iter_mut().zip(v) {
            *s += vi * yj * nu;
        }
    }
    let mut warnings = Vec::new();
    if basis.breakdown {
        warnings.push(format!("invariant subspace of dimension {k} reached"));
    }
    Ok(ExpmResult { state, h_applies: basis.h_applies, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::random_unit_vector;
    use crate::propagate::{reference_propagate, state_error};
    use std::f64::consts::PI;

    /// `J_k(x) = (1/pi) int_0^pi cos(k s - x sin s) ds` by the trapezoid rule,
    /// spectrally accurate for this periodic integrand.
    fn bessel_quadrature(k: usize, x: f64) -> f64 {
        let n = 2000;
        let h = PI / n as f64;
        let f = |s: f64| (k as f64 * s - x * s.sin()).cos();
        let mut acc = 0.5 * (f(0.0) + f(PI));
        for i in 1..n {
            acc += f(i as f64 * h);
        }
        acc * h / PI
    }

    #[test]
    fn bessel_matches_integral_representation() {
        for &x in &[0.3, 1.0, 7.5, 15.0, 40.0, -3.0] {
            let seq = bessel_j_sequence(60, x);
            for k in [0, 1, 2, 5, 14, 30, 59] {
                let q = bessel_quadrature(k, x);
                assert!((seq[k] - q).abs() < 1e-13, "J_{k}({x}) = {} vs {q}", seq[k]);
            }
        }
    }

    #[test]
    fn zero_operator_returns_input() {
        let op = HamiltonianOperator::diagonal(vec![0.0; 4]).unwrap();
        let u0 = random_unit_vector(4, 1);
        for m in [0, 1, 5] {
            let r = chebyshev_expm(&op, &u0, 2.0, m).unwrap();
            assert_eq!(r.state, u0);
        }
    }

    #[test]
    fn scalar_converges_past_theta_plus_twenty() {
        // The Bessel tail needs a margin growing slowly with theta0.
        for (theta0, m) in [(5.0, 25), (12.0, 37)] {
            let op = HamiltonianOperator::diagonal(vec![theta0]).unwrap();
            let u0 = vec![Complex64::new(1.0, 0.0)];
            let r = chebyshev_expm(&op, &u0, 1.0, m).unwrap();
            assert!((r.state[0] - Complex64::from_polar(1.0, -theta0)).norm() < 1e-12, "theta0 = {theta0}");
        }
    }

    #[test]
    fn chebyshev_matches_reference_at_high_degree() {
        let op = HamiltonianOperator::tridiagonal(15.0, 200).unwrap().with_shift(15.0);
        let u0 = random_unit_vector(200, 42);
        let exact = reference_propagate(&op, &u0, 1.0).unwrap();
        let r = chebyshev_expm(&op, &u0, 1.0, 80).unwrap();
        assert!(state_error(&r.state, &exact, NormConvention::Euclidean) < 1e-10);
        assert!(r.h_applies <= 80);
    }

    #[test]
    fn lanczos_full_space_is_exact_and_unitary() {
        let op = HamiltonianOperator::tridiagonal(3.0, 24).unwrap();
        let u0 = random_unit_vector(24, 7);
        let exact = reference_propagate(&op, &u0, 2.0).unwrap();
        let r = lanczos_expm(&op, &u0, 2.0, 24).unwrap();
        assert!(state_error(&r.state, &exact, NormConvention::Euclidean) < 1e-10);
        for m in [3, 10] {
            let r = lanczos_expm(&op, &u0, 2.0, m).unwrap();
            assert!((NormConvention::Euclidean.norm(&r.state) - 1.0).abs() < 1e-12);
        }
        let basis = lanczos_basis(&op, &u0, 24).unwrap();
        assert!(basis.orthonormality_defect() < 1e-8);
    }

    #[test]
    fn eigenvector_start_breaks_down_happily() {
        let op = HamiltonianOperator::tridiagonal(2.0, 10).unwrap();
        let (vals, vecs) = op.eigen_decomposition().unwrap();
        let u0: Vec<Complex64> = vecs.column(3).iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let r = lanczos_expm(&op, &u0, 1.3, 5).unwrap();
        assert_eq!(r.h_applies, 1);
        for (z, z0) in r.state.iter().zip(&u0) {
            assert!((z - z0 * Complex64::from_polar(1.0, -1.3 * vals[3])).norm() < 1e-12);
        }
    }
}
