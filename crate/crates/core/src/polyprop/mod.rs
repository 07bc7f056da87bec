//! Analysis of the 2x2 propagation matrix `K(y)` of a splitting method.
//!
//! One step of a method applied to the scalar oscillator `q' = w p`,
//! `p' = -w q` with `y = tau*w` maps `(q, p)` to `K(y) (q, p)`. Everything
//! here is a function of the four polynomial entries of `K`.

mod coeffs;
mod phase;
mod poly;

pub use coeffs::{ErrorCoefficients, Sample, StabilityReport};
pub(crate) use phase::golden_max;
pub use phase::{Analyzer, PhaseAmplitude};
pub use poly::{cos_taylor, sin_taylor, Parity, ParityPolynomial};

use crate::error::{Error, Result};
use crate::methods::SplittingMethod;

/// Coefficient magnitude beyond which composition is considered to have lost precision.
const OVERFLOW_LIMIT: f64 = 1e200;

/// Tolerance on the non-constant determinant coefficients.
pub const DET_TOLERANCE: f64 = 1e-12;

/// The polynomial matrix `[[k1, k2], [k3, k4]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationMatrix {
    pub k1: ParityPolynomial,
    pub k2: ParityPolynomial,
    pub k3: ParityPolynomial,
    pub k4: ParityPolynomial,
}

impl PropagationMatrix {
    /// Builds a matrix after checking the parity of each entry.
    pub fn new(k1: ParityPolynomial, k2: ParityPolynomial, k3: ParityPolynomial, k4: ParityPolynomial) -> Result<Self> {
        let checks =
            [(&k1, Parity::Even, "k1"), (&k2, Parity::Odd, "k2"), (&k3, Parity::Odd, "k3"), (&k4, Parity::Even, "k4")];
        for (poly, parity, name) in checks {
            if !poly.is_zero() && poly.parity() != parity {
                return Err(Error::Parity(format!("{name} must be {parity:?}")));
            }
        }
        let fix = |p: ParityPolynomial, parity| if p.is_zero() { ParityPolynomial::zero(parity) } else { p };
        Ok(PropagationMatrix {
            k1: fix(k1, Parity::Even),
            k2: fix(k2, Parity::Odd),
            k3: fix(k3, Parity::Odd),
            k4: fix(k4, Parity::Even),
        })
    }

    pub fn identity() -> Self {
        PropagationMatrix {
            k1: ParityPolynomial::one(),
            k2: ParityPolynomial::zero(Parity::Odd),
            k3: ParityPolynomial::zero(Parity::Odd),
            k4: ParityPolynomial::one(),
        }
    }

    /// Entries evaluated at `y`, row-major.
    pub fn eval(&self, y: f64) -> [[f64; 2]; 2] {
        [[self.k1.eval(y), self.k2.eval(y)], [self.k3.eval(y), self.k4.eval(y)]]
    }

    /// `k1*k4 - k2*k3` as a polynomial.
    pub fn determinant(&self) -> ParityPolynomial {
        &(&self.k1 * &self.k4) - &(&self.k2 * &self.k3)
    }

    /// Largest deviation of the determinant from 1, per coefficient, relative
    /// to the magnitude of the products that formed it.
    pub fn det_residual(&self) -> f64 {
        let det = self.determinant();
        let abs = |p: &ParityPolynomial| {
            ParityPolynomial::from_packed(p.parity(), p.packed().iter().map(|c| c.abs()).collect())
        };
        let scale_poly = &(&abs(&self.k1) * &abs(&self.k4)) + &(&abs(&self.k2) * &abs(&self.k3));
        let scale = scale_poly.max_abs_coeff().max(1.0);
        let deg = det.degree().unwrap_or(0);
        (0..=deg)
            .step_by(2)
            .map(|k| {
                let target = if k == 0 { 1.0 } else { 0.0 };
                (det.coeff(k) - target).abs()
            })
            .fold(0.0, f64::max)
            / scale
    }

    /// Half trace `p = (k1 + k4)/2`.
    pub fn stability_polynomial(&self) -> ParityPolynomial {
        (&self.k1 + &self.k4).scale(0.5)
    }

    /// `q = (k2 - k3)/2`.
    pub fn q_polynomial(&self) -> ParityPolynomial {
        (&self.k2 - &self.k3).scale(0.5)
    }

    /// `d = (k1 - k4)/2`.
    pub fn d_polynomial(&self) -> ParityPolynomial {
        (&self.k1 - &self.k4).scale(0.5)
    }

    /// `e = (k2 + k3)/2`.
    pub fn e_polynomial(&self) -> ParityPolynomial {
        (&self.k2 + &self.k3).scale(0.5)
    }

    /// Highest degree among the four entries.
    pub fn degree(&self) -> usize {
        [&self.k1, &self.k2, &self.k3, &self.k4].iter().filter_map(|p| p.degree()).max().unwrap_or(0)
    }

    /// Substitutes `y -> c*y` in every entry.
    pub fn rescale_argument(&self, c: f64) -> PropagationMatrix {
        PropagationMatrix {
            k1: self.k1.rescale_argument(c),
            k2: self.k2.rescale_argument(c),
            k3: self.k3.rescale_argument(c),
            k4: self.k4.rescale_argument(c),
        }
    }

    pub fn entries(&self) -> [&ParityPolynomial; 4] {
        [&self.k1, &self.k2, &self.k3, &self.k4]
    }
}

/// Product of the triangular factors of `method`, first stage rightmost.
pub fn compose_k(method: &SplittingMethod) -> Result<PropagationMatrix> {
    compose_coeffs(&method.a, &method.b)
}

/// `K = B(b_n) A(a_n) ... B(b_1) A(a_1)` with `A(a) = [[1, a y], [0, 1]]`
/// and `B(b) = [[1, 0], [-b y, 1]]`.
pub fn compose_coeffs(a: &[f64], b: &[f64]) -> Result<PropagationMatrix> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("coefficient lengths differ: {} vs {}", a.len(), b.len())));
    }
    if let Some(c) = a.iter().chain(b).find(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("coefficient {c}")));
    }
    let mut k = PropagationMatrix::identity();
    for (i, (&ai, &bi)) in a.iter().zip(b).enumerate() {
        if ai != 0.0 {
            k.k1 = &k.k1 + &k.k3.times_y(ai);
            k.k2 = &k.k2 + &k.k4.times_y(ai);
        }
        if bi != 0.0 {
            k.k3 = &k.k3 - &k.k1.times_y(bi);
            k.k4 = &k.k4 - &k.k2.times_y(bi);
        }
        let magnitude = k.entries().iter().map(|p| p.max_abs_coeff()).fold(0.0, f64::max);
        if !magnitude.is_finite() || magnitude > OVERFLOW_LIMIT {
            return Err(Error::Precision { stage: i + 1, detail: format!("coefficient magnitude {magnitude:e}") });
        }
    }
    let residual = k.det_residual();
    if residual > DET_TOLERANCE {
        return Err(Error::Precision { stage: a.len(), detail: format!("det K deviates from 1 by {residual:e}") });
    }
    Ok(k)
}

/// Stability threshold `y*` of `k`; `f64::INFINITY` when no instability is found up to `4m`.
pub fn stability_threshold(k: &PropagationMatrix) -> Result<f64> {
    Ok(Analyzer::new(k)?.y_star())
}

/// Largest `y` such that `|p| <= 1 + tol` on `[0, y]`, scanning up to `4m`.
pub fn practical_threshold(k: &PropagationMatrix, tol: f64) -> Result<f64> {
    let analyzer = Analyzer::new(k)?;
    Ok(analyzer.practical_threshold(tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(p: &ParityPolynomial) -> Vec<f64> {
        p.dense()
    }

    /// Independent oracle: multiply explicit 2x2 matrices of dense polynomials.
    fn oracle_compose(a: &[f64], b: &[f64]) -> [Vec<f64>; 4] {
        fn mul(x: &[Vec<f64>; 4], y: &[Vec<f64>; 4]) -> [Vec<f64>; 4] {
            let conv = |u: &Vec<f64>, v: &Vec<f64>| {
                let mut out = vec![0.0; u.len() + v.len() - 1];
                for (i, a) in u.iter().enumerate() {
                    for (j, b) in v.iter().enumerate() {
                        out[i + j] += a * b;
                    }
                }
                out
            };
            let add = |u: Vec<f64>, v: Vec<f64>| {
                let n = u.len().max(v.len());
                (0..n).map(|i| u.get(i).unwrap_or(&0.0) + v.get(i).unwrap_or(&0.0)).collect::<Vec<_>>()
            };
            [
                add(conv(&x[0], &y[0]), conv(&x[1], &y[2])),
                add(conv(&x[0], &y[1]), conv(&x[1], &y[3])),
                add(conv(&x[2], &y[0]), conv(&x[3], &y[2])),
                add(conv(&x[2], &y[1]), conv(&x[3], &y[3])),
            ]
        }
        let mut k = [vec![1.0], vec![0.0], vec![0.0], vec![1.0]];
        for (&ai, &bi) in a.iter().zip(b) {
            let fa = [vec![1.0], vec![0.0, ai], vec![0.0], vec![1.0]];
            let fb = [vec![1.0], vec![0.0], vec![0.0, -bi], vec![1.0]];
            k = mul(&fa, &k);
            k = mul(&fb, &k);
        }
        k
    }

    fn assert_poly_eq(got: &ParityPolynomial, want: &[f64]) {
        let g = dense(got);
        let n = g.len().max(want.len());
        for i in 0..n {
            let x = g.get(i).copied().unwrap_or(0.0);
            let y = want.get(i).copied().unwrap_or(0.0);
            assert!((x - y).abs() < 1e-14, "coefficient {i}: {x} vs {y}");
        }
    }

    #[test]
    fn leapfrog_matrix() {
        let k = compose_coeffs(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_poly_eq(&k.k1, &[1.0, 0.0, -1.0]);
        assert_poly_eq(&k.k2, &[0.0, 1.0]);
        assert_poly_eq(&k.k3, &[0.0, -1.0]);
        assert_poly_eq(&k.k4, &[1.0]);
    }

    #[test]
    fn adjoint_leapfrog_matrix() {
        let k = compose_coeffs(&[1.0], &[1.0]).unwrap();
        assert_poly_eq(&k.k1, &[1.0]);
        assert_poly_eq(&k.k2, &[0.0, 1.0]);
        assert_poly_eq(&k.k3, &[0.0, -1.0]);
        assert_poly_eq(&k.k4, &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn zero_coefficients_give_identity() {
        let k = compose_coeffs(&[0.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(k, PropagationMatrix::identity());
    }

    #[test]
    fn strang_matrix_matches_oracle() {
        let (a, b) = ([0.5, 0.5], [1.0, 0.0]);
        let k = compose_coeffs(&a, &b).unwrap();
        assert_poly_eq(&k.k1, &[1.0, 0.0, -0.5]);
        assert_poly_eq(&k.k2, &[0.0, 1.0, 0.0, -0.25]);
        assert_poly_eq(&k.k3, &[0.0, -1.0]);
        assert_poly_eq(&k.k4, &[1.0, 0.0, -0.5]);
        let o = oracle_compose(&a, &b);
        for (got, want) in k.entries().iter().zip(o.iter()) {
            assert_poly_eq(got, want);
        }
    }

    #[test]
    fn random_compositions_match_oracle() {
        let a = [0.3, -1.2, 0.7, 1.9];
        let b = [1.1, 0.4, -0.6, 0.2];
        let k = compose_coeffs(&a, &b).unwrap();
        let o = oracle_compose(&a, &b);
        for (got, want) in k.entries().iter().zip(o.iter()) {
            let g = dense(got);
            for (i, w) in want.iter().enumerate() {
                assert!((g.get(i).unwrap_or(&0.0) - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stability_and_q_polynomials() {
        let lf = compose_coeffs(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert_poly_eq(&lf.stability_polynomial(), &[1.0, 0.0, -0.5]);
        assert_poly_eq(&lf.q_polynomial(), &[0.0, 1.0]);
        let st = compose_coeffs(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert_poly_eq(&st.stability_polynomial(), &[1.0, 0.0, -0.5]);
        assert_poly_eq(&st.q_polynomial(), &[0.0, 1.0, 0.0, -0.125]);
        let id = PropagationMatrix::identity();
        assert_poly_eq(&id.stability_polynomial(), &[1.0]);
        assert!(id.q_polynomial().is_zero());
    }

    #[test]
    fn overflow_reports_stage() {
        let a = vec![1e60; 6];
        match compose_coeffs(&a, &a) {
            Err(Error::Precision { stage, .. }) => assert!(stage >= 2 && stage <= 6),
            other => panic!("expected precision error, got {other:?}"),
        }
    }

    #[test]
    fn parity_is_enforced() {
        let odd = ParityPolynomial::monomial(1.0, 1);
        let r = PropagationMatrix::new(odd.clone(), odd.clone(), odd.clone(), ParityPolynomial::one());
        assert!(matches!(r, Err(Error::Parity(_))));
    }
}
