//! Even/odd real polynomials in the monomial basis.

use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_degree(k: usize) -> Parity {
        if k % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn times(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Whether `y^k` has this parity.
    pub fn admits(self, k: usize) -> bool {
        Parity::of_degree(k) == self
    }
}

/// Polynomial with a fixed parity.
///
/// Only powers of the matching parity are stored: `packed[j]` is the
/// coefficient of `y^(2j)` for even polynomials and of `y^(2j+1)` for odd ones.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityPolynomial {
    parity: Parity,
    packed: Vec<f64>,
}

impl ParityPolynomial {
    pub fn zero(parity: Parity) -> Self {
        ParityPolynomial { parity, packed: Vec::new() }
    }

    pub fn one() -> Self {
        ParityPolynomial { parity: Parity::Even, packed: vec![1.0] }
    }

    /// The monomial `c * y^k`.
    pub fn monomial(c: f64, k: usize) -> Self {
        let parity = Parity::of_degree(k);
        let mut packed = vec![0.0; k / 2 + 1];
        packed[k / 2] = c;
        ParityPolynomial { parity, packed }.trimmed()
    }

    pub fn from_packed(parity: Parity, packed: Vec<f64>) -> Self {
        ParityPolynomial { parity, packed }.trimmed()
    }

    /// Builds from dense coefficients (index = power). Coefficients of the
    /// wrong parity must be exactly zero.
    pub fn from_dense(parity: Parity, dense: &[f64]) -> Result<Self> {
        let mut packed = Vec::with_capacity(dense.len() / 2 + 1);
        for (k, &c) in dense.iter().enumerate() {
            if parity.admits(k) {
                packed.push(c);
            } else if c != 0.0 {
                return Err(Error::Parity(format!("{parity:?} polynomial has nonzero coefficient {c:e} at y^{k}")));
            }
        }
        Ok(ParityPolynomial { parity, packed }.trimmed())
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    fn power_of(&self, j: usize) -> usize {
        match self.parity {
            Parity::Even => 2 * j,
            Parity::Odd => 2 * j + 1,
        }
    }

    /// Coefficient of `y^k` (zero for the wrong parity).
    pub fn coeff(&self, k: usize) -> f64 {
        if !self.parity.admits(k) {
            return 0.0;
        }
        self.packed.get(k / 2).copied().unwrap_or(0.0)
    }

    pub fn set_coeff(&mut self, k: usize, c: f64) {
        assert!(self.parity.admits(k), "coefficient y^{k} has the wrong parity");
        let j = k / 2;
        if j >= self.packed.len() {
            if c == 0.0 {
                return;
            }
            self.packed.resize(j + 1, 0.0);
        }
        self.packed[j] = c;
        self.trim();
    }

    /// Dense coefficients, index = power.
    pub fn dense(&self) -> Vec<f64> {
        let Some(deg) = self.degree() else {
            return Vec::new();
        };
        let mut out = vec![0.0; deg + 1];
        for (j, &c) in self.packed.iter().enumerate() {
            out[self.power_of(j)] = c;
        }
        out
    }

    /// Highest power with a nonzero coefficient; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        if self.packed.is_empty() {
            None
        } else {
            Some(self.power_of(self.packed.len() - 1))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.packed.is_empty()
    }

    /// Leading coefficient, zero for the zero polynomial.
    pub fn leading(&self) -> f64 {
        self.packed.last().copied().unwrap_or(0.0)
    }

    /// Lowest power whose coefficient is nonzero.
    pub fn lowest_power(&self) -> Option<usize> {
        self.packed.iter().position(|&c| c != 0.0).map(|j| self.power_of(j))
    }

    fn trim(&mut self) {
        while matches!(self.packed.last(), Some(&c) if c == 0.0) {
            self.packed.pop();
        }
    }

    fn trimmed(mut self) -> Self {
        self.trim();
        self
    }

    /// Drops every coefficient of power above `k`.
    pub fn truncate_above(&mut self, k: usize) {
        let keep = self.packed.iter().enumerate().take_while(|(j, _)| self.power_of(*j) <= k).count();
        self.packed.truncate(keep);
        self.trim();
    }

    /// Zeroes every coefficient of power at most `k`.
    pub fn zero_through(&mut self, k: usize) {
        for j in 0..self.packed.len() {
            if self.power_of(j) <= k {
                self.packed[j] = 0.0;
            }
        }
        self.trim();
    }

    pub fn eval(&self, y: f64) -> f64 {
        let y2 = y * y;
        let mut acc = 0.0;
        for &c in self.packed.iter().rev() {
            acc = acc * y2 + c;
        }
        match self.parity {
            Parity::Even => acc,
            Parity::Odd => acc * y,
        }
    }

    /// Sum of |c_k| |y|^k, a scale for the rounding error of [`eval`](Self::eval).
    pub fn eval_abs(&self, y: f64) -> f64 {
        let y = y.abs();
        let y2 = y * y;
        let mut acc = 0.0;
        for &c in self.packed.iter().rev() {
            acc = acc * y2 + c.abs();
        }
        match self.parity {
            Parity::Even => acc,
            Parity::Odd => acc * y,
        }
    }

    pub fn derivative(&self) -> ParityPolynomial {
        let parity = self.parity.flip();
        let mut packed = Vec::with_capacity(self.packed.len());
        for (j, &c) in self.packed.iter().enumerate() {
            let k = self.power_of(j);
            if k == 0 {
                continue;
            }
            packed.push(c * k as f64);
        }
        ParityPolynomial { parity, packed }.trimmed()
    }

    pub fn scale(&self, s: f64) -> ParityPolynomial {
        ParityPolynomial { parity: self.parity, packed: self.packed.iter().map(|c| c * s).collect() }.trimmed()
    }

    /// `c * y * self`.
    pub fn times_y(&self, c: f64) -> ParityPolynomial {
        match self.parity {
            Parity::Even => {
                ParityPolynomial { parity: Parity::Odd, packed: self.packed.iter().map(|x| x * c).collect() }.trimmed()
            }
            Parity::Odd => {
                let mut packed = Vec::with_capacity(self.packed.len() + 1);
                packed.push(0.0);
                packed.extend(self.packed.iter().map(|x| x * c));
                ParityPolynomial { parity: Parity::Even, packed }.trimmed()
            }
        }
    }

    /// Substitutes `y -> c*y`.
    pub fn rescale_argument(&self, c: f64) -> ParityPolynomial {
        let mut out = self.clone();
        for j in 0..out.packed.len() {
            out.packed[j] *= c.powi(self.power_of(j) as i32);
        }
        out.trimmed()
    }

    pub fn try_add(&self, other: &ParityPolynomial) -> Result<ParityPolynomial> {
        self.combine(other, 1.0)
    }

    pub fn try_sub(&self, other: &ParityPolynomial) -> Result<ParityPolynomial> {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &ParityPolynomial, sign: f64) -> Result<ParityPolynomial> {
        if self.is_zero() {
            return Ok(other.scale(sign));
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.parity != other.parity {
            return Err(Error::Parity("adding polynomials of different parity".into()));
        }
        let n = self.packed.len().max(other.packed.len());
        let mut packed = vec![0.0; n];
        for (j, slot) in packed.iter_mut().enumerate() {
            *slot = self.packed.get(j).copied().unwrap_or(0.0) + sign * other.packed.get(j).copied().unwrap_or(0.0);
        }
        Ok(ParityPolynomial { parity: self.parity, packed }.trimmed())
    }

    pub fn product(&self, other: &ParityPolynomial) -> ParityPolynomial {
        let parity = self.parity.times(other.parity);
        if self.is_zero() || other.is_zero() {
            return ParityPolynomial::zero(parity);
        }
        // Odd*odd carries an extra y^2 relative to the packed index sum.
        let offset = usize::from(self.parity == Parity::Odd && other.parity == Parity::Odd);
        let mut packed = vec![0.0; self.packed.len() + other.packed.len() - 1 + offset];
        for (i, &a) in self.packed.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.packed.iter().enumerate() {
                packed[i + j + offset] += a * b;
            }
        }
        ParityPolynomial { parity, packed }.trimmed()
    }

    /// Largest absolute coefficient.
    pub fn max_abs_coeff(&self) -> f64 {
        self.packed.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.packed.iter().all(|c| c.is_finite())
    }
}

impl Add for &ParityPolynomial {
    type Output = ParityPolynomial;
    fn add(self, rhs: &ParityPolynomial) -> ParityPolynomial {
        self.try_add(rhs).expect("parity mismatch in addition")
    }
}

impl Sub for &ParityPolynomial {
    type Output = ParityPolynomial;
    fn sub(self, rhs: &ParityPolynomial) -> ParityPolynomial {
        self.try_sub(rhs).expect("parity mismatch in subtraction")
    }
}

impl Mul for &ParityPolynomial {
    type Output = ParityPolynomial;
    fn mul(self, rhs: &ParityPolynomial) -> ParityPolynomial {
        self.product(rhs)
    }
}

impl Neg for &ParityPolynomial {
    type Output = ParityPolynomial;
    fn neg(self) -> ParityPolynomial {
        self.scale(-1.0)
    }
}

/// Taylor coefficient of `y^k` in cos(y).
pub fn cos_taylor(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign / factorial(k)
}

/// Taylor coefficient of `y^k` in sin(y).
pub fn sin_taylor(k: usize) -> f64 {
    if k % 2 == 0 {
        return 0.0;
    }
    let sign = if ((k - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
    sign / factorial(k)
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_eval(c: &[f64], y: f64) -> f64 {
        c.iter().enumerate().map(|(k, a)| a * y.powi(k as i32)).sum()
    }

    #[test]
    fn packed_layout_round_trips_dense() {
        let p = ParityPolynomial::from_dense(Parity::Odd, &[0.0, 2.0, 0.0, -3.0]).unwrap();
        assert_eq!(p.packed(), &[2.0, -3.0]);
        assert_eq!(p.dense(), vec![0.0, 2.0, 0.0, -3.0]);
        assert_eq!(p.degree(), Some(3));
        assert!(ParityPolynomial::from_dense(Parity::Even, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn product_matches_dense_convolution() {
        let a = ParityPolynomial::from_dense(Parity::Odd, &[0.0, 1.5, 0.0, -0.25, 0.0, 2.0]).unwrap();
        let b = ParityPolynomial::from_dense(Parity::Odd, &[0.0, -1.0, 0.0, 0.5]).unwrap();
        let c = &a * &b;
        assert_eq!(c.parity(), Parity::Even);
        for y in [-1.3, 0.2, 0.9, 2.5] {
            let want = dense_eval(&a.dense(), y) * dense_eval(&b.dense(), y);
            assert!((c.eval(y) - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn times_y_and_derivative() {
        let p = ParityPolynomial::from_dense(Parity::Even, &[1.0, 0.0, -0.5]).unwrap();
        assert_eq!(p.times_y(2.0).dense(), vec![0.0, 2.0, 0.0, -1.0]);
        assert_eq!(p.derivative().dense(), vec![0.0, -1.0]);
        let q = ParityPolynomial::from_dense(Parity::Odd, &[0.0, 1.0]).unwrap();
        assert_eq!(q.times_y(1.0).dense(), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn parity_of_evaluation() {
        let p = ParityPolynomial::from_dense(Parity::Odd, &[0.0, 0.3, 0.0, 1.7]).unwrap();
        assert_eq!(p.eval(-0.7), -p.eval(0.7));
        let e = ParityPolynomial::from_dense(Parity::Even, &[0.1, 0.0, 1.7]).unwrap();
        assert_eq!(e.eval(-0.7), e.eval(0.7));
    }

    #[test]
    fn taylor_tables() {
        assert_eq!(cos_taylor(0), 1.0);
        assert_eq!(cos_taylor(2), -0.5);
        assert!((cos_taylor(4) - 1.0 / 24.0).abs() < 1e-18);
        assert_eq!(sin_taylor(1), 1.0);
        assert!((sin_taylor(3) + 1.0 / 6.0).abs() < 1e-18);
        assert_eq!(sin_taylor(2), 0.0);
    }
}
