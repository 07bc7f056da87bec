//! Recovering splitting coefficients from a propagation matrix.
//!
//! The last factor of `B(b_n) A(a_n) ... A(a_1)` is read off from the ratio of
//! leading coefficients and divided out exactly; the row degrees drop by
//! two per peeled pair until the identity remains.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::methods::SplittingMethod;
use crate::polyprop::{compose_coeffs, PropagationMatrix};

/// Scaled relative residual accepted after recomposition.
pub const FACTOR_TOL: f64 = 1e-10;
const REFINE_ITERATIONS: usize = 100;
/// Residual at which no further word is tried.
const ROUND_OFF: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Scaled relative residual of the recomposed matrix.
    pub residual: f64,
    /// Whether the double-double fallback was needed.
    pub extended: bool,
}

impl Factorization {
    /// Stages once the trailing zero `b` is fused with the next step.
    pub fn stages(&self) -> usize {
        self.a.len() - usize::from(self.b.last() == Some(&0.0))
    }

    pub fn into_method(self, name: &str, r: usize, theta_prime: f64) -> Result<SplittingMethod> {
        let m = self.stages().max(1);
        SplittingMethod::new(name, m, r, theta_prime, self.a, self.b)
    }
}

/// Arithmetic needed by the peeling loop.
trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn of(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`, about 32 significant digits.
#[derive(Clone, Copy, Debug, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl DoubleDouble {
    fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        DoubleDouble { hi, lo }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        DoubleDouble::new(s, e + f)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        DoubleDouble { hi: -self.hi, lo: -self.lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        DoubleDouble::new(p, e + (self.hi * o.lo + self.lo * o.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // Two correction steps of long division.
        let q1 = self.hi / o.hi;
        let r = self - o * DoubleDouble::of(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DoubleDouble::of(q2);
        let q3 = r.hi / o.hi;
        DoubleDouble::new(q1, q2) + DoubleDouble::of(q3)
    }
}

impl Scalar for DoubleDouble {
    fn of(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Factor {
    A,
    B,
}

/// Dense entries of `K(x)` with `x = c y`, so that the leading coefficient is of unit size.
fn scaled_entries(k: &PropagationMatrix) -> (Vec<Vec<f64>>, usize, f64) {
    let dense: Vec<Vec<f64>> = k.entries().iter().map(|p| p.dense()).collect();
    let deg = k.degree();
    let lead = dense.iter().map(|d| d.get(deg).copied().unwrap_or(0.0).abs()).fold(0.0, f64::max);
    let c = if deg == 0 || lead == 0.0 { 1.0 } else { lead.powf(1.0 / deg as f64) };
    let scaled = dense
        .iter()
        .map(|d| {
            let mut v: Vec<f64> = d.iter().enumerate().map(|(j, &x)| x / c.powi(j as i32)).collect();
            v.resize(deg + 2, 0.0);
            v
        })
        .collect();
    (scaled, deg, c)
}

/// Peels factors off the scaled entries; returns the word in application order.
fn peel<S: Scalar>(entries: &[Vec<f64>], deg: usize) -> Result<Vec<(Factor, f64)>> {
    let mut k: Vec<Vec<S>> = entries.iter().map(|v| v.iter().map(|&x| S::of(x)).collect()).collect();
    let at = |k: &Vec<Vec<S>>, e: usize, j: usize| k[e][j].to_f64().abs();
    // Entry of each row carrying the given degree: K1/K4 are even, K2/K3 odd.
    let (mut d1, mut d2) = if deg == 0 {
        (0, 0)
    } else {
        let r1 = if deg % 2 == 0 { at(&k, 0, deg) } else { at(&k, 1, deg) };
        let r2 = if deg % 2 == 0 { at(&k, 3, deg) } else { at(&k, 2, deg) };
        if r1 >= r2 {
            (deg, deg - 1)
        } else {
            (deg - 1, deg)
        }
    };
    let mut word = Vec::new();
    while d1 > 0 || d2 > 0 {
        if d1 == d2 {
            return Err(Error::NotFactorizable(format!("both rows have degree {d1}")));
        }
        if d1 > d2 {
            // Undo a final A(a): row1 = row1_prev + a x row2.
            let (top, other) = if d1 % 2 == 0 { (k[0][d1], k[2][d1 - 1]) } else { (k[1][d1], k[3][d1 - 1]) };
            let a = top / other;
            let af = a.to_f64();
            if !af.is_finite() {
                return Err(Error::NotFactorizable(format!("vanishing pivot at degree {d1}")));
            }
            for j in (1..k[0].len()).rev() {
                let (k3, k4) = (k[2][j - 1], k[3][j - 1]);
                k[0][j] = k[0][j] - a * k3;
                k[1][j] = k[1][j] - a * k4;
            }
            d1 = d2.saturating_sub(1);
            for e in 0..2 {
                k[e].iter_mut().skip(d1 + 1).for_each(|v| *v = S::of(0.0));
            }
            word.push((Factor::A, af));
        } else {
            // Undo a final B(b): row2 = row2_prev - b x row1.
            let (top, other) = if d2 % 2 == 1 { (k[2][d2], k[0][d2 - 1]) } else { (k[3][d2], k[1][d2 - 1]) };
            let b = -(top / other);
            let bf = b.to_f64();
            if !bf.is_finite() {
                return Err(Error::NotFactorizable(format!("vanishing pivot at degree {d2}")));
            }
            for j in (1..k[2].len()).rev() {
                let (k1, k2) = (k[0][j - 1], k[1][j - 1]);
                k[2][j] = k[2][j] + b * k1;
                k[3][j] = k[3][j] + b * k2;
            }
            d2 = d1.saturating_sub(1);
            for e in 2..4 {
                k[e].iter_mut().skip(d2 + 1).for_each(|v| *v = S::of(0.0));
            }
            word.push((Factor::B, bf));
        }
    }
    word.reverse();
    Ok(word)
}

/// Pairs `(a_i, b_i)` from an alternating word.
fn pairs_from_word(word: &[(Factor, f64)], c: f64) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    if word.first().is_some_and(|w| w.0 == Factor::B) {
        a.push(0.0);
    }
    for &(f, v) in word {
        match f {
            Factor::A => a.push(v * c),
            Factor::B => b.push(v * c),
        }
    }
    if b.len() < a.len() {
        b.push(0.0);
    }
    if a.is_empty() {
        (vec![0.0], vec![0.0])
    } else {
        (a, b)
    }
}

/// Max over entries and powers of `|K'_j - K_j| / c^j`, relative to the largest scaled coefficient.
fn scaled_residual(k: &PropagationMatrix, a: &[f64], b: &[f64], c: f64) -> f64 {
    let Ok(kr) = compose_coeffs(a, b) else {
        return f64::INFINITY;
    };
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for (x, y) in kr.entries().iter().zip(k.entries()) {
        let (dx, dy) = (x.dense(), y.dense());
        for j in 0..dx.len().max(dy.len()) {
            let s = c.powi(j as i32);
            let u = dx.get(j).copied().unwrap_or(0.0) / s;
            let v = dy.get(j).copied().unwrap_or(0.0) / s;
            num = num.max((u - v).abs());
            den = den.max(v.abs());
        }
    }
    num / den.max(f64::MIN_POSITIVE)
}

/// Levenberg–Marquardt on all coefficients of the scaled entries, starting from a
/// peeled word. Peeling reads each stage from leading coefficients only; the
/// lower coefficients pin the stages far better. Structural zeros stay fixed.
fn refine(entries: &[Vec<f64>], a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lead_zero = a.first() == Some(&0.0) && a.len() > 1;
    let tail_zero = b.last() == Some(&0.0);
    let free_a: Vec<usize> = (usize::from(lead_zero)..a.len()).collect();
    let free_b: Vec<usize> = (0..b.len() - usize::from(tail_zero)).collect();
    let scale = entries.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let unpack = |v: &[f64]| {
        let (mut a2, mut b2) = (a.to_vec(), b.to_vec());
        for (slot, &i) in free_a.iter().enumerate() {
            a2[i] = v[slot];
        }
        for (slot, &i) in free_b.iter().enumerate() {
            b2[i] = v[free_a.len() + slot];
        }
        (a2, b2)
    };
    let residuals = |v: &[f64]| -> Option<Vec<f64>> {
        let (a2, b2) = unpack(v);
        let k = compose_coeffs(&a2, &b2).ok()?;
        let mut out = Vec::new();
        for (poly, target) in k.entries().iter().zip(entries) {
            for (j, t) in target.iter().enumerate() {
                out.push((poly.coeff(j) - t) / scale);
            }
            if poly.degree().is_some_and(|d| d >= target.len()) {
                return None;
            }
        }
        Some(out)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let sumsq = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();

    let mut v: Vec<f64> = free_a.iter().map(|&i| a[i]).chain(free_b.iter().map(|&i| b[i])).collect();
    let Some(mut res) = residuals(&v) else {
        return (a.to_vec(), b.to_vec());
    };
    let mut best = (norm(&res), v.clone());
    // Levenberg–Marquardt with damping relative to the largest singular value.
    let mut damping = 1e-12;
    let mut stalls = 0;
    for _ in 0..REFINE_ITERATIONS {
        if best.0 <= 1e-16 || v.is_empty() {
            break;
        }
        let mut jac = nalgebra::DMatrix::zeros(res.len(), v.len());
        for i in 0..v.len() {
            let h = 1e-7 * v[i].abs().max(1.0);
            let (mut plus, mut minus) = (v.clone(), v.clone());
            plus[i] += h;
            minus[i] -= h;
            let (Some(rp), Some(rm)) = (residuals(&plus), residuals(&minus)) else {
                return unpack(&best.1);
            };
            for (row, (p, m)) in rp.iter().zip(&rm).enumerate() {
                jac[(row, i)] = (p - m) / (2.0 * h);
            }
        }
        let svd = jac.svd(true, true);
        let (Some(u), Some(vt)) = (&svd.u, &svd.v_t) else {
            break;
        };
        let smax = svd.singular_values.max();
        let utr = u.tr_mul(&nalgebra::DVector::from_column_slice(&res));
        let current = sumsq(&res);
        if stalls >= 5 {
            break;
        }
        let mut accepted = false;
        for _ in 0..16 {
            let lam = damping * smax * smax;
            let scaled = nalgebra::DVector::from_iterator(
                utr.len(),
                utr.iter()
                    .zip(svd.singular_values.iter())
                    .map(|(r, &sv)| if sv > 0.0 { r * sv / (sv * sv + lam) } else { 0.0 }),
            );
            let step = vt.tr_mul(&scaled);
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(x, d)| x - d).collect();
            if let Some(r) = residuals(&trial).filter(|r| sumsq(r) < current) {
                stalls = if sumsq(&r) > 0.99 * current { stalls + 1 } else { 0 };
                res = r;
                v = trial;
                if norm(&res) < best.0 {
                    best = (norm(&res), v.clone());
                }
                damping = (damping / 10.0).max(1e-16);
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    unpack(&best.1)
}

/// Coefficients `(a, b)` with `compose(a, b) = K`; retries in double-double
/// arithmetic when the double-precision residual exceeds [`FACTOR_TOL`].
pub fn factorize_k(k: &PropagationMatrix) -> Result<Factorization> {
    let (best, report) = factorize_best(k);
    match best {
        Some(f) if f.residual <= FACTOR_TOL => Ok(f),
        _ => Err(Error::NotFactorizable(report)),
    }
}

/// `K^T` is the composition with factors reversed, `A` and `B` swapped and
/// values negated, so peeling it recovers the first stages most accurately.
fn peel_transposed<S: Scalar>(entries: &[Vec<f64>], deg: usize) -> Result<Vec<(Factor, f64)>> {
    let t = [entries[0].clone(), entries[2].clone(), entries[1].clone(), entries[3].clone()];
    let word = peel::<S>(&t, deg)?;
    Ok(word.into_iter().rev().map(|(f, v)| (if f == Factor::A { Factor::B } else { Factor::A }, -v)).collect())
}

/// Peeled words: from the last stage, from the first stage, and every
/// stitching of a prefix of the second with the matching suffix of the first.
fn peeled_words<S: Scalar>(entries: &[Vec<f64>], deg: usize) -> (Vec<Vec<(Factor, f64)>>, Vec<String>) {
    let mut words = Vec::new();
    let mut errors = Vec::new();
    for w in [peel::<S>(entries, deg), peel_transposed::<S>(entries, deg)] {
        match w {
            Ok(w) => words.push(w),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if let [right, left] = &words[..] {
        if right.len() == left.len() && right.iter().zip(left).all(|(x, y)| x.0 == y.0) {
            let stitched: Vec<Vec<(Factor, f64)>> =
                (1..right.len()).map(|cut| left[..cut].iter().chain(&right[cut..]).copied().collect()).collect();
            words.extend(stitched);
        }
    }
    (words, errors)
}

/// Lowest-residual factorization from both precisions, whatever its residual,
/// plus a report of each attempt.
pub(crate) fn factorize_best(k: &PropagationMatrix) -> (Option<Factorization>, String) {
    let (entries, deg, c) = scaled_entries(k);
    let mut report = Vec::new();
    let mut best: Option<Factorization> = None;
    for extended in [false, true] {
        let (words, errors) =
            if extended { peeled_words::<DoubleDouble>(&entries, deg) } else { peeled_words::<f64>(&entries, deg) };
        let label = if extended { "double-double" } else { "double" };
        let mut level_best = f64::INFINITY;
        for word in words {
            let (a, b) = pairs_from_word(&word, 1.0);
            let (a, b) = refine(&entries, &a, &b);
            let a: Vec<f64> = a.iter().map(|x| x * c).collect();
            let b: Vec<f64> = b.iter().map(|x| x * c).collect();
            let residual = scaled_residual(k, &a, &b, c);
            level_best = level_best.min(residual);
            if best.as_ref().is_none_or(|f| residual < f.residual) {
                best = Some(Factorization { a, b, residual, extended });
            }
            if residual <= ROUND_OFF {
                break;
            }
        }
        if level_best.is_finite() {
            report.push(format!("{label}: residual {level_best:e}"));
        } else {
            report.push(format!("{label}: {}", errors.join(", ")));
        }
        if level_best <= FACTOR_TOL {
            break;
        }
    }
    (best, report.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::builtin;
    use crate::polyprop::compose_k;

    #[test]
    fn builtins_round_trip() {
        for name in ["leapfrog", "strang"] {
            let m = builtin(name).unwrap();
            let f = factorize_k(&compose_k(&m).unwrap()).unwrap();
            for (x, y) in f.a.iter().zip(&m.a).chain(f.b.iter().zip(&m.b)) {
                assert!((x - y).abs() < 1e-14, "{name}: {:?} {:?}", f, m);
            }
            assert_eq!(f.stages(), m.m);
        }
    }

    #[test]
    fn identity_factorizes_trivially() {
        let f = factorize_k(&PropagationMatrix::identity()).unwrap();
        assert_eq!((f.a, f.b), (vec![0.0], vec![0.0]));
    }

    #[test]
    fn double_double_arithmetic() {
        let third = DoubleDouble::of(1.0) / DoubleDouble::of(3.0);
        let back = third * DoubleDouble::of(3.0) - DoubleDouble::of(1.0);
        assert!(back.to_f64().abs() < 1e-31);
        let x = DoubleDouble::of(1.0) + DoubleDouble::of(1e-20);
        assert_eq!(x.lo, 1e-20);
        assert_eq!((x - DoubleDouble::of(1.0)).to_f64(), 1e-20);
    }

    #[test]
    fn random_round_trip_double_and_extended() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for n in 1..=6 {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let k = compose_coeffs(&a, &b).unwrap();
            let (entries, deg, c) = scaled_entries(&k);
            let wd = peel::<DoubleDouble>(&entries, deg).unwrap();
            let (ad, bd) = pairs_from_word(&wd, c);
            let f = factorize_k(&k).unwrap_or_else(|e| panic!("n = {n}: {e}"));
            for (x, y) in f.a.iter().zip(&a).chain(f.b.iter().zip(&b)).chain(ad.iter().zip(&a)).chain(bd.iter().zip(&b))
            {
                assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn recomposition_up_to_ten_stages() {
        // Coefficients themselves are not always recoverable here: with m near
        // 10 the inverse map can be numerically singular. K always is.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(1..=10);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let f = factorize_k(&compose_coeffs(&a, &b).unwrap()).unwrap_or_else(|e| panic!("{a:?} {b:?}: {e}"));
            assert!(f.residual <= FACTOR_TOL);
            assert_eq!((f.a.len(), f.b.len()), (n, n));
        }
    }

    #[test]
    fn equal_row_degrees_are_rejected() {
        use crate::polyprop::{Parity, ParityPolynomial};
        // Both rows of degree 2 cannot come from alternating triangular factors.
        let k = PropagationMatrix::new(
            ParityPolynomial::from_dense(Parity::Even, &[1.0, 0.0, 1.0]).unwrap(),
            ParityPolynomial::zero(Parity::Odd),
            ParityPolynomial::zero(Parity::Odd),
            ParityPolynomial::from_dense(Parity::Even, &[1.0, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!(matches!(factorize_k(&k), Err(Error::NotFactorizable(_))));
    }
}
