//! Step two: real splits `d^2 + e^2 = s` of `s = p^2 + q^2 - 1`.
//!
//! With `s(y) = y^(2nu) S(y^2)`, every root `w` of `S` contributes the pair
//! `+-sqrt(w)` to the roots of `s`. `f = d + i e` takes one member of each
//! pair so that its root set is closed under `r -> -conj(r)`; double positive
//! roots (resonances) contribute both square roots.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::polyprop::{Parity, ParityPolynomial, PropagationMatrix};

/// Relative residual allowed in `d^2 + e^2 = s`.
pub const SOS_TOL: f64 = 1e-9;
/// Relative distance below which two roots of `S` count as one double root.
const CLUSTER_TOL: f64 = 1e-3;
/// Relative sizes of `S` at a refined double root, tried in order: a clustered
/// pair is first read as double only at rounding level, then never, then loosely.
const DOUBLE_ROOT_TOLS: [f64; 3] = [1e-12, 0.0, 1e-8];
/// Relative imaginary part below which a root of `S` counts as real.
const REAL_TOL: f64 = 1e-8;
/// Coefficients of `s` within this many ulps of the size of their products are rounding noise.
const NOISE_ULPS: f64 = 1e4;

#[derive(Clone, Debug, PartialEq)]
pub struct SosPair {
    pub d: ParityPolynomial,
    pub e: ParityPolynomial,
}

/// All real splits for the pair `(p, q)`. The tangency order of `s` at zero is
/// detected from the coefficients.
pub fn split_sum_of_squares(p: &ParityPolynomial, q: &ParityPolynomial) -> Result<Vec<SosPair>> {
    let mut s = &(p * p) + &(q * q);
    s.set_coeff(0, s.coeff(0) - 1.0);
    let abs =
        |x: &ParityPolynomial| ParityPolynomial::from_packed(x.parity(), x.packed().iter().map(|c| c.abs()).collect());
    let size = &(&(&abs(p) * &abs(p)) + &(&abs(q) * &abs(q))) + &ParityPolynomial::one();
    let noise = |k: usize| NOISE_ULPS * f64::EPSILON * size.coeff(k);
    let Some(low) = (0..=s.degree().unwrap_or(0)).step_by(2).find(|&k| s.coeff(k).abs() > noise(k)) else {
        return Ok(vec![SosPair { d: ParityPolynomial::zero(Parity::Even), e: ParityPolynomial::zero(Parity::Odd) }]);
    };
    split_s(&s, low / 2)
}

/// Splits for an even `s` whose coefficients below `y^(2 nu)` are taken as zero.
pub fn split_s(s: &ParityPolynomial, nu: usize) -> Result<Vec<SosPair>> {
    let deg = s.degree().unwrap_or(0);
    if s.parity() != Parity::Even && !s.is_zero() {
        return Err(Error::Parity("s must be even".into()));
    }
    if s.is_zero() || deg < 2 * nu {
        return Ok(vec![SosPair { d: ParityPolynomial::zero(Parity::Even), e: ParityPolynomial::zero(Parity::Odd) }]);
    }
    let big: Vec<f64> = (nu..=deg / 2).map(|j| s.coeff(2 * j)).collect();
    let n = big.len() - 1;
    if big[n] <= 0.0 {
        return Err(Error::NoRealSplit(format!("leading coefficient of s is {}", big[n])));
    }
    if big[0] == 0.0 {
        return Err(Error::InvalidInput(format!("coefficient of y^{} in s vanishes", 2 * nu)));
    }
    // S(sigma w) has roots of unit size on average.
    let sigma = if n == 0 { 1.0 } else { (big[0].abs() / big[n]).powf(1.0 / n as f64) };
    let t: Vec<f64> = big.iter().enumerate().map(|(j, c)| c * sigma.powi(j as i32)).collect();
    let t_lead = t[n];
    let monic: Vec<f64> = t.iter().map(|c| c / t_lead).collect();

    let mut first_err = None;
    for tol in DOUBLE_ROOT_TOLS {
        let attempt = classify_roots(&monic, tol)
            .and_then(|(doubles, rest)| splits_from_roots(s, nu, sigma, t_lead, &doubles, rest));
        match attempt {
            Ok(out) => return Ok(out),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("at least one attempt"))
}

fn splits_from_roots(
    s: &ParityPolynomial,
    nu: usize,
    sigma: f64,
    t_lead: f64,
    doubles: &[f64],
    rest: Vec<Complex64>,
) -> Result<Vec<SosPair>> {
    let n = 2 * doubles.len() + rest.len();
    let mut fixed: Vec<Complex64> = Vec::new();
    for &z0 in doubles {
        let v = z0.sqrt();
        fixed.push(Complex64::new(v, 0.0));
        fixed.push(Complex64::new(-v, 0.0));
    }
    // Each choice lists alternative root sets.
    let mut choices: Vec<Vec<Vec<Complex64>>> = Vec::new();
    for w in rest {
        if w.im.abs() <= REAL_TOL * w.norm() {
            if w.re > 0.0 {
                return Err(Error::NoRealSplit(format!("s changes sign at y = {}", (w.re * sigma).sqrt())));
            }
            let a = (-w.re).sqrt();
            choices.push(vec![vec![Complex64::new(0.0, a)], vec![Complex64::new(0.0, -a)]]);
        } else if w.im > 0.0 {
            let v = w.sqrt();
            let mut alts = vec![vec![v, -v.conj()], vec![-v, v.conj()]];
            // A pair hugging the negative axis may be two real roots split apart by rounding.
            if w.re < 0.0 && w.im <= CLUSTER_TOL * w.norm() {
                let a = w.norm().sqrt();
                alts.push(vec![Complex64::new(0.0, a), Complex64::new(0.0, -a)]);
            }
            choices.push(alts);
        }
    }

    // |c|^2 = sigma^nu T_n, with i^deg(f) making f(-y) = conj(f(y)).
    let deg_f = nu + n;
    let c_abs = (0.5 * (nu as f64 * sigma.ln() + t_lead.ln())).exp();
    let c = if deg_f % 2 == 1 { Complex64::new(0.0, c_abs) } else { Complex64::new(c_abs, 0.0) };

    let mut out = Vec::new();
    let mut worst: f64 = 0.0;
    let total: usize = choices.iter().map(Vec::len).product();
    for index in 0..total {
        let mut roots = fixed.clone();
        let mut rem = index;
        for ch in &choices {
            roots.extend_from_slice(&ch[rem % ch.len()]);
            rem /= ch.len();
        }
        let g = poly_from_roots(&roots);
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; deg_f + 1];
            let mut e = vec![0.0; deg_f + 1];
            for (j, gj) in g.iter().enumerate() {
                let k = j + nu;
                let f = c * gj * sign / sigma.powf(k as f64 / 2.0);
                if k % 2 == 0 {
                    d[k] = f.re;
                } else {
                    e[k] = f.im;
                }
            }
            let pair = SosPair {
                d: ParityPolynomial::from_dense(Parity::Even, &d)?,
                e: ParityPolynomial::from_dense(Parity::Odd, &e)?,
            };
            let res = residual(s, nu, &pair, sigma);
            if res <= SOS_TOL {
                out.push(pair);
            } else {
                worst = worst.max(res);
            }
        }
    }
    // Every two-way choice must hold; only the extra readings of clustered pairs may drop out.
    let required = 2 * choices.iter().map(|c| c.len().min(2)).product::<usize>();
    if out.len() < required || worst.is_nan() {
        return Err(Error::RootFinding(format!(
            "split residual {worst:e} exceeds {SOS_TOL:e} ({} double roots, {} choices)",
            doubles.len(),
            choices.len()
        )));
    }
    Ok(out)
}

/// `max |d^2 + e^2 - s|` relative to `max |s|`, both on the balanced scale `y = sqrt(sigma) xi`.
fn residual(s: &ParityPolynomial, nu: usize, pair: &SosPair, sigma: f64) -> f64 {
    let sum = &(&pair.d * &pair.d) + &(&pair.e * &pair.e);
    let deg = s.degree().unwrap_or(0).max(sum.degree().unwrap_or(0));
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for k in (2 * nu..=deg).step_by(2) {
        let w = sigma.powf(k as f64 / 2.0);
        num = num.max((sum.coeff(k) - s.coeff(k)).abs() * w);
        den = den.max(s.coeff(k).abs() * w);
    }
    for k in (0..2 * nu).step_by(2) {
        num = num.max(sum.coeff(k).abs() * sigma.powf(k as f64 / 2.0));
    }
    num / den.max(f64::MIN_POSITIVE)
}

fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut g = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); g.len() + 1];
        for (j, &c) in g.iter().enumerate() {
            next[j + 1] += c;
            next[j] -= c * r;
        }
        g = next;
    }
    g
}

fn eval_real(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &v)| k as f64 * v).collect()
}

/// Roots of a real polynomial (ascending coefficients, monic) via the companion matrix.
fn roots(monic: &[f64]) -> Vec<Complex64> {
    let n = monic.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = monic[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -monic[i] / lead;
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Divides by `(w - z0)`, dropping the remainder.
fn deflate(c: &[f64], z0: f64) -> Vec<f64> {
    let n = c.len() - 1;
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for k in (1..=n).rev() {
        acc = acc * z0 + c[k];
        out[k - 1] = acc;
    }
    out
}

/// Double positive roots (refined) and the remaining roots of the deflated polynomial.
fn classify_roots(monic: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<Complex64>)> {
    let all = roots(monic);
    if all.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) {
        return Err(Error::RootFinding("companion eigenvalues are not finite".into()));
    }
    let near_positive = |r: &Complex64| r.re > 0.0 && r.im.abs() <= CLUSTER_TOL * r.norm();
    let d1 = derivative(monic);
    let d2 = derivative(&d1);
    let abs: Vec<f64> = monic.iter().map(|c| c.abs()).collect();
    let mut used = vec![false; all.len()];
    let mut doubles = Vec::new();
    for i in 0..all.len() {
        if used[i] || !near_positive(&all[i]) {
            continue;
        }
        let partner = (0..all.len())
            .filter(|&j| j != i && !used[j] && near_positive(&all[j]))
            .filter(|&j| (all[i] - all[j]).norm() <= CLUSTER_TOL * all[i].norm())
            .min_by(|&a, &b| (all[i] - all[a]).norm().total_cmp(&(all[i] - all[b]).norm()));
        let Some(j) = partner else {
            continue;
        };
        // A double root of S is a simple root of S'.
        let mut z = 0.5 * (all[i].re + all[j].re);
        for _ in 0..50 {
            let den = eval_real(&d2, z);
            if den == 0.0 {
                break;
            }
            let step = eval_real(&d1, z) / den;
            z -= step;
            if step.abs() <= 1e-15 * z.abs() {
                break;
            }
        }
        // Otherwise the two are a conjugate pair close to the axis.
        if z > 0.0 && eval_real(monic, z).abs() <= tol * eval_real(&abs, z) {
            used[i] = true;
            used[j] = true;
            doubles.push(z);
        }
    }
    doubles.sort_by(f64::total_cmp);
    let mut reduced = monic.to_vec();
    for &z in &doubles {
        reduced = deflate(&deflate(&reduced, z), z);
    }
    let rest = if doubles.is_empty() { all } else { roots(&reduced) };
    Ok((doubles, rest))
}

/// `K = [[p + d, q + e], [-q + e, p - d]]`, checked for `det K = 1`.
pub fn assemble_k(
    p: &ParityPolynomial,
    q: &ParityPolynomial,
    d: &ParityPolynomial,
    e: &ParityPolynomial,
) -> Result<PropagationMatrix> {
    let k = PropagationMatrix::new(p.try_add(d)?, q.try_add(e)?, e.try_sub(q)?, p.try_sub(d)?)?;
    let res = k.det_residual();
    if !(res <= SOS_TOL) {
        return Err(Error::InvalidInput(format!("d^2 + e^2 differs from p^2 + q^2 - 1: det residual {res:e}")));
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::builtin;
    use crate::polyprop::compose_k;

    fn even(d: &[f64]) -> ParityPolynomial {
        ParityPolynomial::from_dense(Parity::Even, d).unwrap()
    }

    fn odd(d: &[f64]) -> ParityPolynomial {
        ParityPolynomial::from_dense(Parity::Odd, d).unwrap()
    }

    #[test]
    fn leapfrog_has_two_splits() {
        let p = even(&[1.0, 0.0, -0.5]);
        let q = odd(&[0.0, 1.0]);
        let splits = split_sum_of_squares(&p, &q).unwrap();
        assert_eq!(splits.len(), 2);
        let mut ds: Vec<f64> = splits.iter().map(|s| s.d.coeff(2)).collect();
        ds.sort_by(f64::total_cmp);
        assert_eq!(ds, vec![-0.5, 0.5]);
        assert!(splits.iter().all(|s| s.e.is_zero() && s.d.degree() == Some(2)));
        let k = assemble_k(&p, &q, &even(&[0.0, 0.0, -0.5]), &ParityPolynomial::zero(Parity::Odd)).unwrap();
        assert_eq!(k, compose_k(&builtin("leapfrog").unwrap()).unwrap());
        let adj = assemble_k(&p, &q, &even(&[0.0, 0.0, 0.5]), &ParityPolynomial::zero(Parity::Odd)).unwrap();
        assert_eq!(adj, crate::polyprop::compose_coeffs(&[1.0, 0.0], &[0.0, 1.0]).unwrap());
    }

    #[test]
    fn constant_s() {
        let s = even(&[4.0]);
        let splits = split_s(&s, 0).unwrap();
        assert_eq!(splits.len(), 2);
        for sp in &splits {
            assert!((sp.d.coeff(0).abs() - 2.0).abs() < 1e-15 && sp.e.is_zero());
        }
    }

    #[test]
    fn sign_change_has_no_split() {
        // s = y^2 (y^2 - 1) is negative on (0, 1).
        assert!(matches!(split_s(&even(&[0.0, 0.0, -1.0, 0.0, 1.0]), 1), Err(Error::NoRealSplit(_))));
        assert!(matches!(split_s(&even(&[1.0, 0.0, -1.0]), 0), Err(Error::NoRealSplit(_))));
    }

    #[test]
    fn double_positive_root_is_kept() {
        // s = y^4 (y^2 - 4)^2 (y^2 + 1): double root at y = 2.
        let base = &(&even(&[-4.0, 0.0, 1.0]) * &even(&[-4.0, 0.0, 1.0])) * &even(&[1.0, 0.0, 1.0]);
        let s = &base * &even(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        let splits = split_s(&s, 2).unwrap();
        assert_eq!(splits.len(), 4);
        for sp in &splits {
            let y = 2.0;
            assert!(sp.d.eval(y).abs() < 1e-10 && sp.e.eval(y).abs() < 1e-10);
            assert_eq!(sp.d.lowest_power().into_iter().chain(sp.e.lowest_power()).min(), Some(2));
        }
    }

    #[test]
    fn strang_splits_are_strang_and_its_adjoint() {
        let k = compose_k(&builtin("strang").unwrap()).unwrap();
        let (p, q) = (k.stability_polynomial(), k.q_polynomial());
        let splits = split_sum_of_squares(&p, &q).unwrap();
        assert_eq!(splits.len(), 2);
        for sp in &splits {
            assert!(sp.d.is_zero());
            assert!((sp.e.coeff(3).abs() - 0.125).abs() < 1e-15);
        }
        let e = k.e_polynomial().coeff(3);
        assert!(splits.iter().any(|sp| (sp.e.coeff(3) - e).abs() < 1e-15));
    }
}
