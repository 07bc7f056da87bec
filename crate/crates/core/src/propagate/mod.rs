//! Time stepping of `i du/dt = H u` by splitting, with diagnostics.
//!
//! With `u = q + i p` the system reads `q' = H p`, `p' = -H q`; stage `i`
//! applies `q += a_i tau H p` and then `p -= b_i tau H q`.

mod bound;
mod reference;

pub use bound::{apriori_bound, apriori_bound_with, AprioriBound};
pub use reference::{reference_propagate, ReferencePropagator, RICHARDSON_TOL};

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::methods::SplittingMethod;
use crate::operator::{HamiltonianOperator, NormConvention};
use crate::polyprop::{compose_k, Analyzer};

/// Largest dimension for which the transformed-state norm is tracked.
pub const TRANSFORMED_NORM_LIMIT: usize = 512;

/// Step indices at which the state is recorded. Step 0 is always included.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoints {
    /// Only the initial and final states.
    Final,
    /// Steps `round(n / 2^i)` for `i = 0..levels`.
    Dyadic(usize),
    /// Every `k`-th step and the last.
    Every(usize),
    /// Explicit step indices (values above `n` are dropped).
    Steps(Vec<usize>),
}

impl Checkpoints {
    fn resolve(&self, n: usize) -> BTreeSet<usize> {
        let mut set = BTreeSet::from([0, n]);
        match self {
            Checkpoints::Final => {}
            Checkpoints::Dyadic(levels) => {
                for i in 0..*levels {
                    let s = (n as f64 / 2f64.powi(i as i32)).round() as usize;
                    if s > 0 {
                        set.insert(s);
                    }
                }
            }
            Checkpoints::Every(k) => {
                let k = (*k).max(1);
                set.extend((0..=n).step_by(k));
            }
            Checkpoints::Steps(steps) => set.extend(steps.iter().copied().filter(|&s| s <= n)),
        }
        set
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagateOptions {
    pub checkpoints: Checkpoints,
    /// Skips the stability gate; meant only for demonstrating blow-up.
    pub allow_unstable: bool,
    /// Tracks `||u~||` when the dimension is at most [`TRANSFORMED_NORM_LIMIT`].
    pub transformed_norm: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions { checkpoints: Checkpoints::Dyadic(8), allow_unstable: false, transformed_norm: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `sqrt(sum |u_j|^2 / N)`.
    pub norm: f64,
    pub norm_euclidean: f64,
    /// `(q^T H q + p^T H p) / (2N)`.
    pub energy: f64,
    /// Euclidean norm of the transformed state, conserved exactly by the method.
    pub transformed_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: usize,
    pub t: f64,
    pub state: Vec<Complex64>,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug)]
pub struct PropagationRun {
    pub method: SplittingMethod,
    pub tau: f64,
    pub n_steps: usize,
    /// Spectral-radius estimate used for the step size.
    pub rho: f64,
    pub y_star: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub warnings: Vec<String>,
}

impl PropagationRun {
    pub fn final_state(&self) -> &[Complex64] {
        &self.checkpoints.last().expect("step 0 is always recorded").state
    }

    /// Nominal cost `n m` in complex `H`-applications.
    pub fn h_applies(&self) -> usize {
        self.n_steps * self.method.m
    }
}

/// `n = ceil(t rho / (m theta'))`, so that `tau rho <= m theta'`.
pub fn step_count(t: f64, rho: f64, m: usize, theta_prime: f64) -> usize {
    if t <= 0.0 || rho <= 0.0 {
        return 0;
    }
    // Guard against t*rho/(m theta') landing a hair above an integer.
    let x = t * rho / (m as f64 * theta_prime);
    let r = x.round();
    if (x - r).abs() <= 1e-12 * x.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Half {
    /// `q += c H p`
    A,
    /// `p -= c H q`
    B,
}

/// Applies a stream of flows, merging adjacent flows of the same kind and
/// dropping zero ones.
struct Stepper<'a> {
    op: &'a HamiltonianOperator,
    q: Vec<f64>,
    p: Vec<f64>,
    h: Vec<f64>,
    pending: Option<(Half, f64)>,
}

impl<'a> Stepper<'a> {
    fn new(op: &'a HamiltonianOperator, u0: &[Complex64]) -> Self {
        Stepper {
            op,
            q: u0.iter().map(|z| z.re).collect(),
            p: u0.iter().map(|z| z.im).collect(),
            h: vec![0.0; u0.len()],
            pending: None,
        }
    }

    fn push(&mut self, half: Half, c: f64) {
        if c == 0.0 {
            return;
        }
        match &mut self.pending {
            Some((h, acc)) if *h == half => *acc += c,
            _ => {
                self.flush();
                self.pending = Some((half, c));
            }
        }
    }

    fn flush(&mut self) {
        match self.pending.take() {
            Some((Half::A, c)) => {
                self.op.apply(&self.p, &mut self.h);
                self.q.iter_mut().zip(&self.h).for_each(|(x, h)| *x += c * h);
            }
            Some((Half::B, c)) => {
                self.op.apply(&self.q, &mut self.h);
                self.p.iter_mut().zip(&self.h).for_each(|(x, h)| *x -= c * h);
            }
            None => {}
        }
    }

    fn step(&mut self, method: &SplittingMethod, tau: f64) {
        for (&a, &b) in method.a.iter().zip(&method.b) {
            self.push(Half::A, a * tau);
            self.push(Half::B, b * tau);
        }
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }

    fn state(&self) -> Vec<Complex64> {
        self.q.iter().zip(&self.p).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }
}

/// One step applied to `(q, p)` in place.
pub fn step(method: &SplittingMethod, op: &HamiltonianOperator, tau: f64, q: &mut [f64], p: &mut [f64]) -> Result<()> {
    let u: Vec<Complex64> = q.iter().zip(p.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
    let mut s = Stepper::new(op, &u);
    s.step(method, tau);
    s.flush();
    if !s.is_finite() {
        return Err(Error::Blowup { step: 1 });
    }
    q.copy_from_slice(&s.q);
    p.copy_from_slice(&s.p);
    Ok(())
}

/// Transformed coordinates `u~ = g^-1/2 q + i (eps g^-1/2 q + g^1/2 p)` per eigenmode.
struct Transform {
    vecs: DMatrix<f64>,
    /// `(g^-1/2, eps g^-1/2, g^1/2)` per mode.
    factors: Vec<(f64, f64, f64)>,
}

impl Transform {
    fn new(an: &Analyzer, op: &HamiltonianOperator, tau: f64) -> Result<Self> {
        let (vals, vecs) = op.eigen_decomposition()?;
        let factors = vals
            .iter()
            .map(|&w| {
                let pa = an.phase_amplitude(tau * w)?;
                let gs = pa.gamma.sqrt();
                Ok((1.0 / gs, pa.eps / gs, gs))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Transform { vecs, factors })
    }

    fn norm(&self, q: &[f64], p: &[f64]) -> f64 {
        let qh = self.vecs.tr_mul(&DVector::from_column_slice(q));
        let ph = self.vecs.tr_mul(&DVector::from_column_slice(p));
        let mut ss = 0.0;
        for ((&qi, &pi), &(gi, eg, gs)) in qh.iter().zip(ph.iter()).zip(&self.factors) {
            let re = gi * qi;
            let im = eg * qi + gs * pi;
            ss += re * re + im * im;
        }
        ss.sqrt()
    }
}

fn diagnostics(op: &HamiltonianOperator, s: &mut Stepper<'_>, transform: Option<&Transform>) -> Diagnostics {
    let n = s.q.len() as f64;
    let ss: f64 = s.q.iter().chain(&s.p).map(|v| v * v).sum();
    let mut energy = 0.0;
    op.apply(&s.q, &mut s.h);
    energy += s.q.iter().zip(&s.h).map(|(a, b)| a * b).sum::<f64>();
    op.apply(&s.p, &mut s.h);
    energy += s.p.iter().zip(&s.h).map(|(a, b)| a * b).sum::<f64>();
    Diagnostics {
        norm: (ss / n).sqrt(),
        norm_euclidean: ss.sqrt(),
        energy: energy / (2.0 * n),
        transformed_norm: transform.map(|t| t.norm(&s.q, &s.p)),
    }
}

/// Runs `n` steps of length `tau` from `u0`.
pub fn propagate_steps(
    method: &SplittingMethod,
    op: &HamiltonianOperator,
    u0: &[Complex64],
    tau: f64,
    n: usize,
    opts: &PropagateOptions,
) -> Result<PropagationRun> {
    if u0.len() != op.dim() {
        return Err(Error::InvalidInput(format!("state has {} entries, operator dimension is {}", u0.len(), op.dim())));
    }
    if u0.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }
    if !tau.is_finite() || tau < 0.0 {
        return Err(Error::InvalidInput(format!("step size must be finite and non-negative, got {tau}")));
    }
    let mut warnings = method.consistency_warnings();
    let an = Analyzer::new(&compose_k(method)?)?;
    let rho = op.rho_bound();
    let y_star = an.y_star();
    let stable = tau * rho < y_star;
    if !stable && n > 0 {
        if !opts.allow_unstable {
            return Err(Error::StabilityGate { tau_rho: tau * rho, y_star });
        }
        warnings.push(format!("stability gate overridden: tau*rho = {} >= y* = {y_star}", tau * rho));
    }
    let transform = if opts.transformed_norm && stable && op.dim() <= TRANSFORMED_NORM_LIMIT {
        match Transform::new(&an, op, tau) {
            Ok(t) => Some(t),
            Err(e) => {
                warnings.push(format!("transformed norm unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };

    let marks = opts.checkpoints.resolve(n);
    let mut s = Stepper::new(op, u0);
    let mut checkpoints = Vec::with_capacity(marks.len());
    let d0 = diagnostics(op, &mut s, transform.as_ref());
    checkpoints.push(Checkpoint { step: 0, t: 0.0, state: u0.to_vec(), diagnostics: d0 });
    for k in 1..=n {
        s.step(method, tau);
        let mark = marks.contains(&k);
        if mark || k == n {
            s.flush();
        }
        if !s.is_finite() {
            return Err(Error::Blowup { step: k });
        }
        if mark {
            let d = diagnostics(op, &mut s, transform.as_ref());
            checkpoints.push(Checkpoint { step: k, t: k as f64 * tau, state: s.state(), diagnostics: d });
        }
    }
    Ok(PropagationRun { method: method.clone(), tau, n_steps: n, rho, y_star, checkpoints, warnings })
}

/// Integrates to time `t` with `n = ceil(t rho / (m theta'))` steps.
pub fn propagate(
    method: &SplittingMethod,
    op: &HamiltonianOperator,
    u0: &[Complex64],
    t: f64,
    theta_prime: f64,
    opts: &PropagateOptions,
) -> Result<PropagationRun> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidInput(format!("t must be finite and non-negative, got {t}")));
    }
    if !(theta_prime > 0.0) {
        return Err(Error::InvalidInput(format!("theta_prime must be positive, got {theta_prime}")));
    }
    let n = step_count(t, op.rho_bound(), method.m, theta_prime);
    let tau = if n == 0 { 0.0 } else { t / n as f64 };
    propagate_steps(method, op, u0, tau, n, opts)
}

/// `||a - b||` under the given convention.
pub fn state_error(a: &[Complex64], b: &[Complex64], conv: NormConvention) -> f64 {
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    conv.norm(&diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::{builtin, leapfrog_concat};
    use crate::operator::random_symmetric;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(w: f64) -> HamiltonianOperator {
        HamiltonianOperator::diagonal(vec![w]).unwrap().with_known_spectral_radius(w)
    }

    #[test]
    fn leapfrog_scalar_step_is_k() {
        let lf = builtin("leapfrog").unwrap();
        let y = 0.7;
        let (mut q, mut p) = (vec![0.3], vec![-1.1]);
        step(&lf, &scalar(1.0), y, &mut q, &mut p).unwrap();
        assert!((q[0] - ((1.0 - y * y) * 0.3 + y * -1.1)).abs() < 1e-15);
        assert!((p[0] - (-y * 0.3 - 1.1)).abs() < 1e-15);
    }

    #[test]
    fn zero_coefficients_leave_state() {
        let m = SplittingMethod::new("zero", 2, 0, 1.0, vec![0.0; 3], vec![0.0; 3]).unwrap();
        let (mut q, mut p) = (vec![1.0, 2.0], vec![3.0, 4.0]);
        let op = HamiltonianOperator::diagonal(vec![1.0, 5.0]).unwrap();
        step(&m, &op, 0.3, &mut q, &mut p).unwrap();
        assert_eq!((q, p), (vec![1.0, 2.0], vec![3.0, 4.0]));
    }

    #[test]
    fn zero_time_is_identity() {
        let op = scalar(1.0);
        let u0 = vec![Complex64::new(0.6, 0.8)];
        let run = propagate(&builtin("leapfrog").unwrap(), &op, &u0, 0.0, 1.0, &Default::default()).unwrap();
        assert_eq!(run.n_steps, 0);
        assert_eq!(run.final_state(), &u0[..]);
    }

    #[test]
    fn leapfrog_phase_on_scalar_oscillator() {
        let lf = builtin("leapfrog").unwrap();
        let op = scalar(1.0);
        let u0 = vec![Complex64::new(1.0, 0.0)];
        let run = propagate(&lf, &op, &u0, 10.0, 0.5, &Default::default()).unwrap();
        assert_eq!(run.n_steps, 20);
        assert!((run.tau - 0.5).abs() < 1e-15);
        // Closed-form K(0.5)^20 by repeated 2x2 products.
        let y: f64 = 0.5;
        let k = [[1.0 - y * y, y], [-y, 1.0]];
        let (mut q, mut p) = (1.0, 0.0);
        for _ in 0..20 {
            (q, p) = (k[0][0] * q + k[0][1] * p, k[1][0] * q + k[1][1] * p);
        }
        let u = run.final_state()[0];
        assert!((u.re - q).abs() < 1e-13 && (u.im - p).abs() < 1e-13);
        // Accumulated phase n*phi(0.5) versus the exact t = 10.
        let phase = 20.0 * 2.0 * (0.25f64).asin();
        assert!((phase - 10.107_21).abs() < 1e-5);
        let tn: Vec<f64> = run.checkpoints.iter().map(|c| c.diagnostics.transformed_norm.unwrap()).collect();
        assert!(tn.iter().all(|v| (v - tn[0]).abs() < 1e-13), "{tn:?}");
    }

    #[test]
    fn fused_stream_matches_unfused_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_symmetric(6, &mut rng);
        let op = HamiltonianOperator::dense(h).unwrap();
        let method = leapfrog_concat(3).unwrap();
        let u0 = crate::operator::random_unit_vector(6, 3);
        let tau = 0.9 * 6.0 / op.rho_bound();
        let run = propagate_steps(&method, &op, &u0, tau, 17, &PropagateOptions::default()).unwrap();
        let mut q: Vec<f64> = u0.iter().map(|z| z.re).collect();
        let mut p: Vec<f64> = u0.iter().map(|z| z.im).collect();
        for _ in 0..17 {
            step(&method, &op, tau, &mut q, &mut p).unwrap();
        }
        for (z, (a, b)) in run.final_state().iter().zip(q.iter().zip(&p)) {
            assert!((z.re - a).abs() < 1e-12 && (z.im - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_and_blowup() {
        let lf = builtin("leapfrog").unwrap();
        let op = scalar(1.0);
        let u0 = vec![Complex64::new(1.0, 0.0)];
        assert!(matches!(
            propagate_steps(&lf, &op, &u0, 2.5, 10, &Default::default()),
            Err(Error::StabilityGate { .. })
        ));
        let opts = PropagateOptions { allow_unstable: true, ..Default::default() };
        match propagate_steps(&lf, &op, &u0, 2.5, 100_000, &opts) {
            Err(Error::Blowup { step }) => assert!(step > 1 && step < 100_000),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn step_count_rule() {
        assert_eq!(step_count(333.0, 1.8535 * 1.01, 30, 1.4), 15);
        assert_eq!(step_count(10.0, 1.0, 1, 0.5), 20);
        assert_eq!(step_count(0.0, 3.0, 1, 0.5), 0);
    }

    #[test]
    fn dyadic_checkpoints() {
        let set: Vec<usize> = Checkpoints::Dyadic(4).resolve(64).into_iter().collect();
        assert_eq!(set, vec![0, 8, 16, 32, 64]);
        let set: Vec<usize> = Checkpoints::Every(3).resolve(7).into_iter().collect();
        assert_eq!(set, vec![0, 3, 6, 7]);
    }
}
