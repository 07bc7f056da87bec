//! Step one: the stability polynomial `p` and its companion `q`.
//!
//! Everything is parametrized in `x = y/theta`. The Taylor coefficients of
//! `p` through `y^r` and of `q` below `y^r` are fixed, `q_{r+1..2r-1}` are
//! eliminated so that `s = p^2 + q^2 - 1 = O(y^(2r+2))`, and the lowest
//! remaining unknowns absorb the resonance conditions at the nodes. The
//! highest coefficients are left free for the optimizer.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::nelder_mead::{minimize, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::polyprop::{cos_taylor, golden_max, sin_taylor, Parity, ParityPolynomial};

pub const DEFAULT_LAMBDA: f64 = 0.1;
/// Resonance nodes move at most this far from `j*pi`.
pub const NODE_WINDOW: f64 = 0.25;

const SCAN_POINTS: usize = 8000;
const SCAN_EXTENT: f64 = 1.6;
const S_POINTS: usize = 6000;
const S_EXTENT: f64 = 3.0;
const GRID_POINTS: usize = 2000;
const FIT_POINTS: usize = 400;
/// `y*` below `Y_STAR_MARGIN * theta` is penalized.
const Y_STAR_MARGIN: f64 = 1.02;
/// Fraction of the iteration budget every start receives before only the
/// most promising ones continue.
const SCREEN_FRACTION: usize = 5;
const SURVIVORS: usize = 3;
const FIT_EXTENTS: [f64; 5] = [1.0, 1.05, 1.1, 1.15, 1.2];
const Q_SCALES: [f64; 2] = [1.0, 1.01];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignTarget {
    pub m: usize,
    pub r: usize,
    pub theta_prime: f64,
    /// Weight of the amplitude term in `mu_r + lambda nu_r`.
    pub lambda: f64,
}

impl DesignTarget {
    pub fn new(m: usize, r: usize, theta_prime: f64) -> Self {
        DesignTarget { m, r, theta_prime, lambda: DEFAULT_LAMBDA }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        DesignTarget { lambda, ..self }
    }

    /// `theta = m theta'`, the end of the design range in `y`.
    pub fn theta(&self) -> f64 {
        self.m as f64 * self.theta_prime
    }

    /// Number of interior resonances `l` with `l pi <= theta < (l+1) pi`.
    pub fn node_count(&self) -> usize {
        (self.theta() / PI).floor() as usize
    }

    /// Free parameters left for `p` and `q` after all constraints.
    pub fn free_counts(&self) -> Result<(usize, usize)> {
        self.validate()?;
        let l = self.node_count() as isize;
        let (m, r) = (self.m as isize, self.r as isize);
        let npf = m - r / 2 - 2 * l;
        let nqf = m + 1 - r - l;
        if npf < 0 || nqf < 0 {
            return Err(Error::Infeasible(format!(
                "m = {}, r = {} leave {npf} free p and {nqf} free q coefficients for {l} resonance nodes",
                self.m, self.r
            )));
        }
        Ok((npf as usize, nqf as usize))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Infeasible("m must be at least 1".into()));
        }
        if self.r % 2 == 1 || self.r > 2 * self.m {
            return Err(Error::Infeasible(format!("order r = {} must be even and at most 2m", self.r)));
        }
        if !(self.theta_prime > 0.0 && self.theta_prime < 2.0) {
            return Err(Error::Infeasible(format!("theta' = {} must lie in (0, 2)", self.theta_prime)));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidInput(format!("lambda = {} must lie in [0, 1)", self.lambda)));
        }
        Ok(())
    }
}

/// Result of step one, in the original variable `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct PqPair {
    pub p: ParityPolynomial,
    pub q: ParityPolynomial,
    /// Interior resonances `y_1 < ... < y_l` with `p(y_j) = (-1)^j`.
    pub nodes: Vec<f64>,
    /// `mu_r + lambda nu_r + penalties` at the optimum.
    pub objective: f64,
    pub mu: f64,
    pub nu: f64,
    pub y_star: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PqPair {
    /// `p^2 + q^2 - 1` with the sub-tangency coefficients (below `y^(2r+2)`) cleared.
    pub fn s(&self, r: usize) -> ParityPolynomial {
        let mut s = &(&self.p * &self.p) + &(&self.q * &self.q);
        s.set_coeff(0, s.coeff(0) - 1.0);
        s.zero_through(2 * r + 1);
        s
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * x + v)
}

/// Even part of a dense polynomial as a polynomial in `x^2`.
fn even_part(c: &[f64]) -> Vec<f64> {
    c.iter().step_by(2).copied().collect()
}

/// Odd part divided by `x`, as a polynomial in `x^2`.
fn odd_part(c: &[f64]) -> Vec<f64> {
    c.iter().skip(1).step_by(2).copied().collect()
}

fn horner_derivative(c: &[f64], x: f64) -> f64 {
    c.iter().enumerate().skip(1).rev().fold(0.0, |acc, (k, &v)| acc * x + k as f64 * v)
}

fn square_plus(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; 2 * p.len().max(q.len())];
    for poly in [p, q] {
        for (i, &a) in poly.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in poly.iter().enumerate() {
                s[i + j] += a * b;
            }
        }
    }
    s[0] -= 1.0;
    s
}

/// Minimum-norm least-squares solution, singular values below `rcond * max` dropped.
pub(crate) fn lstsq(a: DMatrix<f64>, b: &DVector<f64>, rcond: f64) -> Option<DVector<f64>> {
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    svd.solve(b, rcond * smax).ok()
}

/// Constraint layout of a target in the scaled variable.
pub(crate) struct Layout {
    pub m: usize,
    pub r: usize,
    pub l: usize,
    pub theta: f64,
    p_solved: Vec<usize>,
    p_free: Vec<usize>,
    q_solved: Vec<usize>,
    q_free: Vec<usize>,
    base_p: Vec<f64>,
    base_q: Vec<f64>,
}

/// Dense `p`, `q` and nodes in `x`.
#[derive(Clone, Debug)]
pub(crate) struct Built {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl Layout {
    pub fn new(target: &DesignTarget) -> Result<Self> {
        target.free_counts()?;
        let (m, r, l, theta) = (target.m, target.r, target.node_count(), target.theta());
        let p_unknown: Vec<usize> = (r + 2..=2 * m).step_by(2).collect();
        let q_unknown: Vec<usize> = (2 * r + 1..=2 * m + 1).step_by(2).collect();
        let mut base_p = vec![0.0; 2 * m + 1];
        for k in (0..=r).step_by(2) {
            base_p[k] = cos_taylor(k) * theta.powi(k as i32);
        }
        let mut base_q = vec![0.0; 2 * m + 2];
        for k in (1..r).step_by(2) {
            base_q[k] = sin_taylor(k) * theta.powi(k as i32);
        }
        Ok(Layout {
            m,
            r,
            l,
            theta,
            p_solved: p_unknown[..2 * l].to_vec(),
            p_free: p_unknown[2 * l..].to_vec(),
            q_solved: q_unknown[..l].to_vec(),
            q_free: q_unknown[l..].to_vec(),
            base_p,
            base_q,
        })
    }

    /// Parameter count: node offsets, then free `p`, then free `q`.
    pub fn dim(&self) -> usize {
        self.l + self.p_free.len() + self.q_free.len()
    }

    fn node_positions(&self, z: &[f64]) -> Vec<f64> {
        (0..self.l).map(|j| ((j + 1) as f64 * PI + z[j].clamp(-NODE_WINDOW, NODE_WINDOW)) / self.theta).collect()
    }

    fn build_p(&self, nodes: &[f64], free: &[f64]) -> Option<Vec<f64>> {
        let mut p = self.base_p.clone();
        for (&k, &v) in self.p_free.iter().zip(free) {
            p[k] = v;
        }
        let n = self.p_solved.len();
        if n > 0 {
            let mut a = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (j, &x) in nodes.iter().enumerate() {
                let target = if j % 2 == 0 { -1.0 } else { 1.0 };
                for (c, &k) in self.p_solved.iter().enumerate() {
                    a[(2 * j, c)] = x.powi(k as i32);
                    a[(2 * j + 1, c)] = k as f64 * x.powi(k as i32 - 1);
                }
                rhs[2 * j] = target - horner(&p, x);
                rhs[2 * j + 1] = -horner_derivative(&p, x);
            }
            let sol = a.lu().solve(&rhs)?;
            for (&k, &v) in self.p_solved.iter().zip(sol.iter()) {
                p[k] = v;
            }
        }
        p.iter().all(|v| v.is_finite()).then_some(p)
    }

    fn build_q(&self, p: &[f64], nodes: &[f64], free: &[f64]) -> Option<Vec<f64>> {
        let mut q = self.base_q.clone();
        let r = self.r;
        for kk in (r + 2..=2 * r).step_by(2) {
            let mut sum: f64 =
                (0..=kk).filter(|i| i % 2 == 0).map(|i| p.get(i).unwrap_or(&0.0) * p.get(kk - i).unwrap_or(&0.0)).sum();
            for i in (3..kk - 1).step_by(2) {
                sum += q[i] * q[kk - i];
            }
            q[kk - 1] = -sum / (2.0 * q[1]);
        }
        for (&k, &v) in self.q_free.iter().zip(free) {
            q[k] = v;
        }
        let n = self.q_solved.len();
        if n > 0 {
            let mut a = DMatrix::zeros(n, n);
            let mut rhs = DVector::zeros(n);
            for (j, &x) in nodes.iter().enumerate() {
                for (c, &k) in self.q_solved.iter().enumerate() {
                    a[(j, c)] = x.powi(k as i32);
                }
                rhs[j] = -horner(&q, x);
            }
            let sol = a.lu().solve(&rhs)?;
            for (&k, &v) in self.q_solved.iter().zip(sol.iter()) {
                q[k] = v;
            }
        }
        q.iter().all(|v| v.is_finite()).then_some(q)
    }

    pub fn build(&self, z: &[f64]) -> Option<Built> {
        let nodes = self.node_positions(z);
        let npf = self.p_free.len();
        let p = self.build_p(&nodes, &z[self.l..self.l + npf])?;
        let q = self.build_q(&p, &nodes, &z[self.l + npf..])?;
        Some(Built { p, q, nodes })
    }

    /// Initial parameters: nodes at `j pi`, free coefficients fitted to
    /// `cos(theta x)` and `q_scale sin(theta x)` on `[0, extent]`.
    fn initial_guess(&self, extent: f64, q_scale: f64) -> Option<Vec<f64>> {
        let mut z = vec![0.0; self.dim()];
        let xs: Vec<f64> = (0..FIT_POINTS).map(|i| extent * i as f64 / (FIT_POINTS - 1) as f64).collect();
        let nodes = self.node_positions(&z);
        let (npf, nqf) = (self.p_free.len(), self.q_free.len());

        // p and q are affine in their free coefficients, so a linear fit is exact.
        let fit =
            |eval: &dyn Fn(&[f64]) -> Option<Vec<f64>>, n: usize, target: &dyn Fn(f64) -> f64| -> Option<Vec<f64>> {
                if n == 0 {
                    return Some(Vec::new());
                }
                let base = eval(&vec![0.0; n])?;
                let base_vals: Vec<f64> = xs.iter().map(|&x| horner(&base, x)).collect();
                let mut a = DMatrix::zeros(xs.len(), n);
                for c in 0..n {
                    let mut e = vec![0.0; n];
                    e[c] = 1.0;
                    let col = eval(&e)?;
                    for (i, &x) in xs.iter().enumerate() {
                        a[(i, c)] = horner(&col, x) - base_vals[i];
                    }
                }
                let rhs = DVector::from_iterator(xs.len(), xs.iter().zip(&base_vals).map(|(&x, b)| target(x) - b));
                lstsq(a, &rhs, 1e-14).map(|v| v.iter().copied().collect())
            };

        let theta = self.theta;
        let tp = fit(&|f| self.build_p(&nodes, f), npf, &|x| (theta * x).cos())?;
        let p = self.build_p(&nodes, &tp)?;
        let tq = fit(&|f| self.build_q(&p, &nodes, f), nqf, &|x| q_scale * (theta * x).sin())?;
        z[self.l..self.l + npf].copy_from_slice(&tp);
        z[self.l + npf..].copy_from_slice(&tq);
        Some(z)
    }
}

/// Objective terms for one parameter point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Evaluation {
    pub mu: f64,
    pub nu: f64,
    pub y_star: f64,
    pub s_min: f64,
    pub penalty: f64,
    pub objective: f64,
}

/// Grids and reference data for the objective; independent of the parameters.
pub(crate) struct Objective {
    layout: Layout,
    lambda: f64,
    scan: Vec<f64>,
    /// Scan points below the penalty threshold; enough while optimizing.
    scan_short: usize,
    /// `(x^2, x^(2r+2))` on the `s` grid.
    s_grid: Vec<(f64, f64)>,
    grid: Vec<f64>,
    /// `sum_{k > 2m} cos_k y^k` at grid points with `y < 1`.
    cos_tail: Vec<f64>,
    cos_ref: Vec<f64>,
}

impl Objective {
    pub fn new(target: &DesignTarget) -> Result<Self> {
        let layout = Layout::new(target)?;
        let theta = layout.theta;
        let scan: Vec<f64> = (1..=SCAN_POINTS).map(|i| SCAN_EXTENT * i as f64 / SCAN_POINTS as f64).collect();
        let scan_short = scan.iter().take_while(|&&x| x <= Y_STAR_MARGIN).count() + 1;
        let tangency = 2 * layout.r as i32 + 2;
        let s_grid = (1..=S_POINTS)
            .map(|i| {
                let x = S_EXTENT * i as f64 / S_POINTS as f64;
                (x * x, x.powi(tangency))
            })
            .collect();
        let grid: Vec<f64> = (1..=GRID_POINTS).map(|i| i as f64 / GRID_POINTS as f64).collect();
        let top = 2 * layout.m;
        let cos_tail = grid
            .iter()
            .map(|&x| {
                let y = theta * x;
                if y >= 1.0 {
                    return 0.0;
                }
                (top + 2..top + 60).step_by(2).map(|k| cos_taylor(k) * y.powi(k as i32)).sum()
            })
            .collect();
        let cos_ref = (0..=top).map(|k| if k % 2 == 0 { cos_taylor(k) * theta.powi(k as i32) } else { 0.0 }).collect();
        Ok(Objective { layout, lambda: target.lambda, scan, scan_short, s_grid, grid, cos_tail, cos_ref })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Objective terms; `full_scan` locates `y*` beyond the penalty threshold.
    pub fn evaluate(&self, b: &Built, full_scan: bool) -> Evaluation {
        let (r, theta) = (self.layout.r, self.layout.theta);
        let mut s = square_plus(&b.p, &b.q);
        s.iter_mut().take(2 * r + 2).for_each(|v| *v = 0.0);
        // All three are even or odd, so Horner runs in x^2.
        let p2 = even_part(&b.p);
        let p2_abs: Vec<f64> = p2.iter().map(|v| v.abs()).collect();
        let q2 = odd_part(&b.q);
        let s2 = even_part(&s);
        let s2_shift = s2[r + 1..].to_vec();

        let scan = if full_scan { &self.scan[..] } else { &self.scan[..self.scan_short.min(self.scan.len())] };
        let violation = scan.iter().find(|&&x| {
            let x2 = x * x;
            horner(&p2, x2).abs() > 1.0 + 1e-10 * horner(&p2_abs, x2)
        });
        let y_star = violation.map_or(if full_scan { f64::INFINITY } else { SCAN_EXTENT * theta }, |x| x * theta);

        let (mut s_min, mut s_floor) = (f64::INFINITY, f64::INFINITY);
        let vs: Vec<f64> = self.s_grid.iter().map(|&(x2, _)| horner(&s2_shift, x2)).collect();
        for (&v, &(_, xt)) in vs.iter().zip(&self.s_grid) {
            s_min = s_min.min(v);
            s_floor = s_floor.min(v * xt);
        }
        // A near-tangency can dip below zero between grid points.
        for i in 1..vs.len().saturating_sub(1) {
            if vs[i] <= vs[i - 1] && vs[i] <= vs[i + 1] {
                let w = golden_max(|w| -horner(&s2_shift, w), self.s_grid[i - 1].0, self.s_grid[i + 1].0, 1e-12);
                s_min = s_min.min(horner(&s2_shift, w));
            }
        }

        let mut h2: Vec<f64> = p2.iter().map(|v| -v).collect();
        h2[0] = 0.0;
        let dp: Vec<f64> =
            b.p.iter().zip(&self.cos_ref).enumerate().map(|(k, (p, c))| if k > r { p - c } else { 0.0 }).collect();
        let dp2 = even_part(&dp);

        let (mut mu, mut nu) = (0.0f64, 0.0f64);
        let mut branch = 0usize;
        let mut q_prev = 0.0;
        for (i, &x) in self.grid.iter().enumerate() {
            let y = theta * x;
            let x2 = x * x;
            let qv = x * horner(&q2, x2);
            if i > 0 && qv * q_prev < 0.0 {
                branch += 1;
            }
            q_prev = qv;
            let hv = horner(&h2, x2);
            let u = hv * (2.0 - hv);
            let sign = if branch % 2 == 0 { 1.0 } else { -1.0 };
            let phi = branch as f64 * PI + u.max(0.0).sqrt().atan2(sign * (1.0 - hv));
            let err = if y < 1.0 {
                let d = horner(&dp2, x2) - self.cos_tail[i];
                2.0 * (-d / (2.0 * ((phi + y) / 2.0).sin())).clamp(-1.0, 1.0).asin()
            } else {
                phi - y
            };
            let xr = x.powi(r as i32);
            mu = mu.max(err.abs() / y / xr);
            let w = horner(&s2, x2) / u.max(1e-300);
            let delta = 2.0 * w / (1.0 + (1.0 + w).sqrt());
            let e = (delta * (1.0 + delta / 2.0 + w.max(0.0).sqrt())).max(0.0).sqrt();
            nu = nu.max(e / xr);
        }

        let mut penalty = 0.0;
        if y_star < Y_STAR_MARGIN * theta {
            penalty += 10.0 * (Y_STAR_MARGIN * theta - y_star) / theta + 1.0;
        }
        if s_min < 0.0 {
            penalty += 1.0 + (-s_min).min(1e6);
        }
        if s_floor < -1e-14 {
            penalty += 1.0;
        }
        let objective = mu + self.lambda * nu + penalty;
        let objective = if objective.is_finite() { objective } else { f64::INFINITY };
        Evaluation { mu, nu, y_star, s_min, penalty, objective }
    }

    fn cost(&self, z: &[f64]) -> f64 {
        match self.layout.build(z) {
            Some(b) => self.evaluate(&b, false).objective.ln(),
            None => f64::INFINITY,
        }
    }
}

fn to_y(dense_x: &[f64], parity: Parity, theta: f64) -> Result<ParityPolynomial> {
    let dense: Vec<f64> = dense_x
        .iter()
        .enumerate()
        .map(|(k, &v)| if parity.admits(k) { v / theta.powi(k as i32) } else { 0.0 })
        .collect();
    ParityPolynomial::from_dense(parity, &dense)
}

/// Multi-start local minimization of `mu_r(theta) + lambda nu_r(theta)` over
/// pairs satisfying the Taylor, tangency and resonance conditions.
pub fn optimize_pq(target: &DesignTarget) -> Result<PqPair> {
    optimize_pq_with(target, &NelderMeadOptions::default())
}

pub fn optimize_pq_with(target: &DesignTarget, opts: &NelderMeadOptions) -> Result<PqPair> {
    let objective = Objective::new(target)?;
    let layout = objective.layout();
    let starts: Vec<Vec<f64>> = FIT_EXTENTS
        .iter()
        .flat_map(|&e| Q_SCALES.iter().map(move |&s| (e, s)))
        .filter_map(|(e, s)| layout.initial_guess(e, s))
        .collect();
    if starts.is_empty() {
        return Err(Error::Infeasible("no initial guess satisfies the resonance conditions".into()));
    }
    let screen = NelderMeadOptions { max_iter: opts.max_iter / SCREEN_FRACTION, ..*opts };
    let mut runs: Vec<_> = starts.par_iter().map(|z0| minimize(|z| objective.cost(z), z0, &screen)).collect();
    runs.sort_by(|a, b| a.f.total_cmp(&b.f));
    let rest = NelderMeadOptions { max_iter: opts.max_iter - screen.max_iter, ..*opts };
    let runs: Vec<_> = runs
        .par_iter()
        .take(SURVIVORS)
        .map(|run| {
            if run.converged || !run.f.is_finite() {
                return run.clone();
            }
            let mut next = minimize(|z| objective.cost(z), &run.x, &rest);
            next.iterations += run.iterations;
            if next.f > run.f {
                next.x = run.x.clone();
                next.f = run.f;
            }
            next
        })
        .collect();
    let best = runs
        .iter()
        .filter(|r| r.f.is_finite())
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .ok_or_else(|| Error::Infeasible("every start produced a singular node system".into()))?;
    let built = layout.build(&best.x).ok_or_else(|| Error::Infeasible("optimum is singular".into()))?;
    let eval = objective.evaluate(&built, true);

    let theta = layout.theta;
    let mut warnings = Vec::new();
    if !best.converged {
        warnings.push(format!("optimizer stopped after {} iterations without converging", best.iterations));
    }
    if eval.s_min < 0.0 {
        return Err(Error::Infeasible(format!("best pair violates s >= 0: min s/x^(2r+2) = {:e}", eval.s_min)));
    }
    if eval.penalty > 0.0 {
        warnings.push(format!("objective carries a constraint penalty of {}", eval.penalty));
    }
    if eval.y_star < theta {
        warnings.push(format!("y* = {} is below theta = {theta}", eval.y_star));
    }
    let pair = PqPair {
        p: to_y(&built.p, Parity::Even, theta)?,
        q: to_y(&built.q, Parity::Odd, theta)?,
        nodes: built.nodes.iter().map(|x| x * theta).collect(),
        objective: eval.objective,
        mu: eval.mu,
        nu: eval.nu,
        y_star: eval.y_star,
        converged: best.converged,
        warnings,
    };
    Ok(pair)
}

/// Violations of the pair conditions: Taylor match, resonance, `s > 0` away from nodes.
pub fn check_pq(pair: &PqPair, target: &DesignTarget) -> Vec<String> {
    let mut out = Vec::new();
    let r = target.r;
    for k in 0..=r {
        let (have, want) = if k % 2 == 0 { (pair.p.coeff(k), cos_taylor(k)) } else { (pair.q.coeff(k), sin_taylor(k)) };
        if (have - want).abs() > 1e-10 * want.abs().max(1.0) {
            out.push(format!("Taylor coefficient y^{k}: {have} vs {want}"));
        }
    }
    for (j, &y) in pair.nodes.iter().enumerate() {
        let want = if j % 2 == 0 { -1.0 } else { 1.0 };
        if (pair.p.eval(y) - want).abs() > 1e-10 {
            out.push(format!("p(y_{}) = {} differs from {want}", j + 1, pair.p.eval(y)));
        }
        if pair.q.eval(y).abs() > 1e-10 * pair.q.eval_abs(y).max(1.0) {
            out.push(format!("q(y_{}) = {:e} is not zero", j + 1, pair.q.eval(y)));
        }
    }
    let s = pair.s(r);
    if s.leading() <= 0.0 && !s.is_zero() {
        out.push(format!("leading coefficient of s is {}", s.leading()));
    }
    let theta = target.theta();
    let n = 4000;
    for i in 1..=n {
        let y = 1.5 * theta * i as f64 / n as f64;
        let near_node = pair.nodes.iter().any(|&yj| (y - yj).abs() < 1e-3 * theta);
        let v = s.eval(y);
        if (v < 0.0 || (v == 0.0 && !near_node)) && v.abs() > 1e-12 * s.eval_abs(y) {
            out.push(format!("s({y}) = {v:e} is not positive"));
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn horner_abs(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &v| acc * x + v.abs())
    }

    #[test]
    fn leapfrog_like_pair_without_free_parameters() {
        let t = DesignTarget::new(1, 2, 0.5);
        assert_eq!(t.free_counts().unwrap(), (0, 0));
        let pair = optimize_pq(&t).unwrap();
        assert!((pair.p.coeff(2) + 0.5).abs() < 1e-15);
        assert!((pair.q.coeff(1) - 1.0).abs() < 1e-15);
        assert!((pair.q.coeff(3) + 0.125).abs() < 1e-15);
        let s = pair.s(2);
        assert!((s.coeff(6) - 1.0 / 64.0).abs() < 1e-15);
        assert!(check_pq(&pair, &t).is_empty());
    }

    #[test]
    fn infeasible_targets() {
        assert!(matches!(DesignTarget::new(2, 6, 0.5).free_counts(), Err(Error::Infeasible(_))));
        assert!(matches!(DesignTarget::new(3, 3, 0.5).validate(), Err(Error::Infeasible(_))));
        assert!(matches!(DesignTarget::new(3, 2, 2.0).validate(), Err(Error::Infeasible(_))));
        // theta = 4 > pi needs one node and two extra p unknowns.
        assert!(DesignTarget::new(2, 2, 2.0 - 1e-9).free_counts().is_err());
        assert_eq!(DesignTarget::new(10, 6, 1.0).free_counts().unwrap(), (1, 2));
    }

    #[test]
    fn constraints_hold_at_random_parameters() {
        use rand::{Rng, SeedableRng};
        let t = DesignTarget::new(10, 6, 1.0);
        let layout = Layout::new(&t).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let z0 = layout.initial_guess(1.0, 1.0).unwrap();
        for _ in 0..20 {
            let z: Vec<f64> =
                z0.iter().map(|v| v * (1.0 + rng.random_range(-0.05..0.05)) + rng.random_range(-0.01..0.01)).collect();
            let b = layout.build(&z).unwrap();
            for (j, &x) in b.nodes.iter().enumerate() {
                let want = if j % 2 == 0 { -1.0 } else { 1.0 };
                assert!((horner(&b.p, x) - want).abs() < 1e-10);
                assert!(horner_derivative(&b.p, x).abs() < 1e-9);
                assert!(horner(&b.q, x).abs() < 1e-10);
            }
            let s = square_plus(&b.p, &b.q);
            let scale = horner_abs(&s, 1.0);
            for k in 0..2 * t.r + 2 {
                assert!(s[k].abs() < 1e-12 * scale, "s_{k} = {}", s[k]);
            }
        }
    }
}
