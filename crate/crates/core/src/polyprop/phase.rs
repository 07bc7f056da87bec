//! Stability threshold, phase and amplitude functions of `K(y)`.

use std::f64::consts::PI;

use super::poly::{cos_taylor, sin_taylor, Parity, ParityPolynomial};
use super::PropagationMatrix;
use crate::error::{Error, Result};

/// Relative significance threshold used when reading orders off coefficients.
const ORDER_TOL: f64 = 1e-9;
/// `|sin(phi)|` below this counts as a resonance.
const RESONANCE_TOL: f64 = 1e-13;
/// Relative distance to `+-I` accepted at a resonance.
const IDENTITY_TOL: f64 = 1e-6;

/// Phase and amplitude quantities at one point `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseAmplitude {
    pub phi: f64,
    pub eps: f64,
    pub gamma: f64,
    pub delta: f64,
    pub enorm: f64,
}

/// Precomputed analysis of one propagation matrix.
#[derive(Clone, Debug)]
pub struct Analyzer {
    p: ParityPolynomial,
    q: ParityPolynomial,
    /// `1 - p`, without constant term.
    h: ParityPolynomial,
    /// `d^2 + e^2 = p^2 + q^2 - 1`.
    s: ParityPolynomial,
    d: Option<ParityPolynomial>,
    k2: Option<ParityPolynomial>,
    stages: usize,
    y_star: f64,
    nodes: Vec<f64>,
    phase_order: usize,
    phase_lead: f64,
    amp_order: Option<usize>,
    amp_lead: f64,
    y_switch: f64,
}

impl Analyzer {
    pub fn new(k: &PropagationMatrix) -> Result<Self> {
        for (i, e) in k.entries().iter().enumerate() {
            if !e.is_finite() {
                return Err(Error::NonFinite(format!("entry k{} of K", i + 1)));
            }
        }
        let p = k.stability_polynomial();
        let q = k.q_polynomial();
        let stages = stage_scale(&p, &q);
        let y = stages as f64;
        let mut d = k.d_polynomial();
        let mut e = k.e_polynomial();
        let o = lowest_significant(&d, y).into_iter().chain(lowest_significant(&e, y)).min();
        if let Some(o) = o {
            if o > 0 {
                d.zero_through(o - 1);
                e.zero_through(o - 1);
            }
        } else {
            d = ParityPolynomial::zero(Parity::Even);
            e = ParityPolynomial::zero(Parity::Odd);
        }
        let s = &(&d * &d) + &(&e * &e);
        Self::build(p, q, s, Some(d), Some(k.k2.clone()), stages)
    }

    /// Analysis from `p`, `q` and `s = p^2 + q^2 - 1` alone. `eps` and `gamma`
    /// are unavailable; everything else matches [`Analyzer::new`].
    pub fn from_pq(p: ParityPolynomial, q: ParityPolynomial, s: ParityPolynomial) -> Result<Self> {
        if p.parity() != Parity::Even || (!q.is_zero() && q.parity() != Parity::Odd) {
            return Err(Error::Parity("p must be even and q odd".into()));
        }
        if !s.is_zero() && s.parity() != Parity::Even {
            return Err(Error::Parity("s must be even".into()));
        }
        if !(p.is_finite() && q.is_finite() && s.is_finite()) {
            return Err(Error::NonFinite("p, q or s".into()));
        }
        let stages = stage_scale(&p, &q);
        Self::build(p, q, s, None, None, stages)
    }

    fn build(
        p: ParityPolynomial,
        q: ParityPolynomial,
        s: ParityPolynomial,
        d: Option<ParityPolynomial>,
        k2: Option<ParityPolynomial>,
        stages: usize,
    ) -> Result<Self> {
        if (p.coeff(0) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("p(0) = {} differs from 1", p.coeff(0))));
        }
        let mut h = p.scale(-1.0);
        h.zero_through(0);
        let y = stages as f64;

        let (phase_order, phase_lead) = phase_order_of(&p, y);
        let s_low = s.lowest_power();
        let amp_order = s_low.map(|k| (k / 2).saturating_sub(1));
        let amp_lead = s_low.map(|k| s.coeff(k).abs().sqrt()).unwrap_or(0.0);

        let mut an = Analyzer {
            p,
            q,
            h,
            s,
            d,
            k2,
            stages,
            y_star: f64::INFINITY,
            nodes: Vec::new(),
            phase_order,
            phase_lead,
            amp_order,
            amp_lead,
            y_switch: 1.0,
        };
        an.y_star = an.scan_threshold()?;
        let node_limit = an.y_star.min(an.scan_limit());
        an.nodes = an.find_nodes(node_limit);
        let first = an.nodes.first().copied().unwrap_or(f64::INFINITY);
        an.y_switch = 1.0f64.min(0.5 * first).min(0.5 * an.y_star);
        Ok(an)
    }

    pub fn p(&self) -> &ParityPolynomial {
        &self.p
    }

    pub fn q(&self) -> &ParityPolynomial {
        &self.q
    }

    pub fn s(&self) -> &ParityPolynomial {
        &self.s
    }

    /// Stage scale used for scans and order detection.
    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn y_star(&self) -> f64 {
        self.y_star
    }

    /// Resonance points `0 < y_1 < y_2 < ...` below `y*` where `sin(phi)` vanishes.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `r` such that `phi(y) - y = O(y^(r+1))`.
    pub fn phase_order(&self) -> usize {
        self.phase_order
    }

    /// `k` such that `||E(y)|| = O(y^k)`; `None` when `E` vanishes identically.
    pub fn amplitude_order(&self) -> Option<usize> {
        self.amp_order
    }

    /// Order of the method: the smaller of the phase and amplitude orders.
    pub fn order(&self) -> usize {
        self.amp_order.map_or(self.phase_order, |a| a.min(self.phase_order))
    }

    /// Leading coefficient `c` of `phi(y)/y - 1 ~ c y^r`.
    pub fn phase_leading(&self) -> f64 {
        self.phase_lead
    }

    fn scan_limit(&self) -> f64 {
        4.0 * self.stages as f64
    }

    fn scan_step(&self) -> f64 {
        1e-4 * 2.0 * self.stages as f64
    }

    fn violates(&self, y: f64) -> bool {
        let v = self.p.eval(y);
        !v.is_finite() || v.abs() > 1.0 + 1e-10 * self.p.eval_abs(y)
    }

    /// `K(y)` is `+-I` to relative tolerance.
    fn is_pm_identity(&self, y: f64) -> bool {
        let pv = self.p.eval(y);
        let sign = pv.signum();
        let scale = self.p.eval_abs(y).max(self.q.eval_abs(y)).max(1.0);
        let tol = IDENTITY_TOL * scale;
        (pv - sign).abs() <= tol && self.q.eval(y).abs() <= tol && self.s.eval(y).max(0.0).sqrt() <= tol
    }

    fn scan_threshold(&self) -> Result<f64> {
        let h = self.scan_step();
        let n = (self.scan_limit() / h).ceil() as usize;
        let mut a_prev2 = 1.0;
        let mut a_prev = 1.0;
        for i in 1..=n {
            let y = i as f64 * h;
            let pv = self.p.eval(y);
            if !pv.is_finite() {
                return Err(Error::NonFinite(format!("p({y})")));
            }
            if self.violates(y) {
                return Ok(bisect(|x| self.violates(x), (i - 1) as f64 * h, y, 1e-10));
            }
            let a = pv.abs();
            if i >= 2 && a_prev >= a_prev2 && a_prev > a && a_prev > 1.0 - 1e-4 {
                let lo = (i - 2) as f64 * h;
                let yt = golden_max(|x| self.p.eval(x).abs(), lo, y, 1e-13);
                if !self.is_pm_identity(yt) {
                    return Ok(yt);
                }
            }
            a_prev2 = a_prev;
            a_prev = a;
        }
        Ok(f64::INFINITY)
    }

    fn find_nodes(&self, limit: f64) -> Vec<f64> {
        if self.q.is_zero() || !(limit > 0.0) {
            return Vec::new();
        }
        let h = self.scan_step();
        let n = (limit / h).floor() as usize;
        let mut nodes = Vec::new();
        let mut prev = self.q.eval(h);
        for i in 2..=n {
            let y = i as f64 * h;
            let v = self.q.eval(y);
            if v == 0.0 {
                nodes.push(y);
            } else if prev != 0.0 && v.signum() != prev.signum() {
                let lo = (i - 1) as f64 * h;
                let sign_lo = prev.signum();
                nodes.push(bisect(|x| self.q.eval(x).signum() != sign_lo, lo, y, 1e-15 * y));
            }
            prev = v;
        }
        nodes
    }

    /// Largest `y` with `|p| <= 1 + tol` on `[0, y]`.
    pub fn practical_threshold(&self, tol: f64) -> f64 {
        let h = self.scan_step();
        let n = (self.scan_limit() / h).ceil() as usize;
        let bad = |y: f64| self.p.eval(y).abs() > 1.0 + tol;
        for i in 1..=n {
            let y = i as f64 * h;
            if bad(y) {
                return bisect(bad, (i - 1) as f64 * h, y, 1e-10);
            }
        }
        f64::INFINITY
    }

    fn branch(&self, y: f64) -> usize {
        self.nodes.partition_point(|&n| n < y)
    }

    /// `phi(y)` and `sin(phi(y))` for `y >= 0`.
    fn phi_and_sin(&self, y: f64) -> (f64, f64) {
        let l = self.branch(y);
        phase_from(self.p.eval(y), self.h.eval(y), l)
    }

    /// `phi(y)`, continuous and odd, with `phi(y_j) = j*pi` at resonances.
    pub fn phi(&self, y: f64) -> f64 {
        let (phi, _) = self.phi_and_sin(y.abs());
        phi.copysign(y)
    }

    /// `phi(y) - y`, accurate for small `y`.
    pub fn phase_error(&self, y: f64) -> f64 {
        let ay = y.abs();
        if ay == 0.0 {
            return 0.0;
        }
        let (phi, _) = self.phi_and_sin(ay);
        let err = if ay < self.y_switch {
            let dv = self.cos_deviation(ay);
            2.0 * (-dv / (2.0 * (0.5 * (phi + ay)).sin())).clamp(-1.0, 1.0).asin()
        } else {
            phi - ay
        };
        err.copysign(y)
    }

    /// `p(y) - cos(y)` summed from the coefficient differences above the phase order.
    fn cos_deviation(&self, y: f64) -> f64 {
        let deg = self.p.degree().unwrap_or(0);
        let y2 = y * y;
        let mut acc = 0.0;
        let mut k = self.phase_order + 2;
        let mut yk = y.powi(k as i32);
        loop {
            let term = (self.p.coeff(k) - cos_taylor(k)) * yk;
            acc += term;
            if k > deg && (term.abs() <= 1e-18 * acc.abs() || yk == 0.0 || k > deg + 400) {
                break;
            }
            k += 2;
            yk *= y2;
        }
        acc
    }

    /// `w = s/sin(phi)^2`, the squared amplitude distortion.
    fn w_at(&self, y: f64) -> f64 {
        let hv = self.h.eval(y);
        let u = hv * (2.0 - hv);
        let sv = self.s.eval(y).max(0.0);
        if sv == 0.0 {
            return 0.0;
        }
        if u <= 1e-300 {
            // At a resonance both vanish; take the one-sided limit.
            let yy = y * (1.0 - 1e-7);
            let hv = self.h.eval(yy);
            return self.s.eval(yy).max(0.0) / (hv * (2.0 - hv)).max(1e-300);
        }
        sv / u
    }

    /// `||E(y)||` in the spectral norm.
    pub fn enorm(&self, y: f64) -> f64 {
        let ay = y.abs();
        if ay == 0.0 {
            return 0.0;
        }
        delta_enorm(self.w_at(ay)).1
    }

    /// Phase and amplitude functions at `y`, for `|y| < y*`.
    pub fn phase_amplitude(&self, y: f64) -> Result<PhaseAmplitude> {
        if !y.is_finite() {
            return Err(Error::NonFinite(format!("y = {y}")));
        }
        if y == 0.0 {
            return Ok(PhaseAmplitude { phi: 0.0, eps: 0.0, gamma: 1.0, delta: 0.0, enorm: 0.0 });
        }
        let ay = y.abs();
        if ay >= self.y_star {
            return Err(Error::Unstable { y, y_star: self.y_star });
        }
        let (Some(d), Some(k2)) = (&self.d, &self.k2) else {
            return Err(Error::InvalidInput("eps and gamma need the full matrix K".into()));
        };
        let (phi, sinphi) = self.phi_and_sin(ay);
        let (eps, gamma, w) = if sinphi.abs() < RESONANCE_TOL {
            if !self.is_pm_identity(ay) {
                return Err(Error::NearResonance { y });
            }
            (0.0, 1.0, self.w_at(ay))
        } else {
            (d.eval(ay) / sinphi, k2.eval(ay) / sinphi, self.w_at(ay))
        };
        let (delta, enorm) = delta_enorm(w);
        let sign = y.signum();
        Ok(PhaseAmplitude { phi: sign * phi, eps: sign * eps, gamma, delta, enorm })
    }

    /// Limit of `|phi(y)/y - 1| (theta/y)^k` as `y -> 0`.
    pub(crate) fn mu_limit(&self, theta: f64, k: usize) -> f64 {
        match k.cmp(&self.phase_order) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => self.phase_lead.abs() * theta.powi(k as i32),
            std::cmp::Ordering::Greater => f64::INFINITY,
        }
    }

    /// Limit of `||E(y)|| (theta/y)^k` as `y -> 0`.
    pub(crate) fn nu_limit(&self, theta: f64, k: usize) -> f64 {
        let Some(a) = self.amp_order else {
            return 0.0;
        };
        match k.cmp(&a) {
            std::cmp::Ordering::Less => 0.0,
            std::cmp::Ordering::Equal => {
                let p2 = self.p.coeff(2);
                self.amp_lead * theta.powi(k as i32) / (-2.0 * p2).sqrt()
            }
            std::cmp::Ordering::Greater => f64::INFINITY,
        }
    }
}

/// `phi` on branch `l` from `p` and `h = 1 - p`, plus `sin(phi)`.
pub(crate) fn phase_from(p: f64, h: f64, l: usize) -> (f64, f64) {
    let su = (h * (2.0 - h)).max(0.0).sqrt();
    let sgn = if l % 2 == 0 { 1.0 } else { -1.0 };
    (l as f64 * PI + su.atan2(sgn * p), sgn * su)
}

/// `delta` and `||E||` from `w = s/sin(phi)^2`.
pub(crate) fn delta_enorm(w: f64) -> (f64, f64) {
    let w = w.max(0.0);
    let delta = 2.0 * w / (1.0 + (1.0 + w).sqrt());
    let enorm = (delta * (1.0 + 0.5 * delta + w.sqrt())).max(0.0).sqrt();
    (delta, enorm)
}

/// Natural length scale of `K`: half the degree of the leading even entry.
fn stage_scale(p: &ParityPolynomial, q: &ParityPolynomial) -> usize {
    let dp = p.degree().unwrap_or(0) / 2;
    let dq = q.degree().map_or(0, |d| d / 2);
    dp.max(dq).max(1)
}

/// Lowest power whose coefficient is significant at the scale `y`.
fn lowest_significant(poly: &ParityPolynomial, y: f64) -> Option<usize> {
    let deg = poly.degree()?;
    (0..=deg).find(|&k| {
        let c = poly.coeff(k);
        let reference = match poly.parity() {
            Parity::Even => cos_taylor(k),
            Parity::Odd => sin_taylor(k),
        };
        c != 0.0 && c.abs() * y.powi(k as i32) > ORDER_TOL * (reference.abs() * y.powi(k as i32)).max(1.0)
    })
}

/// Phase order `r` and the leading coefficient of `phi(y)/y - 1`.
fn phase_order_of(p: &ParityPolynomial, y: f64) -> (usize, f64) {
    let deg = p.degree().unwrap_or(0);
    let mut k = 2;
    loop {
        let ck = cos_taylor(k);
        let yk = y.powi(k as i32);
        let dev = p.coeff(k) - ck;
        if dev.abs() * yk > ORDER_TOL * (ck.abs() * yk).max(1.0) || k > deg + 2 {
            let r = k - 2;
            let lead = if r == 0 {
                let p2 = p.coeff(2);
                if p2 < 0.0 {
                    (-2.0 * p2).sqrt() - 1.0
                } else {
                    f64::NAN
                }
            } else {
                -dev
            };
            return (r, lead);
        }
        k += 2;
    }
}

/// Bisection for the boundary of `bad` on `[lo, hi]` with `bad(hi)` true.
pub(crate) fn bisect(bad: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if bad(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for a maximizer of `f` on `[lo, hi]`.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..300 {
        if hi - lo <= rel_tol * hi.abs().max(1e-300) {
            break;
        }
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        x1
    } else {
        x2
    }
}
