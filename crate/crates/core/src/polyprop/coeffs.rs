//! Error coefficients `mu_k(theta)`, `nu_k(theta)` and the sampled stability report.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::phase::{golden_max, Analyzer};
use crate::error::{Error, Result};

/// Minimum number of grid points for the suprema.
const MIN_GRID: usize = 20_000;
/// Grid points per stage.
const GRID_PER_STAGE: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorCoefficients {
    pub theta: f64,
    pub mu: BTreeMap<usize, f64>,
    pub nu: BTreeMap<usize, f64>,
    /// Set when some requested `k` exceeds the detected order.
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub y: f64,
    pub p: f64,
    pub q: f64,
    pub phi: f64,
    pub eps: f64,
    pub gamma: f64,
    pub delta: f64,
    pub enorm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub y_star: f64,
    pub theta: f64,
    pub samples: Vec<Sample>,
    pub mu: BTreeMap<usize, f64>,
    pub nu: BTreeMap<usize, f64>,
    /// Phase order: `phi(y) - y = O(y^(order_estimate + 1))`.
    pub order_estimate: usize,
    pub amplitude_order: Option<usize>,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    /// Header, one row per sample, then `#`-prefixed summary lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "y,p,q,phi,eps,gamma,delta,Enorm")?;
        for s in &self.samples {
            writeln!(out, "{},{},{},{},{},{},{},{}", s.y, s.p, s.q, s.phi, s.eps, s.gamma, s.delta, s.enorm)?;
        }
        writeln!(out, "# y_star={}", self.y_star)?;
        writeln!(out, "# theta={}", self.theta)?;
        writeln!(out, "# order_estimate={}", self.order_estimate)?;
        match self.amplitude_order {
            Some(a) => writeln!(out, "# amplitude_order={a}")?,
            None => writeln!(out, "# amplitude_order=inf")?,
        }
        for (k, v) in &self.mu {
            writeln!(out, "# mu_{k}={v}")?;
        }
        for (k, v) in &self.nu {
            writeln!(out, "# nu_{k}={v}")?;
        }
        for w in &self.warnings {
            writeln!(out, "# warning: {w}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

impl Analyzer {
    /// `mu_k(theta)` and `nu_k(theta)` for every `k` in `ks`.
    pub fn error_coefficients(&self, theta: f64, ks: &[usize]) -> Result<ErrorCoefficients> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidInput(format!("theta must be positive, got {theta}")));
        }
        if theta >= self.y_star() {
            return Err(Error::Unstable { y: theta, y_star: self.y_star() });
        }
        let n = MIN_GRID.max(GRID_PER_STAGE * self.stages());
        let grid: Vec<(f64, f64, f64)> = (1..=n)
            .into_par_iter()
            .map(|i| {
                let y = theta * i as f64 / n as f64;
                (y, self.phase_error(y).abs() / y, self.enorm(y))
            })
            .collect();

        let mut out = ErrorCoefficients { theta, mu: BTreeMap::new(), nu: BTreeMap::new(), warnings: Vec::new() };
        for &k in ks {
            let mu = if k > self.phase_order() {
                out.warnings.push(format!("mu_{k}: k exceeds the phase order {}", self.phase_order()));
                f64::INFINITY
            } else {
                let f = |y: f64| self.phase_error(y).abs() / y * (theta / y).powi(k as i32);
                sup_on_grid(&grid, theta, k, |g| g.1, f).max(self.mu_limit(theta, k))
            };
            let amp = self.amplitude_order();
            let nu = if amp.is_some_and(|a| k > a) {
                out.warnings.push(format!("nu_{k}: k exceeds the amplitude order {}", amp.unwrap_or(0)));
                f64::INFINITY
            } else {
                let f = |y: f64| self.enorm(y) * (theta / y).powi(k as i32);
                sup_on_grid(&grid, theta, k, |g| g.2, f).max(self.nu_limit(theta, k))
            };
            out.mu.insert(k, mu);
            out.nu.insert(k, nu);
        }
        Ok(out)
    }

    /// Samples on `n_samples + 1` equispaced points of `[0, theta]` plus error coefficients.
    pub fn report(&self, theta: f64, ks: &[usize], n_samples: usize) -> Result<StabilityReport> {
        let coeffs = self.error_coefficients(theta, ks)?;
        let n = n_samples.max(1);
        let samples = (0..=n)
            .map(|i| {
                let y = theta * i as f64 / n as f64;
                let pa = self.phase_amplitude(y)?;
                Ok(Sample {
                    y,
                    p: self.p().eval(y),
                    q: self.q().eval(y),
                    phi: pa.phi,
                    eps: pa.eps,
                    gamma: pa.gamma,
                    delta: pa.delta,
                    enorm: pa.enorm,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StabilityReport {
            y_star: self.y_star(),
            theta,
            samples,
            mu: coeffs.mu,
            nu: coeffs.nu,
            order_estimate: self.phase_order(),
            amplitude_order: self.amplitude_order(),
            warnings: coeffs.warnings,
        })
    }
}

/// Grid maximum of `base(g) * (theta/y)^k` refined by golden section around the argmax.
fn sup_on_grid(
    grid: &[(f64, f64, f64)],
    theta: f64,
    k: usize,
    base: impl Fn(&(f64, f64, f64)) -> f64,
    f: impl Fn(f64) -> f64,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for (i, g) in grid.iter().enumerate() {
        let v = base(g) * (theta / g.0).powi(k as i32);
        if v > best {
            best = v;
            arg = i;
        }
    }
    let lo = if arg == 0 { grid[0].0 * 0.5 } else { grid[arg - 1].0 };
    let hi = grid.get(arg + 1).map_or(theta, |g| g.0);
    let y = golden_max(&f, lo, hi, 1e-6);
    best.max(f(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyprop::compose_coeffs;
    use std::f64::consts::PI;

    fn leapfrog() -> Analyzer {
        Analyzer::new(&compose_coeffs(&[0.0, 1.0], &[1.0, 0.0]).unwrap()).unwrap()
    }

    /// Independent oracle: brute-force grid of the closed forms.
    fn oracle_sup(f: impl Fn(f64) -> f64, theta: f64) -> f64 {
        (1..=200_000).map(|i| f(theta * i as f64 / 200_000.0)).fold(0.0, f64::max)
    }

    #[test]
    fn leapfrog_mu2_at_one() {
        let ec = leapfrog().error_coefficients(1.0, &[2]).unwrap();
        let want = PI / 3.0 - 1.0;
        assert!((ec.mu[&2] - want).abs() < 1e-10);
        let oracle = oracle_sup(|y| (2.0 * (y / 2.0).asin() / y - 1.0) / y.powi(2), 1.0);
        assert!((ec.mu[&2] - oracle).abs() < 1e-9);
    }

    #[test]
    fn leapfrog_nu0_at_one() {
        let ec = leapfrog().error_coefficients(1.0, &[0]).unwrap();
        assert!((ec.nu[&0] - (3f64.sqrt() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn orders_above_detected_are_infinite() {
        let ec = leapfrog().error_coefficients(1.0, &[3]).unwrap();
        assert!(ec.mu[&3].is_infinite());
        assert!(ec.nu[&3].is_infinite());
        assert_eq!(ec.warnings.len(), 2);
    }

    #[test]
    fn coefficients_below_order_vanish_as_theta_shrinks() {
        let an = leapfrog();
        let big = an.error_coefficients(0.1, &[0, 1]).unwrap();
        let small = an.error_coefficients(0.01, &[0, 1]).unwrap();
        assert!(small.mu[&0] < big.mu[&0] * 0.02);
        assert!(small.mu[&1] < big.mu[&1] * 0.2);
    }

    #[test]
    fn theta_past_threshold_is_rejected() {
        assert!(matches!(leapfrog().error_coefficients(2.001, &[0]), Err(Error::Unstable { .. })));
    }

    #[test]
    fn report_csv_layout() {
        let rep = leapfrog().report(1.0, &[0, 2], 4).unwrap();
        let csv = rep.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "y,p,q,phi,eps,gamma,delta,Enorm");
        assert_eq!(lines.iter().filter(|l| !l.starts_with('#')).count(), 6);
        assert!(csv.contains("# y_star="));
        assert!(csv.contains("# mu_2="));
        assert!(csv.contains("# nu_0="));
    }
}
