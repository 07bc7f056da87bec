//! Fourier-collocation Hamiltonian `F^-1 D F + V` on a periodic grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Potential evaluated at the grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    Constant {
        value: f64,
    },
    /// `-(alpha^2 / 2 mu) lambda (lambda - 1) / cosh^2(alpha x)`.
    PoschlTeller {
        alpha: f64,
        lambda: f64,
    },
    /// Values at the nodes `x_j`.
    Values {
        values: Vec<f64>,
    },
}

/// Periodic grid on `[x_min, x_max)` with `n` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub mu: f64,
    pub potential: Potential,
}

impl GridSpec {
    /// Pöschl–Teller well with `mu = 1745`, `alpha = 2`, `lambda = 24.5` on `[-5, 5]`.
    pub fn poschl_teller(n: usize) -> Self {
        GridSpec {
            n,
            x_min: -5.0,
            x_max: 5.0,
            mu: 1745.0,
            potential: Potential::PoschlTeller { alpha: 2.0, lambda: 24.5 },
        }
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.length() / self.n as f64;
        (0..self.n).map(|j| self.x_min + h * j as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n % 2 != 0 {
            return Err(Error::InvalidInput(format!("grid size must be even and at least 2, got {}", self.n)));
        }
        if !(self.length() > 0.0) || !self.length().is_finite() {
            return Err(Error::InvalidInput("grid interval must have positive finite length".into()));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidInput(format!("reduced mass must be positive, got {}", self.mu)));
        }
        Ok(())
    }

    /// `V(x_j)` at every node.
    pub fn potential_values(&self) -> Result<Vec<f64>> {
        let xs = self.nodes();
        let v: Vec<f64> = match &self.potential {
            Potential::Zero => vec![0.0; self.n],
            Potential::Constant { value } => vec![*value; self.n],
            Potential::PoschlTeller { alpha, lambda } => {
                let depth = alpha * alpha / (2.0 * self.mu) * lambda * (lambda - 1.0);
                xs.iter().map(|x| -depth / (alpha * x).cosh().powi(2)).collect()
            }
            Potential::Values { values } => {
                if values.len() != self.n {
                    return Err(Error::InvalidInput(format!(
                        "potential has {} values for {} nodes",
                        values.len(),
                        self.n
                    )));
                }
                values.clone()
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("potential value".into()));
        }
        Ok(v)
    }
}

/// Applies `F^-1 diag(k_n^2 / 2mu) F + diag(V)` with `k_n = 2 pi n / L`.
#[derive(Clone)]
pub struct FourierOperator {
    n: usize,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FourierOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierOperator").field("n", &self.n).finish_non_exhaustive()
    }
}

impl FourierOperator {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        grid.validate()?;
        let n = grid.n;
        let potential = grid.potential_values()?;
        let dk = 2.0 * PI / grid.length();
        // Frequencies in FFT order: 0, 1, ..., N/2 - 1, -N/2, ..., -1.
        let kinetic = (0..n)
            .map(|j| {
                let freq = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                (dk * freq).powi(2) / (2.0 * grid.mu)
            })
            .collect();
        let mut planner = FftPlanner::new();
        Ok(FourierOperator {
            n,
            kinetic,
            potential,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Largest kinetic eigenvalue.
    pub fn kinetic_max(&self) -> f64 {
        self.kinetic.iter().cloned().fold(0.0, f64::max)
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn apply_complex(&self, x: &[Complex64], out: &mut [Complex64]) {
        let mut buf = x.to_vec();
        let mut scratch = vec![Complex64::default(); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut buf, &mut scratch);
        let inv_n = 1.0 / self.n as f64;
        for (b, k) in buf.iter_mut().zip(&self.kinetic) {
            *b *= k * inv_n;
        }
        scratch.resize(self.inverse.get_inplace_scratch_len(), Complex64::default());
        self.inverse.process_with_scratch(&mut buf, &mut scratch);
        for ((o, b), (xi, v)) in out.iter_mut().zip(buf).zip(x.iter().zip(&self.potential)) {
            *o = b + xi * v;
        }
    }

    pub fn apply_real(&self, x: &[f64], out: &mut [f64]) {
        let cx: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut co = vec![Complex64::default(); self.n];
        self.apply_complex(&cx, &mut co);
        for (o, c) in out.iter_mut().zip(co) {
            *o = c.re;
        }
    }
}

/// `exp(-(b x)^2)` on the grid, scaled so that `sum |u_j|^2 / N = 1`.
pub fn gaussian_state(grid: &GridSpec, b: f64) -> Vec<Complex64> {
    let mut u: Vec<Complex64> = grid.nodes().iter().map(|x| Complex64::new((-(b * x).powi(2)).exp(), 0.0)).collect();
    let norm = (u.iter().map(|z| z.norm_sqr()).sum::<f64>() / u.len() as f64).sqrt();
    u.iter_mut().for_each(|z| *z /= norm);
    u
}

/// Bound-state energies `E_n = -(alpha^2/2mu)(lambda - 1 - n)^2` for `0 <= n <= lambda - 1`.
pub fn poschl_teller_bound_states(mu: f64, alpha: f64, lambda: f64) -> Vec<f64> {
    let top = (lambda - 1.0).floor().max(-1.0) as i64;
    (0..=top).map(|n| -(alpha * alpha) / (2.0 * mu) * (lambda - 1.0 - n as f64).powi(2)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::HamiltonianOperator;

    fn free_grid(n: usize, potential: Potential) -> GridSpec {
        GridSpec { n, x_min: 0.0, x_max: 2.0 * PI, mu: 0.5, potential }
    }

    #[test]
    fn plane_waves_are_eigenvectors() {
        let grid = free_grid(16, Potential::Zero);
        let op = FourierOperator::new(&grid).unwrap();
        for freq in [-8i32, -3, 0, 2, 7] {
            let u: Vec<Complex64> = grid.nodes().iter().map(|x| Complex64::from_polar(1.0, freq as f64 * x)).collect();
            let mut hu = vec![Complex64::default(); 16];
            op.apply_complex(&u, &mut hu);
            let lam = (freq * freq) as f64 / (2.0 * grid.mu);
            for (a, b) in hu.iter().zip(&u) {
                assert!((a - b * lam).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_potential_shifts() {
        let g0 = free_grid(8, Potential::Zero);
        let g1 = free_grid(8, Potential::Constant { value: 2.5 });
        let (o0, o1) = (FourierOperator::new(&g0).unwrap(), FourierOperator::new(&g1).unwrap());
        let u: Vec<Complex64> = (0..8).map(|j| Complex64::new(j as f64, 1.0 - j as f64)).collect();
        let (mut a, mut b) = (vec![Complex64::default(); 8], vec![Complex64::default(); 8]);
        o0.apply_complex(&u, &mut a);
        o1.apply_complex(&u, &mut b);
        for ((x, y), z) in a.iter().zip(&b).zip(&u) {
            assert!((y - x - z * 2.5).norm() < 1e-12);
        }
    }

    /// Brute-force oracle: the dense collocation matrix from explicit DFT sums.
    #[test]
    fn matches_dense_dft_matrix() {
        let grid = GridSpec {
            n: 12,
            x_min: -1.0,
            x_max: 2.0,
            mu: 3.0,
            potential: Potential::PoschlTeller { alpha: 1.5, lambda: 3.0 },
        };
        let op = HamiltonianOperator::fourier(&grid).unwrap();
        let n = grid.n;
        let l = grid.length();
        let v = grid.potential_values().unwrap();
        let dense = op.to_dense();
        for j in 0..n {
            for k in 0..n {
                let mut s = 0.0;
                for f in -(n as i64) / 2..(n as i64) / 2 {
                    let kk = 2.0 * PI * f as f64 / l;
                    s += kk * kk / (2.0 * grid.mu) * (2.0 * PI * f as f64 * (j as f64 - k as f64) / n as f64).cos();
                }
                s /= n as f64;
                if j == k {
                    s += v[j];
                }
                assert!((dense[(j, k)] - s).abs() < 1e-12, "({j},{k})");
            }
        }
    }

    #[test]
    fn odd_grids_are_rejected() {
        assert!(FourierOperator::new(&free_grid(7, Potential::Zero)).is_err());
    }

    #[test]
    fn bound_state_count() {
        let e = poschl_teller_bound_states(1745.0, 2.0, 24.5);
        assert_eq!(e.len(), 24);
        assert!((e[0] + 4.0 / 3490.0 * 23.5f64.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn gaussian_is_normalized() {
        let grid = GridSpec::poschl_teller(128);
        let u = gaussian_state(&grid, 3.0);
        let n2: f64 = u.iter().map(|z| z.norm_sqr()).sum::<f64>() / 128.0;
        assert!((n2 - 1.0).abs() < 1e-14);
    }
}
