//! JSON problem configuration: an operator plus an initial state.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fourier::{gaussian_state, GridSpec, Potential};
use super::{random_unit_vector, HamiltonianOperator};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    PoschlTeller {
        n: usize,
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default = "default_interval")]
        interval: [f64; 2],
    },
    Fourier {
        n: usize,
        interval: [f64; 2],
        mu: f64,
        potential: Potential,
    },
    Tridiagonal {
        omega: f64,
        n: usize,
        #[serde(default)]
        shift: Option<f64>,
    },
    Diagonal {
        values: Vec<f64>,
    },
    Dense {
        rows: Vec<Vec<f64>>,
    },
}

fn default_mu() -> f64 {
    1745.0
}
fn default_alpha() -> f64 {
    2.0
}
fn default_lambda() -> f64 {
    24.5
}
fn default_interval() -> [f64; 2] {
    [-5.0, 5.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialState {
    /// `exp(-(b x)^2)` on the grid, normalized in the discrete convention.
    Gaussian {
        #[serde(default = "default_b")]
        b: f64,
    },
    /// Uniform random complex vector of unit Euclidean norm.
    Random {
        #[serde(default = "default_seed")]
        seed: u64,
    },
    Values {
        re: Vec<f64>,
        im: Vec<f64>,
    },
}

fn default_b() -> f64 {
    3.0
}
fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub operator: OperatorSpec,
    pub initial: InitialState,
}

impl OperatorSpec {
    /// Grid of the Fourier-type operators.
    pub fn grid(&self) -> Option<GridSpec> {
        match self {
            OperatorSpec::PoschlTeller { n, mu, alpha, lambda, interval } => Some(GridSpec {
                n: *n,
                x_min: interval[0],
                x_max: interval[1],
                mu: *mu,
                potential: Potential::PoschlTeller { alpha: *alpha, lambda: *lambda },
            }),
            OperatorSpec::Fourier { n, interval, mu, potential } => {
                Some(GridSpec { n: *n, x_min: interval[0], x_max: interval[1], mu: *mu, potential: potential.clone() })
            }
            _ => None,
        }
    }

    pub fn build(&self) -> Result<HamiltonianOperator> {
        if let Some(grid) = self.grid() {
            return HamiltonianOperator::fourier(&grid);
        }
        match self {
            OperatorSpec::Tridiagonal { omega, n, shift } => {
                Ok(HamiltonianOperator::tridiagonal(*omega, *n)?.with_shift(shift.unwrap_or(0.0)))
            }
            OperatorSpec::Diagonal { values } => HamiltonianOperator::diagonal(values.clone()),
            OperatorSpec::Dense { rows } => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidInput("dense operator rows must form a square matrix".into()));
                }
                HamiltonianOperator::dense(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
            }
            _ => unreachable!("grid operators handled above"),
        }
    }
}

impl ProblemConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn build_operator(&self) -> Result<HamiltonianOperator> {
        self.operator.build()
    }

    pub fn initial_state(&self, dim: usize) -> Result<Vec<Complex64>> {
        match &self.initial {
            InitialState::Gaussian { b } => {
                let grid = self
                    .operator
                    .grid()
                    .ok_or_else(|| Error::InvalidInput("a gaussian initial state needs a grid operator".into()))?;
                Ok(gaussian_state(&grid, *b))
            }
            InitialState::Random { seed } => Ok(random_unit_vector(dim, *seed)),
            InitialState::Values { re, im } => {
                if re.len() != dim || im.len() != dim {
                    return Err(Error::InvalidInput(format!("initial state must have {dim} entries")));
                }
                Ok(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults() {
        let cfg = ProblemConfig::from_json_str(
            r#"{"operator":{"kind":"poschl_teller","n":128},"initial":{"kind":"gaussian"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.operator.grid().unwrap(), GridSpec::poschl_teller(128));
        assert_eq!(cfg.initial, InitialState::Gaussian { b: 3.0 });
        let op = cfg.build_operator().unwrap();
        assert_eq!(cfg.initial_state(op.dim()).unwrap().len(), 128);
    }

    #[test]
    fn tridiagonal_with_shift() {
        let cfg = ProblemConfig::from_json_str(
            r#"{"operator":{"kind":"tridiagonal","omega":15,"n":10,"shift":15},"initial":{"kind":"random","seed":1}}"#,
        )
        .unwrap();
        let op = cfg.build_operator().unwrap();
        assert_eq!(op.shift(), 15.0);
        assert!(cfg.initial_state(10).is_ok());
        assert!(ProblemConfig { initial: InitialState::Gaussian { b: 3.0 }, ..cfg }.initial_state(10).is_err());
    }
}
