//! Benchmark recipes and helpers behind the `splitprop` binary.

use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use splitprop::baselines::{chebyshev_expm, lanczos_expm};
use splitprop::methods::{builtin, load_method};
use splitprop::operator::{
    gaussian_state, h_power_norm, poschl_teller_bound_states, random_unit_vector, GridSpec, HamiltonianOperator,
    NormConvention, Potential,
};
use splitprop::propagate::{
    apriori_bound, propagate_steps, state_error, step_count, Checkpoints, PropagateOptions, ReferencePropagator,
};
use splitprop::{compose_k, Analyzer, Error, Result, SplittingMethod};

/// Period of the Pöschl–Teller runs.
pub const PERIOD: f64 = 333.0;

/// A builtin name or a path to a coefficient file. Load warnings are returned alongside.
pub fn resolve_method(spec: &str) -> Result<(SplittingMethod, Vec<String>)> {
    if Path::new(spec).is_file() {
        return load_method(spec);
    }
    match builtin(spec) {
        Ok(m) => Ok((m, Vec::new())),
        Err(Error::UnknownMethod(_)) if spec.ends_with(".json") || spec.contains(std::path::MAIN_SEPARATOR) => {
            load_method(spec)
        }
        Err(e) => Err(e),
    }
}

/// Parses `3`, `1,2,5` or `1-40` (inclusive) into a list.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidInput(format!("expected a list like 1,2,5 or 1-40, got {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Shifted tridiagonal test operator with spectrum inside `[-omega, omega]`.
pub fn tridiag_problem(omega: f64, n: usize) -> Result<HamiltonianOperator> {
    Ok(HamiltonianOperator::tridiagonal(omega, n)?.with_shift(omega))
}

#[derive(Clone, Debug)]
pub enum Scheme {
    Chebyshev,
    Lanczos,
    Splitting(SplittingMethod),
}

impl Scheme {
    pub fn parse(spec: &str) -> Result<(Scheme, Vec<String>)> {
        match spec {
            "chebyshev" => Ok((Scheme::Chebyshev, Vec::new())),
            "lanczos" => Ok((Scheme::Lanczos, Vec::new())),
            _ => resolve_method(spec).map(|(m, w)| (Scheme::Splitting(m), w)),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Scheme::Chebyshev => "chebyshev",
            Scheme::Lanczos => "lanczos",
            Scheme::Splitting(m) => &m.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub omega: f64,
    pub scheme: String,
    /// Polynomial degree, or stages per step for a splitting method.
    pub m: usize,
    pub steps: usize,
    pub h_applies: usize,
    pub error_euclidean: f64,
    pub error_discrete: f64,
}

#[derive(Clone, Debug)]
pub struct TridiagConfig {
    pub omegas: Vec<f64>,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    /// Largest `H`-application count per run.
    pub max_applies: usize,
    pub schemes: Vec<Scheme>,
}

/// Error against the exact solution versus `H`-application count, for every
/// scheme and every `omega`. Each `omega` runs independently.
pub fn bench_tridiag(cfg: &TridiagConfig) -> Result<Vec<CostRow>> {
    let per_omega: Vec<Result<Vec<CostRow>>> = cfg.omegas.par_iter().map(|&omega| tridiag_rows(cfg, omega)).collect();
    let mut rows = Vec::new();
    for r in per_omega {
        rows.extend(r?);
    }
    Ok(rows)
}

fn tridiag_rows(cfg: &TridiagConfig, omega: f64) -> Result<Vec<CostRow>> {
    let op = tridiag_problem(omega, cfg.n)?;
    let u0 = random_unit_vector(cfg.n, cfg.seed);
    let exact = ReferencePropagator::new(&op)?.at(&u0, cfg.t)?;
    let mut rows = Vec::new();
    let mut push = |scheme: &str, m: usize, steps: usize, h_applies: usize, state: &[Complex64]| {
        rows.push(CostRow {
            omega,
            scheme: scheme.to_string(),
            m,
            steps,
            h_applies,
            error_euclidean: state_error(state, &exact, NormConvention::Euclidean),
            error_discrete: state_error(state, &exact, NormConvention::Discrete),
        });
    };
    for scheme in &cfg.schemes {
        match scheme {
            Scheme::Chebyshev => {
                for m in 1..=cfg.max_applies {
                    let out = chebyshev_expm(&op, &u0, cfg.t, m)?;
                    push("chebyshev", m, 1, out.h_applies, &out.state);
                }
            }
            Scheme::Lanczos => {
                for m in 1..=cfg.max_applies.min(cfg.n) {
                    let out = lanczos_expm(&op, &u0, cfg.t, m)?;
                    push("lanczos", m, 1, out.h_applies, &out.state);
                }
            }
            Scheme::Splitting(method) => {
                let y_star = Analyzer::new(&compose_k(method)?)?.y_star();
                let rho = op.rho_bound();
                // Fewest steps with tau * rho strictly inside the stability interval.
                let mut n = (cfg.t * rho / y_star).floor() as usize + 1;
                let opts =
                    PropagateOptions { checkpoints: Checkpoints::Final, transformed_norm: false, ..Default::default() };
                while n * method.m <= cfg.max_applies {
                    let run = propagate_steps(method, &op, &u0, cfg.t / n as f64, n, &opts)?;
                    push(&method.name, method.m, n, run.h_applies(), run.final_state());
                    n += 1;
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct PoschlTellerConfig {
    pub n: usize,
    pub mu: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub interval: [f64; 2],
    /// Width parameter of the initial Gaussian `exp(-(b x)^2)`.
    pub b: f64,
    pub periods: usize,
    pub method: SplittingMethod,
    /// Defaults to the method's own `theta'`.
    pub theta_prime: Option<f64>,
    /// Regularity index of the a-priori bound; defaults to the method's order.
    pub k: Option<usize>,
}

impl PoschlTellerConfig {
    pub fn new(n: usize, method: SplittingMethod) -> Self {
        let g = GridSpec::poschl_teller(n);
        let Potential::PoschlTeller { alpha, lambda } = g.potential else {
            unreachable!("poschl_teller grid carries its potential")
        };
        PoschlTellerConfig {
            n,
            mu: g.mu,
            alpha,
            lambda,
            interval: [g.x_min, g.x_max],
            b: 3.0,
            periods: 1,
            method,
            theta_prime: None,
            k: None,
        }
    }

    fn grid(&self) -> GridSpec {
        GridSpec {
            n: self.n,
            x_min: self.interval[0],
            x_max: self.interval[1],
            mu: self.mu,
            potential: Potential::PoschlTeller { alpha: self.alpha, lambda: self.lambda },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormRow {
    pub k: usize,
    pub discrete: f64,
    pub euclidean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub t: f64,
    pub periods: f64,
    pub step: usize,
    pub error_euclidean: f64,
    pub error_discrete: f64,
    /// A-priori bound on the Euclidean error.
    pub bound: f64,
    pub norm: f64,
    pub energy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PoschlTellerReport {
    pub n: usize,
    pub method: String,
    pub rho: f64,
    pub rho_bound: f64,
    pub bound_states: usize,
    pub u0_norms: Vec<NormRow>,
    pub steps_per_period: usize,
    pub tau: f64,
    pub theta: f64,
    pub bound_k: usize,
    pub rows: Vec<ErrorRow>,
    pub warnings: Vec<String>,
}

/// Runs the method over `periods` periods and records the error at `2^i` periods.
pub fn bench_poschl_teller(cfg: &PoschlTellerConfig) -> Result<PoschlTellerReport> {
    let grid = cfg.grid();
    let op = HamiltonianOperator::fourier(&grid)?;
    let sr = op.spectral_radius_estimate();
    let u0 = gaussian_state(&grid, cfg.b);
    let u0_norms = [1, 6, 7]
        .iter()
        .map(|&k| NormRow {
            k,
            discrete: h_power_norm(&op, &u0, k, NormConvention::Discrete),
            euclidean: h_power_norm(&op, &u0, k, NormConvention::Euclidean),
        })
        .collect();

    let method = &cfg.method;
    let theta_prime = cfg.theta_prime.unwrap_or(method.theta_prime);
    let per_period = step_count(PERIOD, op.rho_bound(), method.m, theta_prime);
    let tau = PERIOD / per_period as f64;
    let theta = tau * op.rho_bound();
    let marks: Vec<usize> =
        (0..).map(|i| 1usize << i).take_while(|&p| p <= cfg.periods).map(|p| p * per_period).collect();
    let opts = PropagateOptions { checkpoints: Checkpoints::Steps(marks), ..Default::default() };
    let run = propagate_steps(method, &op, &u0, tau, per_period * cfg.periods, &opts)?;

    let k = cfg.k.unwrap_or(Analyzer::new(&compose_k(method)?)?.order());
    let bound = apriori_bound(method, &op, &u0, k, theta)?;
    let reference = ReferencePropagator::new(&op)?;
    let mut rows = Vec::new();
    for c in &run.checkpoints {
        let exact = reference.at(&u0, c.t)?;
        rows.push(ErrorRow {
            t: c.t,
            periods: c.t / PERIOD,
            step: c.step,
            error_euclidean: state_error(&c.state, &exact, NormConvention::Euclidean),
            error_discrete: state_error(&c.state, &exact, NormConvention::Discrete),
            bound: bound.bound(c.t),
            norm: c.diagnostics.norm,
            energy: c.diagnostics.energy,
        });
    }
    let mut warnings = run.warnings.clone();
    warnings.extend(bound.warnings.iter().cloned());
    if !sr.converged {
        warnings.push(format!("power method stopped after {} iterations", sr.iterations));
    }
    Ok(PoschlTellerReport {
        n: cfg.n,
        method: method.name.clone(),
        rho: sr.rho,
        rho_bound: sr.bound,
        bound_states: poschl_teller_bound_states(cfg.mu, cfg.alpha, cfg.lambda).len(),
        u0_norms,
        steps_per_period: per_period,
        tau,
        theta,
        bound_k: k,
        rows,
        warnings,
    })
}

/// Serializes rows with a header to any writer.
pub fn write_rows<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
