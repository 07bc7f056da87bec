//! Construction of splitting methods for a target `(m, r, theta')`.
//!
//! Step one picks `p`, `q` ([`optimize_pq`]), step two splits
//! `p^2 + q^2 - 1 = d^2 + e^2` ([`split_sum_of_squares`]), step three
//! assembles and factorizes every candidate `K` ([`factorize_k`]) and keeps
//! the valid one with the smallest coefficient sum.

mod factor;
mod nelder_mead;
mod polish;
mod pq;
mod sos;

pub use factor::{factorize_k, Factorization, FACTOR_TOL};
pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};
pub use pq::{check_pq, optimize_pq, optimize_pq_with, DesignTarget, PqPair, DEFAULT_LAMBDA, NODE_WINDOW};
pub use sos::{assemble_k, split_s, split_sum_of_squares, SosPair, SOS_TOL};

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::methods::SplittingMethod;
use crate::polyprop::{compose_k, Analyzer, StabilityReport};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DesignOptions {
    pub nelder_mead: NelderMeadOptions,
    pub polish_iterations: usize,
    /// Samples in the emitted stability report.
    pub report_samples: usize,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions { nelder_mead: NelderMeadOptions::default(), polish_iterations: 10, report_samples: 200 }
    }
}

/// Fate of one `(d, e)` candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateOutcome {
    pub index: usize,
    /// Factorization residual before refinement.
    pub factor_residual: f64,
    /// Residual of the order and resonance conditions after refinement.
    pub polish_residual: f64,
    pub coefficient_sum: f64,
    pub order: Option<usize>,
    pub y_star: f64,
    /// Why the candidate was rejected; `None` for valid ones.
    pub rejection: Option<String>,
}

#[derive(Clone, Debug)]
pub struct DesignResult {
    pub method: SplittingMethod,
    pub pair: PqPair,
    pub report: StabilityReport,
    pub candidates: Vec<CandidateOutcome>,
    pub warnings: Vec<String>,
}

pub fn design_method(target: &DesignTarget) -> Result<DesignResult> {
    design_method_with(target, &DesignOptions::default())
}

pub fn design_method_with(target: &DesignTarget, opts: &DesignOptions) -> Result<DesignResult> {
    target.free_counts()?;
    let pair = optimize_pq_with(target, &opts.nelder_mead)?;
    let splits = split_s(&pair.s(target.r), target.r + 1)?;
    let name = format!("designed_m{}_r{}_t{}", target.m, target.r, target.theta_prime);

    let evaluated: Vec<(CandidateOutcome, Option<SplittingMethod>)> = splits
        .par_iter()
        .enumerate()
        .map(|(index, split)| evaluate_candidate(index, split, &pair, target, &name, opts))
        .collect();

    let best = evaluated
        .iter()
        .filter_map(|(o, m)| m.as_ref().map(|m| (o, m)))
        .min_by(|(x, mx), (y, my)| x.coefficient_sum.total_cmp(&y.coefficient_sum).then_with(|| lexicographic(mx, my)));
    let candidates: Vec<CandidateOutcome> = evaluated.iter().map(|(o, _)| o.clone()).collect();
    let Some((_, method)) = best else {
        let detail: Vec<String> = candidates
            .iter()
            .map(|c| {
                format!(
                    "#{}: {} (factor residual {:e})",
                    c.index,
                    c.rejection.as_deref().unwrap_or("?"),
                    c.factor_residual
                )
            })
            .collect();
        return Err(Error::NotFactorizable(format!("no valid candidate: {}", detail.join("; "))));
    };
    let method = method.clone();

    let analyzer = Analyzer::new(&compose_k(&method)?)?;
    let ks: Vec<usize> = if target.r == 0 { vec![0] } else { vec![0, target.r] };
    let report = analyzer.report(target.theta(), &ks, opts.report_samples)?;
    let mut warnings = pair.warnings.clone();
    warnings.extend(check_pq(&pair, target));
    warnings.extend(method.consistency_warnings());
    Ok(DesignResult { method, pair, report, candidates, warnings })
}

fn lexicographic(x: &SplittingMethod, y: &SplittingMethod) -> Ordering {
    x.a.iter()
        .chain(&x.b)
        .zip(y.a.iter().chain(&y.b))
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn evaluate_candidate(
    index: usize,
    split: &SosPair,
    pair: &PqPair,
    target: &DesignTarget,
    name: &str,
    opts: &DesignOptions,
) -> (CandidateOutcome, Option<SplittingMethod>) {
    let mut outcome = CandidateOutcome {
        index,
        factor_residual: f64::INFINITY,
        polish_residual: f64::INFINITY,
        coefficient_sum: f64::INFINITY,
        order: None,
        y_star: 0.0,
        rejection: None,
    };
    let result = (|| -> Result<SplittingMethod> {
        let k = assemble_k(&pair.p, &pair.q, &split.d, &split.e)?;
        let (f, report) = factor::factorize_best(&k);
        let f = f.ok_or_else(|| Error::NotFactorizable(report))?;
        outcome.factor_residual = f.residual;
        let pol = polish::polish(&f.a, &f.b, &pair.nodes, target.r, target.theta(), opts.polish_iterations)?;
        outcome.polish_residual = pol.residual;
        let method = SplittingMethod::new(name, target.m, target.r, target.theta_prime, pol.a, pol.b)?;
        outcome.coefficient_sum = method.coefficient_sum();
        let analyzer = Analyzer::new(&compose_k(&method)?)?;
        outcome.order = Some(analyzer.order());
        outcome.y_star = analyzer.y_star();
        if analyzer.order() < target.r {
            return Err(Error::NotFactorizable(format!("order {} below {}", analyzer.order(), target.r)));
        }
        if !(analyzer.y_star() > target.theta()) {
            return Err(Error::NotFactorizable(format!(
                "y* = {} not above theta = {}",
                analyzer.y_star(),
                target.theta()
            )));
        }
        Ok(method)
    })();
    match result {
        Ok(m) => (outcome, Some(m)),
        Err(e) => {
            outcome.rejection = Some(e.to_string());
            (outcome, None)
        }
    }
}
