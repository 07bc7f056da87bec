use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use splitprop::baselines::{chebyshev_expm, lanczos_expm};
use splitprop::design::{design_method_with, DesignOptions, DEFAULT_LAMBDA};
use splitprop::operator::{
    random_unit_vector, spectral_radius, GridSpec, HamiltonianOperator, NormConvention, ProblemConfig,
};
use splitprop::propagate::{apriori_bound, propagate, state_error, Checkpoints, PropagateOptions, ReferencePropagator};
use splitprop::{compose_k, save_method, Analyzer, DesignTarget, Error};
use splitprop_cli::{
    bench_poschl_teller, bench_tridiag, parse_list, resolve_method, tridiag_problem, write_rows, PoschlTellerConfig,
    Scheme, TridiagConfig,
};

/// Splitting-method propagators for exp(-itH) u0: analysis, design, integration and benchmarks.
///
/// Errors end with one stderr line `splitprop: error kind=<kind> message="<text>"` and a nonzero
/// exit code (2 for usage errors, 1 otherwise). SPLITPROP_THREADS caps the worker threads.
#[derive(Parser, Debug)]
#[command(name = "splitprop", version)]
struct Cli {
    /// Seed for every random vector.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stability report of a method: samples of p, q, phi, eps, gamma, delta, |E| and mu_k, nu_k.
    Analyze(AnalyzeArgs),
    /// Designs an m-stage method of order r for the scaled step theta'.
    Design(DesignArgs),
    /// Integrates a problem file and compares with the exact solution and the a-priori bound.
    Integrate(IntegrateArgs),
    /// Chebyshev or Lanczos error on the shifted tridiagonal test problem.
    Baseline(BaselineArgs),
    /// Error versus H-application count on the tridiagonal test problem, per scheme.
    BenchTridiag(BenchTridiagArgs),
    /// Error versus time on the Pöschl–Teller well at 2^i periods.
    BenchPoschlTeller(BenchPoschlTellerArgs),
    /// Power-method spectral radius of an operator.
    SpectralRadius(SpectralRadiusArgs),
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Builtin name (leapfrog, strang, leapfrog_concat(m)) or coefficient file.
    #[arg(long)]
    method: String,
    /// Upper end of the sampled interval [0, theta]; defaults to m * theta'.
    #[arg(long)]
    theta: Option<f64>,
    /// Orders k of mu_k and nu_k, e.g. 0,2 or 0-6.
    #[arg(long, default_value = "0")]
    k: String,
    /// Sample count.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Also report the largest theta with ||p| - 1| < 1e-6 on [0, theta].
    #[arg(long)]
    practical_threshold: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Stages.
    #[arg(long)]
    m: usize,
    /// Target order.
    #[arg(long)]
    r: usize,
    /// Scaled step; the method is optimized on [0, m theta'].
    #[arg(long)]
    theta_prime: f64,
    /// Weight of nu_r in the objective mu_r + lambda nu_r.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Nelder–Mead iteration budget per start.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Coefficient file to write.
    #[arg(long)]
    out: PathBuf,
    /// Stability report CSV; defaults to the coefficient path with a .csv extension.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    /// Builtin name or coefficient file.
    #[arg(long)]
    method: String,
    /// Problem JSON: {"operator": {...}, "initial": {...}}.
    #[arg(long)]
    problem: PathBuf,
    /// Final time.
    #[arg(long)]
    t: f64,
    /// Scaled step; defaults to the method's own.
    #[arg(long)]
    theta_prime: Option<f64>,
    /// Regularity index of the a-priori bound.
    #[arg(long, default_value_t = 0)]
    k: usize,
    /// Dyadic checkpoint levels: steps n, n/2, ..., n/2^(levels-1).
    #[arg(long, default_value_t = 8)]
    levels: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    /// chebyshev or lanczos.
    #[arg(long)]
    scheme: String,
    /// Degrees, e.g. 30, 10,20,40 or 1-40.
    #[arg(long)]
    m: String,
    #[arg(long)]
    omega: f64,
    /// Dimension.
    #[arg(long = "N", default_value_t = 1000)]
    n: usize,
    /// Final time.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchTridiagArgs {
    /// One or more omegas, e.g. 15 or 15,20,30,40.
    #[arg(long, value_delimiter = ',', default_value = "15")]
    omega: Vec<f64>,
    /// Dimension (10000 for the full-size problem).
    #[arg(long = "N", default_value_t = 1000)]
    n: usize,
    /// chebyshev, lanczos, builtin names or coefficient files.
    #[arg(long, value_delimiter = ',', default_value = "chebyshev,lanczos")]
    schemes: Vec<String>,
    /// Final time.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Largest H-application count per run.
    #[arg(long, default_value_t = 80)]
    max_applies: usize,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchPoschlTellerArgs {
    /// Grid points.
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    /// Builtin name or coefficient file.
    #[arg(long)]
    method: String,
    /// Periods of length 333 to integrate.
    #[arg(long, default_value_t = 1)]
    periods: usize,
    /// Scaled step; defaults to the method's own.
    #[arg(long)]
    theta_prime: Option<f64>,
    /// Regularity index of the a-priori bound; defaults to the method's order.
    #[arg(long)]
    k: Option<usize>,
    /// Width of the initial Gaussian exp(-(b x)^2).
    #[arg(long, default_value_t = 3.0)]
    b: f64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary JSON destination.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectralRadiusArgs {
    /// Problem JSON whose operator is used.
    #[arg(long, conflicts_with_all = ["poschl_teller", "tridiag"])]
    problem: Option<PathBuf>,
    /// Pöschl–Teller grid with this many points.
    #[arg(long, conflicts_with = "tridiag")]
    poschl_teller: Option<usize>,
    /// Shifted tridiagonal operator with this omega.
    #[arg(long)]
    tridiag: Option<f64>,
    /// Dimension of the tridiagonal operator.
    #[arg(long = "N", default_value_t = 1000)]
    n: usize,
    /// Relative tolerance of the power method.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Also compute the exact value by dense diagonalization.
    #[arg(long)]
    exact: bool,
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("{}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn analyze(a: AnalyzeArgs) -> anyhow::Result<()> {
    let (method, warnings) = resolve_method(&a.method)?;
    warn_all(&warnings);
    let an = Analyzer::new(&compose_k(&method)?)?;
    let theta = a.theta.unwrap_or(method.m as f64 * method.theta_prime);
    let report = an.report(theta, &parse_list(&a.k)?, a.samples)?;
    let mut out = output(&a.out)?;
    report.write_csv(&mut out)?;
    if a.practical_threshold {
        writeln!(out, "# practical_threshold={}", an.practical_threshold(1e-6))?;
    }
    out.flush()?;
    Ok(())
}

fn design(a: DesignArgs) -> anyhow::Result<()> {
    let target = DesignTarget::new(a.m, a.r, a.theta_prime).with_lambda(a.lambda);
    let mut opts = DesignOptions::default();
    if let Some(n) = a.max_iter {
        opts.nelder_mead.max_iter = n;
    }
    let res = design_method_with(&target, &opts)?;
    warn_all(&res.warnings);
    save_method(&res.method, &a.out)?;
    let report_path = a.report.unwrap_or_else(|| a.out.with_extension("csv"));
    let mut out = output(&Some(report_path))?;
    res.report.write_csv(&mut out)?;
    out.flush()?;
    let valid = res.candidates.iter().filter(|c| c.rejection.is_none()).count();
    println!("name={}", res.method.name);
    println!("order={}", res.report.order_estimate);
    println!("y_star={}", res.report.y_star);
    println!("y_star_over_m={}", res.report.y_star / a.m as f64);
    for (k, v) in &res.report.mu {
        println!("mu_{k}={v}");
    }
    for (k, v) in &res.report.nu {
        println!("nu_{k}={v}");
    }
    println!("objective={}", res.pair.objective);
    println!("candidates={valid}/{}", res.candidates.len());
    Ok(())
}

#[derive(Serialize)]
struct IntegrateRow {
    t: f64,
    error_vs_reference: f64,
    bound: f64,
    norm: f64,
    energy: f64,
    step: usize,
    error_vs_reference_discrete: f64,
    norm_euclidean: f64,
}

fn integrate(a: IntegrateArgs) -> anyhow::Result<()> {
    let (method, warnings) = resolve_method(&a.method)?;
    warn_all(&warnings);
    let cfg = ProblemConfig::load(&a.problem)?;
    let op = cfg.build_operator()?;
    let u0 = cfg.initial_state(op.dim())?;
    let theta_prime = a.theta_prime.unwrap_or(method.theta_prime);
    let opts = PropagateOptions { checkpoints: Checkpoints::Dyadic(a.levels), ..Default::default() };
    let run = propagate(&method, &op, &u0, a.t, theta_prime, &opts)?;
    warn_all(&run.warnings);
    let bound = if run.n_steps > 0 {
        let b = apriori_bound(&method, &op, &u0, a.k, run.tau * op.rho_bound())?;
        warn_all(&b.warnings);
        Some(b)
    } else {
        None
    };
    let reference = ReferencePropagator::new(&op)?;
    let mut rows = Vec::new();
    for c in &run.checkpoints {
        let exact = reference.at(&u0, c.t)?;
        rows.push(IntegrateRow {
            t: c.t,
            error_vs_reference: state_error(&c.state, &exact, NormConvention::Euclidean),
            bound: bound.as_ref().map_or(0.0, |b| b.bound(c.t)),
            norm: c.diagnostics.norm,
            energy: c.diagnostics.energy,
            step: c.step,
            error_vs_reference_discrete: state_error(&c.state, &exact, NormConvention::Discrete),
            norm_euclidean: c.diagnostics.norm_euclidean,
        });
    }
    write_rows(&rows, output(&a.out)?)?;
    eprintln!("steps={} tau={} rho={} y_star={}", run.n_steps, run.tau, run.rho, run.y_star);
    Ok(())
}

#[derive(Serialize)]
struct BaselineRow {
    scheme: String,
    m: usize,
    h_applies: usize,
    error_euclidean: f64,
    error_discrete: f64,
    norm_euclidean: f64,
}

fn baseline(a: BaselineArgs, seed: u64) -> anyhow::Result<()> {
    let degrees = parse_list(&a.m)?;
    let op = tridiag_problem(a.omega, a.n)?;
    let u0 = random_unit_vector(a.n, seed);
    let exact = ReferencePropagator::new(&op)?.at(&u0, a.t)?;
    let mut rows = Vec::new();
    for m in degrees {
        let out = match a.scheme.as_str() {
            "chebyshev" => chebyshev_expm(&op, &u0, a.t, m)?,
            "lanczos" => lanczos_expm(&op, &u0, a.t, m)?,
            other => bail!(Error::InvalidInput(format!("unknown scheme {other:?}; use chebyshev or lanczos"))),
        };
        warn_all(&out.warnings);
        rows.push(BaselineRow {
            scheme: a.scheme.clone(),
            m,
            h_applies: out.h_applies,
            error_euclidean: state_error(&out.state, &exact, NormConvention::Euclidean),
            error_discrete: state_error(&out.state, &exact, NormConvention::Discrete),
            norm_euclidean: NormConvention::Euclidean.norm(&out.state),
        });
    }
    write_rows(&rows, output(&a.out)?)
}

fn bench_tridiag_cmd(a: BenchTridiagArgs, seed: u64) -> anyhow::Result<()> {
    let mut schemes = Vec::new();
    for s in &a.schemes {
        let (scheme, warnings) = Scheme::parse(s)?;
        warn_all(&warnings);
        schemes.push(scheme);
    }
    let cfg = TridiagConfig { omegas: a.omega, n: a.n, t: a.t, seed, max_applies: a.max_applies, schemes };
    write_rows(&bench_tridiag(&cfg)?, output(&a.out)?)
}

fn bench_poschl_teller_cmd(a: BenchPoschlTellerArgs) -> anyhow::Result<()> {
    let (method, warnings) = resolve_method(&a.method)?;
    warn_all(&warnings);
    let mut cfg = PoschlTellerConfig::new(a.n, method);
    cfg.periods = a.periods;
    cfg.theta_prime = a.theta_prime;
    cfg.k = a.k;
    cfg.b = a.b;
    let report = bench_poschl_teller(&cfg)?;
    warn_all(&report.warnings);
    write_rows(&report.rows, output(&a.out)?)?;
    eprintln!("rho={} rho_bound={}", report.rho, report.rho_bound);
    eprintln!("bound_states={}", report.bound_states);
    for r in &report.u0_norms {
        eprintln!("u0_norm_{}: discrete={} euclidean={}", r.k, r.discrete, r.euclidean);
    }
    eprintln!("steps_per_period={} tau={} theta={}", report.steps_per_period, report.tau, report.theta);
    if let Some(path) = &a.summary {
        let file = File::create(path).with_context(|| format!("{}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &report)?;
    }
    Ok(())
}

fn spectral_radius_cmd(a: SpectralRadiusArgs) -> anyhow::Result<()> {
    let op = match (&a.problem, a.poschl_teller, a.tridiag) {
        (Some(p), _, _) => ProblemConfig::load(p)?.build_operator()?,
        (None, Some(n), _) => HamiltonianOperator::fourier(&GridSpec::poschl_teller(n))?,
        (None, None, Some(omega)) => tridiag_problem(omega, a.n)?,
        (None, None, None) => {
            bail!(Error::InvalidInput("one of --problem, --poschl-teller or --tridiag is required".into()))
        }
    };
    let sr = spectral_radius(&op, a.tol);
    println!("rho={}", sr.rho);
    println!("bound={}", sr.bound);
    println!("converged={}", sr.converged);
    println!("iterations={}", sr.iterations);
    if a.exact {
        let (vals, _) = op.eigen_decomposition()?;
        println!("exact={}", vals.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Design(a) => design(a),
        Command::Integrate(a) => integrate(a),
        Command::Baseline(a) => baseline(a, cli.seed),
        Command::BenchTridiag(a) => bench_tridiag_cmd(a, cli.seed),
        Command::BenchPoschlTeller(a) => bench_poschl_teller_cmd(a),
        Command::SpectralRadius(a) => spectral_radius_cmd(a),
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!("splitprop: error kind={kind} message={:?}", message.replace('\n', " "));
}

fn kind_of(e: &anyhow::Error) -> &'static str {
    if let Some(e) = e.downcast_ref::<Error>() {
        return e.kind();
    }
    if e.downcast_ref::<io::Error>().is_some() || e.downcast_ref::<csv::Error>().is_some() {
        return "io";
    }
    if e.downcast_ref::<serde_json::Error>().is_some() {
        return "parse";
    }
    "other"
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("SPLITPROP_THREADS") else {
        return Ok(());
    };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!(Error::InvalidInput(format!("SPLITPROP_THREADS must be a positive integer, got {value:?}"))),
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            error_line("usage", &e.kind().to_string());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads() {
        error_line(kind_of(&e), &format!("{e:#}"));
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (e.g. `| head`) is not an error.
        Err(e)
            if e.chain().any(|c| {
                c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
            }) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            error_line(kind_of(&e), &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
