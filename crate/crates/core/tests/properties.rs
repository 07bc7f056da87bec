//! Property tests over random methods, systems and states.

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use splitprop::baselines::lanczos_expm;
use splitprop::design::split_sum_of_squares;
use splitprop::methods::builtin;
use splitprop::operator::{random_symmetric, random_unit_vector, HamiltonianOperator, NormConvention};
use splitprop::polyprop::{compose_coeffs, compose_k, Analyzer, Parity, ParityPolynomial};
use splitprop::propagate::{
    apriori_bound, propagate_steps, reference_propagate, state_error, step_count, Checkpoints, PropagateOptions,
};
use splitprop::{factorize_k, Error, SplittingMethod};

fn coefficients(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| (prop::collection::vec(-2.0..2.0f64, n), prop::collection::vec(-2.0..2.0f64, n)))
}

/// Positive coefficients with `sum a = sum b = 1`, so that `y* > 0`.
fn consistent(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len)
        .prop_flat_map(|n| (prop::collection::vec(0.05..1.0f64, n), prop::collection::vec(0.05..1.0f64, n)))
        .prop_map(|(a, b)| {
            let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
            (a.iter().map(|x| x / sa).collect(), b.iter().map(|x| x / sb).collect())
        })
}

/// Fixed seed and no persistence file, so runs are reproducible.
fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(20_240_917),
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn max_coeff(p: &ParityPolynomial) -> f64 {
    p.max_abs_coeff().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn determinant_is_identically_one((a, b) in coefficients(10)) {
        let k = compose_coeffs(&a, &b).unwrap();
        prop_assert!(k.det_residual() <= 1e-12, "{}", k.det_residual());
    }

    #[test]
    fn entries_have_fixed_parity((a, b) in coefficients(10)) {
        let k = compose_coeffs(&a, &b).unwrap();
        let [k1, k2, k3, k4] = k.entries();
        prop_assert_eq!((k1.parity(), k4.parity()), (Parity::Even, Parity::Even));
        prop_assert_eq!((k2.parity(), k3.parity()), (Parity::Odd, Parity::Odd));
        prop_assert!(k.degree() <= 2 * a.len());
        prop_assert_eq!(k1.coeff(0), 1.0);
    }

    #[test]
    fn phase_and_amplitude_rebuild_k((a, b) in consistent(4), frac in 0.02..0.95f64) {
        let an = Analyzer::new(&compose_coeffs(&a, &b).unwrap()).unwrap();
        prop_assume!(an.y_star().is_finite() && an.y_star() > 0.05);
        let y = frac * an.y_star();
        let pa = match an.phase_amplitude(y) {
            Ok(pa) => pa,
            Err(Error::NearResonance { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let k = compose_coeffs(&a, &b).unwrap().eval(y);
        let (c, s) = (pa.phi.cos(), pa.phi.sin());
        let rebuilt = [
            [c + pa.eps * s, pa.gamma * s],
            [-(1.0 + pa.eps * pa.eps) / pa.gamma * s, c - pa.eps * s],
        ];
        let scale = 1.0 + pa.gamma.abs() + 1.0 / pa.gamma.abs() + pa.eps.abs();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((k[i][j] - rebuilt[i][j]).abs() <= 1e-9 * scale, "{k:?} vs {rebuilt:?}");
            }
        }
    }

    #[test]
    fn factorization_reproduces_k((a, b) in coefficients(8)) {
        let k = compose_coeffs(&a, &b).unwrap();
        let f = factorize_k(&k).unwrap();
        prop_assert!(f.residual <= 1e-10);
        let back = compose_coeffs(&f.a, &f.b).unwrap();
        for (x, y) in back.entries().iter().zip(k.entries()) {
            let tol = 1e-9 * max_coeff(y).max(1.0);
            prop_assert!((0..=k.degree()).all(|j| (x.coeff(j) - y.coeff(j)).abs() <= tol));
        }
    }

    #[test]
    fn small_methods_are_recovered((a, b) in coefficients(4)) {
        let f = factorize_k(&compose_coeffs(&a, &b).unwrap()).unwrap();
        // A zero leading a (or trailing b) is a different but equal word; skip those.
        prop_assume!(a.iter().chain(&b).all(|c| c.abs() > 0.05));
        prop_assert_eq!(f.a.len(), a.len());
        for (x, y) in f.a.iter().zip(&a).chain(f.b.iter().zip(&b)) {
            prop_assert!((x - y).abs() <= 1e-9, "{:?} {:?} vs {a:?} {b:?}", f.a, f.b);
        }
    }

    #[test]
    fn sum_of_squares_candidates_square_to_s((a, b) in coefficients(3)) {
        let k = compose_coeffs(&a, &b).unwrap();
        let (p, q) = (k.stability_polynomial(), k.q_polynomial());
        let s = (&(&p * &p) + &(&q * &q)).try_sub(&ParityPolynomial::one()).unwrap();
        prop_assume!(!s.is_zero() && max_coeff(&s) > 1e-6);
        let splits = split_sum_of_squares(&p, &q).unwrap();
        prop_assert!(!splits.is_empty());
        let (d0, e0) = (k.d_polynomial(), k.e_polynomial());
        let ys: Vec<f64> = (1..=40).map(|i| 0.1 * i as f64).collect();
        let mut own = false;
        for sp in &splits {
            let sq = &(&sp.d * &sp.d) + &(&sp.e * &sp.e);
            for &y in &ys {
                prop_assert!((sq.eval(y) - s.eval(y)).abs() <= 1e-8 * s.eval_abs(y), "y = {y}: {} vs {}", sq.eval(y), s.eval(y));
            }
            // Compared pointwise against sqrt of the size of s, the natural scale of d and e.
            let close = |x: &ParityPolynomial, y0: &ParityPolynomial| {
                ys.iter().all(|&y| (x.eval(y).abs() - y0.eval(y).abs()).abs() <= 1e-6 * s.eval_abs(y).sqrt())
            };
            own |= close(&sp.d, &d0) && close(&sp.e, &e0);
        }
        prop_assert!(own, "the method's own (d, e) is not among {} candidates", splits.len());
    }
}

proptest! {
    #![proptest_config(config(60))]

    #[test]
    fn error_stays_below_bound(seed in 0u64..10_000, n in 1usize..=8, name in prop::sample::select(vec!["leapfrog", "strang", "leapfrog_concat(3)"]), theta_prime in 0.3..1.8f64, t in 0.5..30.0f64) {
        let method = builtin(name).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = HamiltonianOperator::dense(random_symmetric(n, &mut rng)).unwrap();
        let u0 = random_unit_vector(n, seed);
        let steps = step_count(t, op.rho_bound(), method.m, theta_prime);
        let tau = t / steps as f64;
        let opts = PropagateOptions { checkpoints: Checkpoints::Final, ..Default::default() };
        let run = propagate_steps(&method, &op, &u0, tau, steps, &opts).unwrap();
        let err = state_error(run.final_state(), &reference_propagate(&op, &u0, t).unwrap(), NormConvention::Euclidean);
        let order = Analyzer::new(&compose_k(&method).unwrap()).unwrap().order();
        for k in [0, order] {
            let bound = apriori_bound(&method, &op, &u0, k, tau * op.rho_bound()).unwrap().bound(t);
            prop_assert!(err <= bound * (1.0 + 1e-12), "k = {k}: {err} > {bound}");
        }
    }

    #[test]
    fn lanczos_is_unitary(seed in 0u64..10_000, n in 2usize..=40, m in 1usize..=20, t in -5.0..5.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = HamiltonianOperator::dense(random_symmetric(n, &mut rng)).unwrap();
        let u0: Vec<Complex64> = random_unit_vector(n, seed).iter().map(|z| z * 3.0).collect();
        let out = lanczos_expm(&op, &u0, t, m.min(n)).unwrap();
        prop_assert!((NormConvention::Euclidean.norm(&out.state) - 3.0).abs() <= 1e-12 * 3.0);
    }

    #[test]
    fn step_rule_keeps_theta_within_budget(t in 0.01..1e4f64, rho in 0.01..100.0f64, m in 1usize..=40, theta_prime in 0.1..2.0f64) {
        let n = step_count(t, rho, m, theta_prime);
        let budget = m as f64 * theta_prime;
        prop_assert!(t / n as f64 * rho <= budget * (1.0 + 1e-12));
        if n > 1 {
            prop_assert!(t / (n - 1) as f64 * rho > budget * (1.0 - 1e-12));
        }
    }

    #[test]
    fn method_json_round_trip((a, b) in coefficients(6), r in 0usize..8, theta_prime in 0.1..2.0f64) {
        let m = SplittingMethod::new("prop", a.len(), r, theta_prime, a, b).unwrap();
        let (back, _) = SplittingMethod::from_json_str(&m.to_json_string()).unwrap();
        prop_assert_eq!(back, m);
    }
}
