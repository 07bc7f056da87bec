//! Shared fixtures for the benchmarks in `benches/`.

use num_complex::Complex64;
use splitprop::operator::{random_unit_vector, GridSpec, HamiltonianOperator};

/// Shifted tridiagonal operator of dimension `n` with a seeded unit start vector.
pub fn tridiag_fixture(omega: f64, n: usize, seed: u64) -> (HamiltonianOperator, Vec<Complex64>) {
    let op = HamiltonianOperator::tridiagonal(omega, n).expect("valid tridiagonal operator").with_shift(omega);
    (op, random_unit_vector(n, seed))
}

/// Pöschl–Teller Fourier operator on `n` grid points with a seeded unit start vector.
pub fn poschl_teller_fixture(n: usize, seed: u64) -> (HamiltonianOperator, Vec<Complex64>) {
    let op = HamiltonianOperator::fourier(&GridSpec::poschl_teller(n)).expect("valid grid");
    (op, random_unit_vector(n, seed))
}
