//! Derivative-free local minimization with dimension-adaptive Nelder–Mead.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when every vertex is within `x_tol` of the best (max norm)...
    pub x_tol: f64,
    /// ...and every value is within `f_tol` of the best.
    pub f_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions { max_iter: 3000, x_tol: 1e-10, f_tol: 1e-12 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. The initial simplex perturbs each coordinate by
/// 5% (or 0.00025 when it is zero); coefficients follow Gao and Han (2012).
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    if n == 0 {
        return NelderMeadResult { x: vec![], f: f(x0), iterations: 0, converged: true };
    }
    let nf = n as f64;
    let (rho, chi, psi, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut sim: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] = if v[i] != 0.0 { 1.05 * v[i] } else { 0.00025 };
        sim.push(v);
    }
    let mut fs: Vec<f64> = sim.iter().map(|v| eval(v)).collect();

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| fs[i].total_cmp(&fs[j]));
        sim = order.iter().map(|&i| sim[i].clone()).collect();
        fs = order.iter().map(|&i| fs[i]).collect();

        let x_spread =
            sim[1..].iter().flat_map(|v| v.iter().zip(&sim[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        let f_spread = fs[1..].iter().map(|v| (v - fs[0]).abs()).fold(0.0, f64::max);
        if x_spread <= opts.x_tol && f_spread <= opts.f_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n).map(|k| sim[..n].iter().map(|v| v[k]).sum::<f64>() / nf).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&sim[n]).map(|(c, w)| c + t * (c - w)).collect() };

        let xr = along(rho);
        let fr = eval(&xr);
        if fr < fs[0] {
            let xe = along(rho * chi);
            let fe = eval(&xe);
            if fe < fr {
                sim[n] = xe;
                fs[n] = fe;
            } else {
                sim[n] = xr;
                fs[n] = fr;
            }
            continue;
        }
        if fr < fs[n - 1] {
            sim[n] = xr;
            fs[n] = fr;
            continue;
        }
        let shrink = if fr < fs[n] {
            let xc = along(psi * rho);
            let fc = eval(&xc);
            if fc <= fr {
                sim[n] = xc;
                fs[n] = fc;
                false
            } else {
                true
            }
        } else {
            let xcc = along(-psi);
            let fcc = eval(&xcc);
            if fcc < fs[n] {
                sim[n] = xcc;
                fs[n] = fcc;
                false
            } else {
                true
            }
        };
        if shrink {
            for j in 1..=n {
                let v: Vec<f64> = sim[0].iter().zip(&sim[j]).map(|(b, x)| b + sigma * (x - b)).collect();
                fs[j] = eval(&v);
                sim[j] = v;
            }
        }
    }
    let best = (0..=n).min_by(|&i, &j| fs[i].total_cmp(&fs[j])).expect("simplex is non-empty");
    NelderMeadResult { x: sim[best].clone(), f: fs[best], iterations, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = minimize(f, &[-1.2, 1.0], &NelderMeadOptions { max_iter: 5000, ..Default::default() });
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_in_five_dimensions() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let r = minimize(f, &[0.0; 5], &NelderMeadOptions { max_iter: 20000, ..Default::default() });
        assert!(r.x.iter().all(|v| (v - 0.5).abs() < 1e-5), "{:?}", r.x);
    }

    #[test]
    fn zero_dimensional() {
        let r = minimize(|_| 3.0, &[], &NelderMeadOptions::default());
        assert_eq!((r.f, r.iterations), (3.0, 0));
    }
}
