//! Independent reference computations shared by the integration targets.
#![allow(dead_code)]

pub mod props;

use eric_lasso::composition::{closure, log_design};
use eric_lasso::solver::{constrained_l1_quadratic, lambda_max, objective, QuadraticLassoProblem, SolverConfig};
use eric_lasso::surrogate::{nearest_psd_maxnorm, PsdProjectionConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact minimiser by enumerating every sign pattern: on each pattern the
/// problem is an equality-constrained quadratic; the best sign-consistent
/// candidate is the global minimum.
pub fn enumeration_oracle(sigma: &DMatrix<f64>, rho: &DVector<f64>, lambda: f64, zero_sum: bool) -> (DVector<f64>, f64) {
    let p = rho.len();
    let mut best = (DVector::zeros(p), 0.0);
    for code in 0..3usize.pow(p as u32) {
        let mut c = code;
        let signs: Vec<f64> = (0..p)
            .map(|_| {
                let s = [0.0, 1.0, -1.0][c % 3];
                c /= 3;
                s
            })
            .collect();
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        let k = support.len();
        if k == 0 || (zero_sum && k == 1) {
            continue;
        }
        let dim = if zero_sum { k + 1 } else { k };
        let mut a = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);
        for (r, &i) in support.iter().enumerate() {
            for (s, &j) in support.iter().enumerate() {
                a[(r, s)] = sigma[(i, j)];
            }
            b[r] = rho[i] - lambda * signs[i];
            if zero_sum {
                a[(r, k)] = 1.0;
                a[(k, r)] = 1.0;
            }
        }
        let Some(sol) = a.lu().solve(&b) else { continue };
        let mut beta = DVector::zeros(p);
        for (r, &j) in support.iter().enumerate() {
            beta[j] = sol[r];
        }
        if support.iter().any(|&j| beta[j] * signs[j] <= 0.0) {
            continue;
        }
        let f = objective(sigma, rho, lambda, &beta);
        if f < best.1 {
            best = (beta, f);
        }
    }
    best
}

/// `(Σ, ρ, λ)` from a centred log design of random compositions, `n = 20`.
pub fn oracle_instance(p: usize, seed: u64, zero_sum: bool) -> (DMatrix<f64>, DVector<f64>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 20;
    let raw = DMatrix::from_fn(n, p, |_, _| rng.gen_range(0.05..1.0));
    let z = log_design(&closure(&raw, 0.0).unwrap(), true);
    let beta: Vec<f64> = (0..p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut beta = DVector::from_vec(beta);
    if zero_sum {
        let m = beta.mean();
        beta.add_scalar_mut(-m);
    }
    let y = z.values() * &beta + DVector::from_fn(n, |_, _| rng.gen_range(-0.3..0.3));
    let sigma = z.values().transpose() * z.values() / n as f64;
    let rho = z.values().transpose() * y / n as f64;
    let lambda = rng.gen_range(0.05..0.6) * lambda_max(&rho, zero_sum);
    (sigma, rho, lambda)
}

#[derive(Debug, Clone, Copy)]
pub struct OracleGap {
    pub objective: f64,
    pub coefficients: f64,
}

/// Largest gaps between the solver and the oracle over `count` instances
/// with `p` cycling through 3, 4, 5.
pub fn oracle_gaps(count: usize, zero_sum: bool) -> OracleGap {
    let mut worst = OracleGap { objective: 0.0, coefficients: 0.0 };
    for k in 0..count {
        let p = 3 + k % 3;
        let (sigma, rho, lambda) = oracle_instance(p, 1000 + k as u64, zero_sum);
        let (beta_o, f_o) = enumeration_oracle(&sigma, &rho, lambda, zero_sum);
        let prob = QuadraticLassoProblem::new(sigma, rho, lambda, zero_sum).unwrap();
        let fit = constrained_l1_quadratic(&prob, &SolverConfig::default()).unwrap();
        worst.objective = worst.objective.max((fit.objective - f_o).abs());
        worst.coefficients = worst.coefficients.max((&fit.beta - beta_o).amax());
    }
    worst
}

/// `|achieved − (c−1)/2|` for `[[1,c],[c,1]]`.
pub fn psd_two_by_two_error(c: f64) -> f64 {
    let s = DMatrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]);
    let proj = nearest_psd_maxnorm(&s, &PsdProjectionConfig::default()).unwrap();
    (proj.gap - (c - 1.0) / 2.0).abs()
}

/// Largest projection gap over `count` random positive definite matrices.
pub fn psd_random_gap(count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|k| {
            let p = 2 + k % 9;
            let a = DMatrix::from_fn(p + 3, p, |_, _| rng.gen_range(-1.0..1.0));
            let s = a.transpose() * a + DMatrix::identity(p, p) * 1e-3;
            nearest_psd_maxnorm(&s, &PsdProjectionConfig::default()).unwrap().gap
        })
        .fold(0.0, f64::max)
}
