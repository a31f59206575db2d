//! The l1-penalised quadratic solver behind every estimator:
//!
//! ```text
//! minimise ½ βᵀΣβ − ρᵀβ + λ‖β‖₁   subject to 1ᵀβ = 0 (optional)
//! ```
//!
//! Two algorithms are available. Coordinate descent handles the zero-sum
//! constraint with a method-of-multipliers outer loop; ADMM splits `β = γ`
//! and solves the bordered KKT system exactly in the `β` step. Both finish
//! with an active-set polish that solves the stationarity equations on the
//! detected support, and every result carries a KKT certificate.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{dim_mismatch, EricError, Result};
use crate::linalg::{is_symmetric, max_abs, min_eigenvalue, solve_dense};
use crate::prox::soft_threshold;

/// The four estimators compared throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Corrected moments, zero-sum constraint.
    Eric,
    /// Raw moments, zero-sum constraint.
    Coda,
    /// Corrected moments, no constraint.
    CoCo,
    /// Raw moments, no constraint.
    Vanilla,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Eric, Method::Coda, Method::CoCo, Method::Vanilla];

    pub fn zero_sum(self) -> bool {
        matches!(self, Method::Eric | Method::Coda)
    }

    pub fn corrected(self) -> bool {
        matches!(self, Method::Eric | Method::CoCo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Eric => "eric",
            Method::Coda => "coda",
            Method::CoCo => "coco",
            Method::Vanilla => "vanilla",
        }
    }

    /// Short table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Eric => "Eric",
            Method::Coda => "Coda",
            Method::CoCo => "CoCo",
            Method::Vanilla => "Vani",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eric" => Ok(Method::Eric),
            "coda" => Ok(Method::Coda),
            "coco" => Ok(Method::CoCo),
            "vanilla" | "vani" => Ok(Method::Vanilla),
            other => Err(EricError::Parse(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    CoordinateDescent,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Initial ADMM penalty.
    pub admm_penalty: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    /// ADMM iterations or coordinate-descent sweeps.
    pub max_iter: usize,
    /// Accepted KKT violation, relative to `1 + ‖ρ‖∞`.
    pub kkt_tol: f64,
    /// Per-λ iteration cap inside [`regularization_path_until_stall`].
    pub stall_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::CoordinateDescent,
            admm_penalty: 1.0,
            tol_primal: 1e-7,
            tol_dual: 1e-7,
            max_iter: 50_000,
            kkt_tol: 1e-6,
            stall_iter: 5_000,
        }
    }
}

impl SolverConfig {
    pub fn admm() -> Self {
        Self {
            algorithm: Algorithm::Admm,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.admm_penalty > 0.0
            && self.tol_primal > 0.0
            && self.tol_dual > 0.0
            && self.kkt_tol > 0.0
            && self.max_iter > 0
            && self.stall_iter > 0;
        if ok {
            Ok(())
        } else {
            Err(EricError::Domain("solver settings must all be positive".into()))
        }
    }
}

/// One instance of the penalised quadratic.
#[derive(Debug, Clone)]
pub struct QuadraticLassoProblem {
    pub sigma: DMatrix<f64>,
    pub rho: DVector<f64>,
    pub lambda: f64,
    pub zero_sum: bool,
}

impl QuadraticLassoProblem {
    pub fn new(sigma: DMatrix<f64>, rho: DVector<f64>, lambda: f64, zero_sum: bool) -> Result<Self> {
        validate_moments(&sigma, &rho)?;
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(EricError::Domain(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            sigma,
            rho,
            lambda,
            zero_sum,
        })
    }
}

fn validate_moments(sigma: &DMatrix<f64>, rho: &DVector<f64>) -> Result<()> {
    if sigma.nrows() != rho.len() || !sigma.is_square() {
        return Err(dim_mismatch(format!(
            "Gram is {}x{} but rho has length {}",
            sigma.nrows(),
            sigma.ncols(),
            rho.len()
        )));
    }
    if sigma.iter().chain(rho.iter()).any(|v| !v.is_finite()) {
        return Err(EricError::Domain("moments contain non-finite values".into()));
    }
    if !is_symmetric(sigma, 1e-10 * (1.0 + max_abs(sigma))) {
        return Err(EricError::Domain("Gram matrix is not symmetric".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub method: Option<Method>,
    /// ADMM iterations or coordinate-descent sweeps.
    pub iterations: usize,
    /// Largest violation of the stationarity conditions.
    pub kkt_gap: f64,
    pub objective: f64,
    /// Multiplier of the zero-sum constraint (0 when unconstrained).
    pub multiplier: f64,
}

impl FitResult {
    pub fn coef_sum(&self) -> f64 {
        self.beta.sum()
    }

    /// Indices with `|β_j| > threshold`.
    pub fn support(&self, threshold: f64) -> Vec<usize> {
        self.beta
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > threshold)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `½ βᵀΣβ − ρᵀβ + λ‖β‖₁`.
pub fn objective(sigma: &DMatrix<f64>, rho: &DVector<f64>, lambda: f64, beta: &DVector<f64>) -> f64 {
    0.5 * (sigma * beta).dot(beta) - rho.dot(beta) + lambda * beta.lp_norm(1)
}

/// Smallest λ at which `β = 0` is optimal.
///
/// Unconstrained this is `‖ρ‖∞`; with the zero-sum constraint the multiplier
/// shifts `ρ` freely, giving `(max ρ − min ρ)/2`.
pub fn lambda_max(rho: &DVector<f64>, zero_sum: bool) -> f64 {
    if rho.is_empty() {
        return 0.0;
    }
    if zero_sum {
        0.5 * (rho.max() - rho.min())
    } else {
        rho.amax()
    }
}

/// Stationarity violation of `β` given the gradient `g = Σβ − ρ`, minimised
/// over the zero-sum multiplier. Returns `(gap, multiplier)`.
///
/// Every condition has the form `|x_j + ν| ≤ o_j` (support: `x_j = g_j + λ
/// sign β_j`, `o_j = 0`; elsewhere `x_j = g_j`, `o_j = λ`), so the best `ν`
/// balances the two extreme one-sided violations.
pub fn kkt_from_gradient(grad: &DVector<f64>, beta: &DVector<f64>, lambda: f64, zero_sum: bool) -> (f64, f64) {
    let mut hi = f64::NEG_INFINITY; // max (x_j - o_j)
    let mut lo = f64::NEG_INFINITY; // max (-x_j - o_j)
    for (g, b) in grad.iter().zip(beta.iter()) {
        let (x, o) = if *b != 0.0 {
            (g + lambda * b.signum(), 0.0)
        } else {
            (*g, lambda)
        };
        hi = hi.max(x - o);
        lo = lo.max(-x - o);
    }
    if grad.is_empty() {
        return (0.0, 0.0);
    }
    if zero_sum {
        let nu = 0.5 * (lo - hi);
        ((0.5 * (hi + lo)).max(0.0), nu)
    } else {
        (hi.max(lo).max(0.0), 0.0)
    }
}

pub fn kkt_gap(sigma: &DMatrix<f64>, rho: &DVector<f64>, lambda: f64, beta: &DVector<f64>, zero_sum: bool) -> f64 {
    let grad = sigma * beta - rho;
    kkt_from_gradient(&grad, beta, lambda, zero_sum).0
}

fn sign_pattern(beta: &DVector<f64>) -> Vec<(usize, f64)> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, b)| (j, b.signum()))
        .collect()
}

struct Cache {
    penalty: f64,
    chol: Cholesky<f64, Dyn>,
    /// `(Σ + σI)⁻¹ 1` and its sum, for the zero-sum border.
    ones_solve: DVector<f64>,
    ones_dot: f64,
}

/// A solver bound to fixed moments; reusable along a λ path.
pub struct LassoSolver {
    sigma: DMatrix<f64>,
    rho: DVector<f64>,
    zero_sum: bool,
    cfg: SolverConfig,
    kkt_target: f64,
    admm_cache: Option<Cache>,
    last_trace: Vec<f64>,
}

impl LassoSolver {
    /// Validates the moments; the Gram must be PSD within `-1e-8`.
    pub fn new(sigma: DMatrix<f64>, rho: DVector<f64>, zero_sum: bool, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        validate_moments(&sigma, &rho)?;
        if sigma.nrows() == 0 {
            return Err(EricError::Domain("empty problem".into()));
        }
        let min_eig = min_eigenvalue(&sigma)?;
        if min_eig < -1e-8 * (1.0 + max_abs(&sigma)) {
            return Err(EricError::Domain(format!(
                "Gram matrix is indefinite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let kkt_target = cfg.kkt_tol * (1.0 + rho.amax());
        Ok(Self {
            sigma,
            rho,
            zero_sum,
            cfg,
            kkt_target,
            admm_cache: None,
            last_trace: Vec::new(),
        })
    }

    /// Skips the PSD check for moments already known to be PSD.
    pub(crate) fn new_trusted(sigma: DMatrix<f64>, rho: DVector<f64>, zero_sum: bool, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        validate_moments(&sigma, &rho)?;
        if sigma.nrows() == 0 {
            return Err(EricError::Domain("empty problem".into()));
        }
        let kkt_target = cfg.kkt_tol * (1.0 + rho.amax());
        Ok(Self {
            sigma,
            rho,
            zero_sum,
            cfg,
            kkt_target,
            admm_cache: None,
            last_trace: Vec::new(),
        })
    }

    pub fn p(&self) -> usize {
        self.rho.len()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn zero_sum(&self) -> bool {
        self.zero_sum
    }

    pub fn lambda_max(&self) -> f64 {
        lambda_max(&self.rho, self.zero_sum)
    }

    /// Objective values of the `γ` iterate over the last ADMM solve.
    pub fn last_admm_trace(&self) -> &[f64] {
        &self.last_trace
    }

    /// Solves at `lambda`, optionally warm-started from a previous fit.
    pub fn solve(&mut self, lambda: f64, warm: Option<&FitResult>) -> Result<FitResult> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(EricError::Domain(format!("lambda must be >= 0, got {lambda}")));
        }
        let p = self.p();
        if lambda >= self.lambda_max() {
            let beta = DVector::zeros(p);
            let (gap, multiplier) = kkt_from_gradient(&(-&self.rho), &beta, lambda, self.zero_sum);
            return Ok(FitResult {
                beta,
                lambda,
                method: None,
                iterations: 0,
                kkt_gap: gap,
                objective: 0.0,
                multiplier,
            });
        }
        let (beta0, nu0) = match warm {
            Some(w) if w.beta.len() == p => (w.beta.clone(), w.multiplier),
            _ => (DVector::zeros(p), 0.0),
        };
        let (beta, iterations) = match self.cfg.algorithm {
            Algorithm::CoordinateDescent => self.coordinate_descent(lambda, beta0, nu0)?,
            Algorithm::Admm => self.admm(lambda, beta0)?,
        };
        let grad = &self.sigma * &beta - &self.rho;
        let (gap, multiplier) = kkt_from_gradient(&grad, &beta, lambda, self.zero_sum);
        Ok(FitResult {
            objective: objective(&self.sigma, &self.rho, lambda, &beta),
            beta,
            lambda,
            method: None,
            iterations,
            kkt_gap: gap,
            multiplier,
        })
    }

    /// Exact solution on the support and signs of `beta`, if it certifies.
    fn polish(&self, beta: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
        let pattern = sign_pattern(beta);
        let p = self.p();
        let s = pattern.len();
        let mut out = DVector::zeros(p);
        if s > 0 {
            let dim = if self.zero_sum { s + 1 } else { s };
            let mut a = DMatrix::zeros(dim, dim);
            let mut b = DVector::zeros(dim);
            for (r, &(i, si)) in pattern.iter().enumerate() {
                for (c, &(j, _)) in pattern.iter().enumerate() {
                    a[(r, c)] = self.sigma[(i, j)];
                }
                b[r] = self.rho[i] - lambda * si;
                if self.zero_sum {
                    a[(r, s)] = 1.0;
                    a[(s, r)] = 1.0;
                }
            }
            let x = solve_dense(&a, &b).ok()?;
            for (r, &(i, si)) in pattern.iter().enumerate() {
                if x[r] * si < 0.0 {
                    return None;
                }
                out[i] = x[r];
            }
            if self.zero_sum {
                // Remove the O(ε) residual sum left by the solve.
                let drift = out.sum();
                if drift != 0.0 {
                    let (idx, _) = pattern
                        .iter()
                        .max_by(|a, b| out[a.0].abs().total_cmp(&out[b.0].abs()))?;
                    out[*idx] -= drift;
                }
            }
        }
        let grad = &self.sigma * &out - &self.rho;
        let (gap, _) = kkt_from_gradient(&grad, &out, lambda, self.zero_sum);
        (gap <= self.kkt_target).then_some(out)
    }

    fn coordinate_descent(&self, lambda: f64, mut beta: DVector<f64>, nu0: f64) -> Result<(DVector<f64>, usize)> {
        let p = self.p();
        let sigma = &self.sigma;
        let diag: Vec<f64> = (0..p).map(|j| sigma[(j, j)]).collect();
        let mu = if self.zero_sum {
            0.1 * (diag.iter().sum::<f64>() / p as f64).max(1e-12)
        } else {
            0.0
        };
        if self.zero_sum {
            let drift = beta.sum();
            if drift != 0.0 {
                beta.add_scalar_mut(-drift / p as f64);
                beta.iter_mut().for_each(|b| {
                    if b.abs() < 1e-300 {
                        *b = 0.0
                    }
                });
            }
        }
        let mut grad = sigma * &beta - &self.rho;
        let mut sum = beta.sum();
        let mut nu = if self.zero_sum {
            let (_, nu_kkt) = kkt_from_gradient(&grad, &beta, lambda, true);
            if nu_kkt.is_finite() {
                nu_kkt
            } else {
                nu0
            }
        } else {
            0.0
        };

        let scale = 1.0 + self.rho.amax();
        // Start loose: the polish certifies exactly once the signs settle.
        let mut inner_tol = (1e-3 * scale).max(self.cfg.tol_primal * scale);
        let mut sweeps = 0usize;
        let mut last_polished: Option<Vec<(usize, f64)>> = None;

        let update = |j: usize, beta: &mut DVector<f64>, grad: &mut DVector<f64>, sum: &mut f64, nu: f64| -> f64 {
            let a = diag[j] + mu;
            if a <= 0.0 {
                return 0.0;
            }
            let c = grad[j] + nu + mu * *sum;
            let old = beta[j];
            let new = soft_threshold(a * old - c, lambda) / a;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                grad.axpy(delta, &sigma.column(j), 1.0);
                *sum += delta;
            }
            (delta * a).abs()
        };

        loop {
            // Inner minimisation of the augmented Lagrangian.
            loop {
                let mut max_change: f64 = 0.0;
                let mut entered = false;
                for j in 0..p {
                    let was_zero = beta[j] == 0.0;
                    max_change = max_change.max(update(j, &mut beta, &mut grad, &mut sum, nu));
                    entered |= was_zero && beta[j] != 0.0;
                }
                sweeps += 1;
                if max_change <= inner_tol && !entered {
                    break;
                }
                let active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
                loop {
                    let mut change: f64 = 0.0;
                    for &j in &active {
                        change = change.max(update(j, &mut beta, &mut grad, &mut sum, nu));
                    }
                    sweeps += 1;
                    if change <= inner_tol || sweeps >= self.cfg.max_iter {
                        break;
                    }
                }
                if sweeps >= self.cfg.max_iter {
                    break;
                }
            }
            if self.zero_sum {
                nu += mu * sum;
            }

            let pattern = sign_pattern(&beta);
            if last_polished.as_ref() != Some(&pattern) {
                if let Some(polished) = self.polish(&beta, lambda) {
                    return Ok((polished, sweeps));
                }
                last_polished = Some(pattern);
            }
            let (gap, _) = kkt_from_gradient(&grad, &beta, lambda, self.zero_sum);
            if gap <= self.kkt_target && (!self.zero_sum || sum.abs() <= 1e-12 * (1.0 + beta.amax())) {
                if self.zero_sum {
                    remove_drift(&mut beta);
                }
                return Ok((beta, sweeps));
            }
            if sweeps >= self.cfg.max_iter {
                return Err(EricError::NotConverged {
                    solver: "coordinate descent",
                    iterations: sweeps,
                    primal: sum.abs(),
                    dual: gap,
                });
            }
            inner_tol = (inner_tol * 0.1).max(1e-15 * scale);
        }
    }

    fn admm_factor(&mut self, penalty: f64) -> Result<()> {
        if matches!(&self.admm_cache, Some(c) if c.penalty == penalty) {
            return Ok(());
        }
        let p = self.p();
        let shifted = &self.sigma + DMatrix::identity(p, p) * penalty;
        let chol = Cholesky::new(shifted)
            .ok_or_else(|| EricError::Singular("Σ + σI is not positive definite".into()))?;
        let ones_solve = chol.solve(&DVector::from_element(p, 1.0));
        let ones_dot = ones_solve.sum();
        self.admm_cache = Some(Cache {
            penalty,
            chol,
            ones_solve,
            ones_dot,
        });
        Ok(())
    }

    fn admm(&mut self, lambda: f64, warm: DVector<f64>) -> Result<(DVector<f64>, usize)> {
        let p = self.p();
        let mut penalty = self
            .admm_cache
            .as_ref()
            .map_or(self.cfg.admm_penalty, |c| c.penalty);
        let mut gamma = warm;
        let mut u = DVector::zeros(p);
        let mut x = gamma.clone();
        let mut primal = f64::INFINITY;
        let mut dual = f64::INFINITY;
        self.last_trace.clear();

        for iter in 1..=self.cfg.max_iter {
            self.admm_factor(penalty)?;
            let cache = self.admm_cache.as_ref().expect("factorised above");
            let rhs = &self.rho + (&gamma - &u) * penalty;
            x = cache.chol.solve(&rhs);
            if self.zero_sum {
                let nu = x.sum() / cache.ones_dot;
                x.axpy(-nu, &cache.ones_solve, 1.0);
            }
            let gamma_prev = gamma.clone();
            let thr = lambda / penalty;
            gamma = (&x + &u).map(|v| soft_threshold(v, thr));
            let diff = &x - &gamma;
            u += &diff;
            primal = diff.norm();
            dual = penalty * (&gamma - &gamma_prev).norm();
            self.last_trace
                .push(objective(&self.sigma, &self.rho, lambda, &gamma));

            let eps_p = self.cfg.tol_primal * (1.0 + x.norm().max(gamma.norm()));
            let eps_d = self.cfg.tol_dual * (1.0 + penalty * u.norm());
            if primal <= eps_p && dual <= eps_d {
                if let Some(polished) = self.polish(&gamma, lambda) {
                    return Ok((polished, iter));
                }
                if self.zero_sum {
                    remove_drift(&mut gamma);
                }
                return Ok((gamma, iter));
            }
            if iter % 10 == 0 {
                if primal > 10.0 * dual {
                    penalty *= 2.0;
                    u *= 0.5;
                } else if dual > 10.0 * primal {
                    penalty *= 0.5;
                    u *= 2.0;
                }
            }
        }
        let _ = x;
        Err(EricError::NotConverged {
            solver: "ADMM lasso",
            iterations: self.cfg.max_iter,
            primal,
            dual,
        })
    }
}

/// Spreads a residual coefficient sum over the support.
fn remove_drift(beta: &mut DVector<f64>) {
    let support: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if support.is_empty() {
        return;
    }
    let shift = beta.sum() / support.len() as f64;
    for j in support {
        beta[j] -= shift;
    }
}

/// Solves one problem instance.
pub fn constrained_l1_quadratic(prob: &QuadraticLassoProblem, cfg: &SolverConfig) -> Result<FitResult> {
    let mut solver = LassoSolver::new(prob.sigma.clone(), prob.rho.clone(), prob.zero_sum, *cfg)?;
    solver.solve(prob.lambda, None)
}

/// Warm-started fits along a strictly descending positive grid.
pub fn regularization_path(solver: &mut LassoSolver, lambdas: &[f64]) -> Result<Vec<FitResult>> {
    validate_grid(lambdas)?;
    let mut out: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let fit = solver.solve(lambda, out.last())?;
        out.push(fit);
    }
    Ok(out)
}

/// Like [`regularization_path`], but stops at the first λ where the solver
/// fails to converge and returns the fits obtained so far.
///
/// Below some λ a nearly singular corrected Gram lets the coefficients run
/// off along its floor-level eigen-directions; such λ are not usable.
///
/// Each λ gets at most `stall_iter` iterations.
pub fn regularization_path_until_stall(solver: &mut LassoSolver, lambdas: &[f64]) -> Result<Vec<FitResult>> {
    validate_grid(lambdas)?;
    let full = solver.cfg.max_iter;
    solver.cfg.max_iter = full.min(solver.cfg.stall_iter);
    let mut out: Vec<FitResult> = Vec::with_capacity(lambdas.len());
    let mut failure = None;
    for &lambda in lambdas {
        match solver.solve(lambda, out.last()) {
            Ok(fit) => out.push(fit),
            Err(EricError::NotConverged { .. }) if !out.is_empty() => {
                log::debug!("path truncated at lambda {lambda:.4e} after {} fits", out.len());
                break;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    solver.cfg.max_iter = full;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

pub(crate) fn validate_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(EricError::Domain("lambda grid must be positive".into()));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EricError::Domain("lambda grid must be strictly descending".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.gen_range(-1.0..1.0));
        let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let sigma = x.tr_mul(&x) / n as f64;
        let rho = x.tr_mul(&y) / n as f64;
        (crate::linalg::symmetrize(&sigma), rho)
    }

    #[test]
    fn zero_above_lambda_max() {
        for zero_sum in [false, true] {
            let (s, r) = random_problem(1, 30, 6);
            let lmax = lambda_max(&r, zero_sum);
            let prob = QuadraticLassoProblem::new(s, r, lmax * 1.0001, zero_sum).unwrap();
            for cfg in [SolverConfig::default(), SolverConfig::admm()] {
                let fit = constrained_l1_quadratic(&prob, &cfg).unwrap();
                assert!(fit.beta.iter().all(|b| *b == 0.0), "{:?}", fit.beta);
            }
        }
    }

    #[test]
    fn lambda_max_examples() {
        assert_eq!(lambda_max(&DVector::from_vec(vec![3.0, -1.0, 0.0]), false), 3.0);
        assert_eq!(lambda_max(&DVector::from_element(4, 2.5), true), 0.0);
    }

    #[test]
    fn identity_zero_sum_projection() {
        let prob = QuadraticLassoProblem::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, -1.0]),
            0.0,
            true,
        )
        .unwrap();
        for cfg in [SolverConfig::default(), SolverConfig::admm()] {
            let fit = constrained_l1_quadratic(&prob, &cfg).unwrap();
            assert_abs_diff_eq!(fit.beta, DVector::from_vec(vec![1.0, -1.0]), epsilon = 1e-9);
        }
    }

    #[test]
    fn orthonormal_soft_threshold() {
        let rho = DVector::from_vec(vec![0.9, -0.3, 0.05, -1.2]);
        let prob = QuadraticLassoProblem::new(DMatrix::identity(4, 4), rho.clone(), 0.2, false).unwrap();
        let fit = constrained_l1_quadratic(&prob, &SolverConfig::default()).unwrap();
        let expected = rho.map(|r| soft_threshold(r, 0.2));
        assert_abs_diff_eq!(fit.beta, expected, epsilon = 1e-12);
    }

    #[test]
    fn cd_and_admm_agree_and_certify() {
        for seed in 0..10 {
            let (s, r) = random_problem(seed, 15, 25);
            for zero_sum in [false, true] {
                let lambda = 0.3 * lambda_max(&r, zero_sum);
                let prob = QuadraticLassoProblem::new(s.clone(), r.clone(), lambda, zero_sum).unwrap();
                let a = constrained_l1_quadratic(&prob, &SolverConfig::default()).unwrap();
                let b = constrained_l1_quadratic(&prob, &SolverConfig::admm()).unwrap();
                assert!(a.kkt_gap <= 1e-6 * (1.0 + r.amax()));
                assert!(b.kkt_gap <= 1e-6 * (1.0 + r.amax()));
                assert!((a.objective - b.objective).abs() < 1e-8, "{} vs {}", a.objective, b.objective);
                if zero_sum {
                    assert!(a.coef_sum().abs() < 1e-12 && b.coef_sum().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn path_is_warm_started_and_matches_cold_fits() {
        let (s, r) = random_problem(3, 20, 12);
        let mut solver = LassoSolver::new(s.clone(), r.clone(), true, SolverConfig::default()).unwrap();
        let lmax = solver.lambda_max();
        let grid: Vec<f64> = (0..10).map(|k| lmax * 0.7f64.powi(k)).collect();
        let path = regularization_path(&mut solver, &grid).unwrap();
        assert_eq!(path.len(), grid.len());
        assert!(path[0].beta.iter().all(|b| *b == 0.0));
        for (fit, &lambda) in path.iter().zip(&grid) {
            let cold = constrained_l1_quadratic(
                &QuadraticLassoProblem::new(s.clone(), r.clone(), lambda, true).unwrap(),
                &SolverConfig::default(),
            )
            .unwrap();
            assert!((fit.objective - cold.objective).abs() < 1e-6);
        }
        assert!(regularization_path(&mut solver, &[1.0, 2.0]).is_err());
        assert!(regularization_path(&mut solver, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn rejects_indefinite_and_bad_inputs() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            LassoSolver::new(s, DVector::zeros(2), true, SolverConfig::default()),
            Err(EricError::Domain(_))
        ));
        assert!(QuadraticLassoProblem::new(DMatrix::identity(2, 2), DVector::zeros(3), 0.1, true).is_err());
        assert!(QuadraticLassoProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), -0.1, true).is_err());
    }

    #[test]
    fn admm_reports_non_convergence() {
        let (s, r) = random_problem(4, 10, 8);
        let cfg = SolverConfig { max_iter: 2, ..SolverConfig::admm() };
        let prob = QuadraticLassoProblem::new(s, r.clone(), 0.01 * lambda_max(&r, true), true).unwrap();
        assert!(matches!(constrained_l1_quadratic(&prob, &cfg), Err(EricError::NotConverged { .. })));
    }

    #[test]
    fn method_strings_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("ridge".parse::<Method>().is_err());
    }
}
