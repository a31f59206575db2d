//! Error-corrected second moments.
//!
//! The observed log design `Z = X + B` gives the unbiased but possibly
//! indefinite Gram `ZᵀZ/n − Σ_B`. It is repaired by the nearest positive
//! semidefinite matrix in the elementwise max norm, computed by ADMM, and then
//! reduced to log-ratio coordinates.

use nalgebra::{DMatrix, DVector};

use crate::composition::{ContrastBasis, LogDesign};
use crate::error::{dim_mismatch, EricError, Result};
use crate::linalg::{
    cross_moment, gram, is_symmetric, max_abs, max_abs_diff, min_eigenvalue, symmetric_eigen,
    symmetrize,
};
use crate::prox::prox_max_norm;

/// Covariance of the log-abundance measurement error.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovariance {
    sigma_b: DMatrix<f64>,
    tau_sq: f64,
}

impl ErrorCovariance {
    pub fn new(sigma_b: DMatrix<f64>, tau_sq: f64) -> Result<Self> {
        if !sigma_b.is_square() {
            return Err(dim_mismatch("error covariance must be square"));
        }
        if !is_symmetric(&sigma_b, 1e-12) {
            return Err(EricError::Domain("error covariance is not symmetric".into()));
        }
        if !(tau_sq.is_finite() && tau_sq >= 0.0) {
            return Err(EricError::Domain(format!("tau^2 must be >= 0, got {tau_sq}")));
        }
        let min_eig = min_eigenvalue(&sigma_b)?;
        if min_eig < -1e-10 {
            return Err(EricError::Domain(format!(
                "error covariance is not PSD (min eigenvalue {min_eig:.3e})"
            )));
        }
        Ok(Self { sigma_b, tau_sq })
    }

    /// General Σ_B with `τ²` taken as its mean diagonal.
    pub fn from_matrix(sigma_b: DMatrix<f64>) -> Result<Self> {
        let tau_sq = if sigma_b.is_square() && sigma_b.nrows() > 0 {
            (sigma_b.trace() / sigma_b.nrows() as f64).max(0.0)
        } else {
            0.0
        };
        Self::new(sigma_b, tau_sq)
    }

    /// `τ² I_p`.
    pub fn isotropic(p: usize, tau_sq: f64) -> Result<Self> {
        Self::new(DMatrix::identity(p, p) * tau_sq, tau_sq)
    }

    pub fn zeros(p: usize) -> Self {
        Self {
            sigma_b: DMatrix::zeros(p, p),
            tau_sq: 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma_b
    }

    pub fn tau_sq(&self) -> f64 {
        self.tau_sq
    }

    pub fn p(&self) -> usize {
        self.sigma_b.nrows()
    }

    /// Same covariance with components reordered: entry `(i, j)` of the
    /// result is entry `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.p();
        Self {
            sigma_b: DMatrix::from_fn(p, p, |i, j| self.sigma_b[(perm[i], perm[j])]),
            tau_sq: self.tau_sq,
        }
    }
}

/// `ZᵀZ/n − Σ_B`. Symmetric, possibly indefinite.
pub fn unbiased_cov(z: &LogDesign, eb: &ErrorCovariance) -> Result<DMatrix<f64>> {
    if z.p() != eb.p() {
        return Err(dim_mismatch(format!(
            "design has {} columns, error covariance is {}x{}",
            z.p(),
            eb.p(),
            eb.p()
        )));
    }
    Ok(symmetrize(&(gram(z.values()) - eb.matrix())))
}

/// `B_oᵀ B_o / n_o` from observed error realisations (external or replicate data).
pub fn estimate_error_cov(b_o: &DMatrix<f64>) -> Result<ErrorCovariance> {
    if b_o.nrows() == 0 {
        return Err(EricError::InsufficientData("no error realisations".into()));
    }
    let sigma_b = gram(b_o);
    let p = sigma_b.nrows().max(1) as f64;
    let tau_sq = sigma_b.trace() / p;
    Ok(ErrorCovariance { sigma_b, tau_sq })
}

/// Settings of the max-norm PSD projection ADMM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdProjectionConfig {
    /// Relative Frobenius tolerance on both residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Lower bound imposed on the eigenvalues of the result.
    pub floor: f64,
    /// Initial ADMM penalty.
    pub penalty: f64,
    /// On hitting `max_iter`, return the best feasible iterate instead of
    /// failing. Every `K` iterate is feasible, so this only trades optimality.
    pub accept_max_iter: bool,
}

impl Default for PsdProjectionConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
            floor: 1e-8,
            penalty: 1.0,
            accept_max_iter: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsdProjection {
    pub matrix: DMatrix<f64>,
    /// Achieved `‖K − S‖_max`.
    pub gap: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// False when returned early under `accept_max_iter`.
    pub converged: bool,
}

/// Eigenvalue clipping `Q max(Λ, floor) Qᵀ`: feasible but not max-norm optimal.
pub(crate) fn clip_eigenvalues(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen(s)?;
    Ok(clip_from_eigen(&symmetrize(s), &eig.values, &eig.vectors, floor))
}

/// Rebuilds `Q max(Λ, floor) Qᵀ` as a low-rank correction of whichever side
/// of `floor` has fewer eigenvalues.
fn clip_from_eigen(a: &DMatrix<f64>, values: &[f64], vectors: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let p = values.len();
    let below = values.iter().take_while(|&&v| v < floor).count();
    if below == 0 {
        return a.clone();
    }
    let (cols, start, base_is_floor): (usize, usize, bool) = if below <= p / 2 {
        (below, 0, false)
    } else {
        (p - below, below, true)
    };
    let mut w = DMatrix::zeros(p, cols);
    for k in 0..cols {
        let idx = start + k;
        let d = if base_is_floor {
            values[idx] - floor
        } else {
            floor - values[idx]
        };
        let scale = d.max(0.0).sqrt();
        w.set_column(k, &(vectors.column(idx) * scale));
    }
    let correction = &w * w.transpose();
    let mut k = if base_is_floor {
        DMatrix::identity(p, p) * floor + correction
    } else {
        a + correction
    };
    k = symmetrize(&k);
    k
}

/// The penalty is rebalanced at every iteration up to `REBALANCE_FREE`, then
/// every `REBALANCE_EVERY` iterations; frequent late updates can cycle.
const REBALANCE_FREE: usize = 100;
const REBALANCE_EVERY: usize = 20;

/// Nearest matrix with eigenvalues `>= floor` in the elementwise max norm.
///
/// ADMM on `min ‖L − S‖_max s.t. K ⪰ floor·I, K = L`: the `K` step clips
/// eigenvalues, the `L` step is the max-norm prox via the Moreau identity with
/// an l1-ball projection, followed by a scaled dual update. The penalty is
/// rebalanced (×/÷ 2) every few iterations when one residual exceeds the
/// other tenfold.
pub fn nearest_psd_maxnorm(s: &DMatrix<f64>, cfg: &PsdProjectionConfig) -> Result<PsdProjection> {
    if !s.is_square() {
        return Err(dim_mismatch("PSD projection of a non-square matrix"));
    }
    if !(cfg.tol > 0.0) || !(cfg.floor >= 0.0) || !(cfg.penalty > 0.0) {
        return Err(EricError::Domain(
            "PSD projection needs tol > 0, floor >= 0 and penalty > 0".into(),
        ));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(EricError::Domain("matrix to project has non-finite entries".into()));
    }
    let p = s.nrows();
    let s = symmetrize(s);

    // Already feasible: the matrix itself is optimal.
    let eig = symmetric_eigen(&s)?;
    if eig.values.first().is_none_or(|&v| v >= cfg.floor) {
        return Ok(PsdProjection {
            matrix: s,
            gap: 0.0,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            converged: true,
        });
    }

    let mut l = s.clone();
    let mut u = DMatrix::zeros(p, p);
    let mut sigma = cfg.penalty;
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut v = DMatrix::zeros(p, p);

    for iter in 1..=cfg.max_iter {
        let a = &l - &u;
        let eig = symmetric_eigen(&a)?;
        let k = clip_from_eigen(&symmetrize(&a), &eig.values, &eig.vectors, cfg.floor);

        v.copy_from(&k);
        v += &u;
        v -= &s;
        prox_max_norm(v.as_mut_slice(), 1.0 / sigma);
        let l_new = symmetrize(&(&s + &v));

        let diff = &k - &l_new;
        primal = diff.norm();
        dual = sigma * (&l_new - &l).norm();
        u += &diff;
        l = l_new;

        let scale_p = 1.0 + k.norm().max(l.norm());
        let scale_d = 1.0 + sigma * u.norm();
        if primal <= cfg.tol * scale_p && dual <= cfg.tol * scale_d {
            let gap = max_abs_diff(&k, &s);
            return Ok(PsdProjection {
                matrix: k,
                gap,
                iterations: iter,
                primal_residual: primal,
                dual_residual: dual,
                converged: true,
            });
        }
        if cfg.accept_max_iter {
            let gap = max_abs_diff(&k, &s);
            if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                best = Some((gap, k));
            }
        }

        if iter > REBALANCE_FREE && iter % REBALANCE_EVERY != 0 {
        } else if primal > 10.0 * dual {
            sigma *= 2.0;
            u *= 0.5;
        } else if dual > 10.0 * primal {
            sigma *= 0.5;
            u *= 2.0;
        }
    }
    if let Some((gap, matrix)) = best {
        log::debug!("PSD projection stopped at max_iter with gap {gap:.4e}");
        return Ok(PsdProjection {
            matrix,
            gap,
            iterations: cfg.max_iter,
            primal_residual: primal,
            dual_residual: dual,
            converged: false,
        });
    }
    Err(EricError::NotConverged {
        solver: "max-norm PSD projection",
        iterations: cfg.max_iter,
        primal,
        dual,
    })
}

/// Corrected moments, full and in log-ratio coordinates.
#[derive(Debug, Clone)]
pub struct SurrogateMoments {
    pub sigma_tilde: DMatrix<f64>,
    pub rho_tilde: DVector<f64>,
    pub sigma_tilde_p: DMatrix<f64>,
    pub rho_tilde_p: DVector<f64>,
    pub reference: usize,
    /// `‖Σ̃ − Σ̂‖_max` when produced by [`surrogate_moments`].
    pub psd_gap: Option<f64>,
}

/// `ρ̃ = Zᵀy/n` plus the reductions `DᵀΣ̃D` and `Dᵀρ̃`.
pub fn contrast_moments(
    sigma_tilde: &DMatrix<f64>,
    z: &LogDesign,
    y: &DVector<f64>,
    basis: &ContrastBasis,
) -> Result<SurrogateMoments> {
    let p = basis.p();
    if sigma_tilde.shape() != (p, p) || z.p() != p {
        return Err(dim_mismatch("moment, design and basis dimensions disagree"));
    }
    if y.len() != z.n() {
        return Err(dim_mismatch(format!(
            "response has {} entries for {} rows",
            y.len(),
            z.n()
        )));
    }
    let rho_tilde = cross_moment(z.values(), y);
    let r = basis.reference();
    let free: Vec<usize> = basis.free_components().collect();
    let sigma_tilde_p = DMatrix::from_fn(p - 1, p - 1, |a, b| {
        let (k, l) = (free[a], free[b]);
        sigma_tilde[(k, l)] - sigma_tilde[(k, r)] - sigma_tilde[(r, l)] + sigma_tilde[(r, r)]
    });
    let rho_tilde_p = DVector::from_iterator(p - 1, free.iter().map(|&k| rho_tilde[k] - rho_tilde[r]));
    Ok(SurrogateMoments {
        sigma_tilde: sigma_tilde.clone(),
        rho_tilde,
        sigma_tilde_p,
        rho_tilde_p,
        reference: r,
        psd_gap: None,
    })
}

/// Full pipeline: unbiased Gram, max-norm projection, log-ratio reduction.
pub fn surrogate_moments(
    z: &LogDesign,
    y: &DVector<f64>,
    eb: &ErrorCovariance,
    basis: &ContrastBasis,
    cfg: &PsdProjectionConfig,
) -> Result<SurrogateMoments> {
    let hat = unbiased_cov(z, eb)?;
    let proj = nearest_psd_maxnorm(&hat, cfg)?;
    let mut m = contrast_moments(&proj.matrix, z, y, basis)?;
    m.psd_gap = Some(proj.gap);
    Ok(m)
}

/// Largest absolute entry; re-exported for diagnostics.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    max_abs(m)
}
