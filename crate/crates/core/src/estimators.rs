//! The four estimators: moment construction plus the shared solver.

use nalgebra::{DMatrix, DVector};

use crate::composition::LogDesign;
use crate::error::{dim_mismatch, EricError, Result};
use crate::linalg::{cross_moment, gram};
use crate::solver::{FitResult, LassoSolver, Method, SolverConfig};
use crate::surrogate::{
    nearest_psd_maxnorm, unbiased_cov, ErrorCovariance, PsdProjection, PsdProjectionConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorConfig {
    pub solver: SolverConfig,
    pub psd: PsdProjectionConfig,
}

/// Gram and cross moment fed to the solver.
#[derive(Debug, Clone)]
pub struct Moments {
    pub sigma: DMatrix<f64>,
    pub rho: DVector<f64>,
    /// Present for corrected moments.
    pub projection: Option<PsdProjection>,
}

impl Moments {
    /// `ZᵀZ/n`, `Zᵀy/n`.
    pub fn raw(z: &LogDesign, y: &DVector<f64>) -> Result<Self> {
        check_response(z, y)?;
        Ok(Self {
            sigma: gram(z.values()),
            rho: cross_moment(z.values(), y),
            projection: None,
        })
    }

    /// Max-norm PSD projection of `ZᵀZ/n − Σ_B`, and `Zᵀy/n`.
    pub fn corrected(
        z: &LogDesign,
        y: &DVector<f64>,
        eb: &ErrorCovariance,
        psd: &PsdProjectionConfig,
    ) -> Result<Self> {
        check_response(z, y)?;
        let hat = unbiased_cov(z, eb)?;
        let proj = nearest_psd_maxnorm(&hat, psd)?;
        Ok(Self {
            sigma: proj.matrix.clone(),
            rho: cross_moment(z.values(), y),
            projection: Some(proj),
        })
    }

    /// Moments appropriate for `method`; corrected methods need `eb`.
    pub fn for_method(
        method: Method,
        z: &LogDesign,
        y: &DVector<f64>,
        eb: Option<&ErrorCovariance>,
        psd: &PsdProjectionConfig,
    ) -> Result<Self> {
        if method.corrected() {
            let eb = eb.ok_or_else(|| {
                EricError::Domain(format!("{method} needs an error covariance"))
            })?;
            Self::corrected(z, y, eb, psd)
        } else {
            Self::raw(z, y)
        }
    }

    /// Projected and raw Grams are PSD by construction, so the solver's own
    /// eigenvalue check is skipped.
    pub fn solver(&self, zero_sum: bool, cfg: &SolverConfig) -> Result<LassoSolver> {
        LassoSolver::new_trusted(self.sigma.clone(), self.rho.clone(), zero_sum, *cfg)
    }
}

fn check_response(z: &LogDesign, y: &DVector<f64>) -> Result<()> {
    if y.len() != z.n() {
        return Err(dim_mismatch(format!(
            "response has {} entries for {} rows",
            y.len(),
            z.n()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EricError::Domain("response has non-finite entries".into()));
    }
    Ok(())
}

/// Fits `method` at a single λ.
pub fn fit_method(
    method: Method,
    z: &LogDesign,
    y: &DVector<f64>,
    eb: Option<&ErrorCovariance>,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    let moments = Moments::for_method(method, z, y, eb, &cfg.psd)?;
    let mut solver = moments.solver(method.zero_sum(), &cfg.solver)?;
    let mut fit = solver.solve(lambda, None)?;
    fit.method = Some(method);
    Ok(fit)
}

pub fn eric_fit(
    z: &LogDesign,
    y: &DVector<f64>,
    eb: &ErrorCovariance,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    fit_method(Method::Eric, z, y, Some(eb), lambda, cfg)
}

pub fn coda_fit(z: &LogDesign, y: &DVector<f64>, lambda: f64, cfg: &EstimatorConfig) -> Result<FitResult> {
    fit_method(Method::Coda, z, y, None, lambda, cfg)
}

pub fn coco_fit(
    z: &LogDesign,
    y: &DVector<f64>,
    eb: &ErrorCovariance,
    lambda: f64,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    fit_method(Method::CoCo, z, y, Some(eb), lambda, cfg)
}

pub fn vanilla_fit(z: &LogDesign, y: &DVector<f64>, lambda: f64, cfg: &EstimatorConfig) -> Result<FitResult> {
    fit_method(Method::Vanilla, z, y, None, lambda, cfg)
}
