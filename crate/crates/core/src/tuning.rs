//! λ grids and cross-validation.
//!
//! Raw-moment methods are scored by held-out squared prediction error;
//! corrected methods by the corrected quadratic loss
//! `½ βᵀΣ̃_v β − ρ̃_vᵀβ` built from the held-out rows.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::composition::{column_means, subtract_row_vector, LogDesign};
use crate::error::{dim_mismatch, EricError, Result};
use crate::estimators::{EstimatorConfig, Moments};
use crate::linalg::{cross_moment, gram, select_entries, select_rows};
use crate::solver::{regularization_path_until_stall, validate_grid, FitResult, Method};
use crate::surrogate::{clip_eigenvalues, nearest_psd_maxnorm, ErrorCovariance};

pub use crate::solver::lambda_max;

pub const DEFAULT_GRID_POINTS: usize = 100;
pub const DEFAULT_MIN_RATIO: f64 = 1e-3;
pub const DEFAULT_FOLDS: usize = 5;

/// Log-spaced, strictly descending λ values from `λ_max` to `λ_max·min_ratio`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
    min_ratio: f64,
}

impl LambdaGrid {
    pub fn new(lambda_max: f64, n_points: usize, min_ratio: f64) -> Result<Self> {
        if !(lambda_max.is_finite() && lambda_max > 0.0) {
            return Err(EricError::Domain(format!(
                "lambda_max must be positive, got {lambda_max}; the zero model is optimal for every lambda"
            )));
        }
        if !(min_ratio > 0.0 && min_ratio < 1.0) {
            return Err(EricError::Domain(format!("min_ratio must lie in (0,1), got {min_ratio}")));
        }
        if n_points < 2 {
            return Err(EricError::Domain("a lambda grid needs at least two points".into()));
        }
        let step = min_ratio.ln() / (n_points - 1) as f64;
        let mut values: Vec<f64> = (0..n_points)
            .map(|k| lambda_max * (step * k as f64).exp())
            .collect();
        values[0] = lambda_max;
        values[n_points - 1] = lambda_max * min_ratio;
        Ok(Self { values, min_ratio })
    }

    /// Default grid for the moments of a method.
    pub fn for_moments(rho: &DVector<f64>, zero_sum: bool) -> Result<Self> {
        Self::new(lambda_max(rho, zero_sum), DEFAULT_GRID_POINTS, DEFAULT_MIN_RATIO)
    }

    /// Arbitrary strictly descending positive values.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EricError::Domain("empty lambda grid".into()));
        }
        validate_grid(&values)?;
        let min_ratio = values[values.len() - 1] / values[0];
        Ok(Self { values, min_ratio })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    pub fn min_ratio(&self) -> f64 {
        self.min_ratio
    }

    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionRule {
    #[default]
    Min,
    OneSe,
}

impl fmt::Display for SelectionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionRule::Min => "min",
            SelectionRule::OneSe => "one-se",
        })
    }
}

impl FromStr for SelectionRule {
    type Err = EricError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(SelectionRule::Min),
            "one-se" | "1se" => Ok(SelectionRule::OneSe),
            other => Err(EricError::Parse(format!("unknown selection rule '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub method: Method,
    pub lambdas: Vec<f64>,
    /// Mean held-out loss per λ; `+∞` where some fold's path stalled.
    pub mean_loss: Vec<f64>,
    pub se_loss: Vec<f64>,
    pub chosen_index: usize,
    pub rule: SelectionRule,
    pub folds: usize,
}

impl CvReport {
    pub fn chosen_lambda(&self) -> f64 {
        self.lambdas[self.chosen_index]
    }

    /// Columns `lambda,mean_loss,se_loss,chosen`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["lambda", "mean_loss", "se_loss", "chosen"])?;
        for (k, lambda) in self.lambdas.iter().enumerate() {
            wr.write_record([
                format!("{lambda:e}"),
                format!("{:e}", self.mean_loss[k]),
                format!("{:e}", self.se_loss[k]),
                u8::from(k == self.chosen_index).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub rule: SelectionRule,
    pub estimator: EstimatorConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            seed: 0,
            rule: SelectionRule::Min,
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Fold label of every row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(EricError::Domain(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(EricError::InsufficientData(format!("{n} rows cannot form {folds} folds")));
    }
    let largest = n.div_ceil(folds);
    if n - largest < 2 {
        return Err(EricError::InsufficientData(format!(
            "a training fold would have fewer than 2 rows ({n} rows, {folds} folds)"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        labels[row] = pos % folds;
    }
    Ok(labels)
}

/// Training design (re-centred on its own rows) and held-out rows centred
/// with the training means.
struct FoldSplit {
    train: LogDesign,
    y_train: DVector<f64>,
    z_val: DMatrix<f64>,
    y_val: DVector<f64>,
}

fn split(z: &LogDesign, y: &DVector<f64>, labels: &[usize], fold: usize) -> FoldSplit {
    let raw = z.raw_values();
    let train_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != fold).collect();
    let val_idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == fold).collect();
    let mut z_train = select_rows(&raw, &train_idx);
    let mut z_val = select_rows(&raw, &val_idx);
    let mut y_train = select_entries(y, &train_idx);
    let mut y_val = select_entries(y, &val_idx);
    if z.is_centered() {
        let means = column_means(&z_train);
        subtract_row_vector(&mut z_train, &means);
        subtract_row_vector(&mut z_val, &means);
        let y_mean = y_train.mean();
        y_train.add_scalar_mut(-y_mean);
        y_val.add_scalar_mut(-y_mean);
    }
    FoldSplit {
        train: LogDesign::from_log_values_unchecked(z_train, false),
        y_train,
        z_val,
        y_val,
    }
}

/// Projected held-out moments; clipping if the projection fails.
fn validation_moments(
    split: &FoldSplit,
    eb: &ErrorCovariance,
    cfg: &EstimatorConfig,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let hat = gram(&split.z_val) - eb.matrix();
    let sigma = match nearest_psd_maxnorm(&hat, &cfg.psd) {
        Ok(proj) => proj.matrix,
        Err(EricError::NotConverged { .. }) => {
            log::warn!("held-out PSD projection did not converge; using eigenvalue clipping");
            clip_eigenvalues(&hat, cfg.psd.floor)?
        }
        Err(e) => return Err(e),
    };
    Ok((sigma, cross_moment(&split.z_val, &split.y_val)))
}

fn mse(z_val: &DMatrix<f64>, y_val: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    (z_val * beta - y_val).norm_squared() / y_val.len() as f64
}

fn corrected_loss(sigma: &DMatrix<f64>, rho: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    0.5 * (sigma * beta).dot(beta) - rho.dot(beta)
}

/// Per-fold losses on `grid`; λ values past a stalled path score `+∞`.
fn fold_losses(
    path: &[FitResult],
    grid: &[f64],
    score: impl Fn(&DVector<f64>) -> f64,
) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; grid.len()];
    for (k, fit) in path.iter().enumerate() {
        out[k] = score(&fit.beta);
    }
    out
}

/// Cross-validates several methods on shared folds.
///
/// Corrected and raw fold moments are computed once and reused by every
/// method that needs them.
pub fn cross_validate(
    methods: &[(Method, &LambdaGrid)],
    z: &LogDesign,
    y: &DVector<f64>,
    eb: Option<&ErrorCovariance>,
    cfg: &CvConfig,
) -> Result<Vec<CvReport>> {
    if y.len() != z.n() {
        return Err(dim_mismatch(format!(
            "response has {} entries for {} rows",
            y.len(),
            z.n()
        )));
    }
    let needs_corrected = methods.iter().any(|(m, _)| m.corrected());
    let needs_raw = methods.iter().any(|(m, _)| !m.corrected());
    if needs_corrected && eb.is_none() {
        return Err(EricError::Domain("calibrated CV needs an error covariance".into()));
    }
    if let Some(eb) = eb {
        if eb.p() != z.p() {
            return Err(dim_mismatch("error covariance and design disagree in p"));
        }
    }
    let labels = fold_assignment(z.n(), cfg.folds, cfg.seed)?;
    let est = &cfg.estimator;

    // losses[fold][method][λ]
    let losses: Vec<Vec<Vec<f64>>> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| -> Result<Vec<Vec<f64>>> {
            let s = split(z, y, &labels, fold);
            let raw = if needs_raw {
                Some(Moments::raw(&s.train, &s.y_train)?)
            } else {
                None
            };
            let corrected = match (needs_corrected, eb) {
                (true, Some(eb)) => Some((
                    Moments::corrected(&s.train, &s.y_train, eb, &est.psd)?,
                    validation_moments(&s, eb, est)?,
                )),
                _ => None,
            };
            methods
                .iter()
                .map(|(method, grid)| {
                    let grid = grid.values();
                    if method.corrected() {
                        let (train, (sv, rv)) = corrected.as_ref().expect("computed above");
                        let mut solver = train.solver(method.zero_sum(), &est.solver)?;
                        let path = regularization_path_until_stall(&mut solver, grid)?;
                        Ok(fold_losses(&path, grid, |b| corrected_loss(sv, rv, b)))
                    } else {
                        let train = raw.as_ref().expect("computed above");
                        let mut solver = train.solver(method.zero_sum(), &est.solver)?;
                        let path = regularization_path_until_stall(&mut solver, grid)?;
                        Ok(fold_losses(&path, grid, |b| mse(&s.z_val, &s.y_val, b)))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    methods
        .iter()
        .enumerate()
        .map(|(mi, (method, grid))| {
            let per_fold: Vec<&Vec<f64>> = losses.iter().map(|f| &f[mi]).collect();
            summarise(*method, grid.values(), &per_fold, cfg.rule)
        })
        .collect()
}

fn summarise(method: Method, grid: &[f64], per_fold: &[&Vec<f64>], rule: SelectionRule) -> Result<CvReport> {
    let k = per_fold.len() as f64;
    let mut mean_loss = Vec::with_capacity(grid.len());
    let mut se_loss = Vec::with_capacity(grid.len());
    for j in 0..grid.len() {
        let vals: Vec<f64> = per_fold.iter().map(|f| f[j]).collect();
        if vals.iter().any(|v| !v.is_finite()) {
            mean_loss.push(f64::INFINITY);
            se_loss.push(f64::INFINITY);
            continue;
        }
        let m = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k - 1.0);
        mean_loss.push(m);
        se_loss.push((var / k).sqrt());
    }
    let best = (0..grid.len())
        .filter(|&j| mean_loss[j].is_finite())
        .min_by(|&a, &b| mean_loss[a].total_cmp(&mean_loss[b]))
        .ok_or(EricError::NotConverged {
            solver: "cross-validation path",
            iterations: 0,
            primal: f64::NAN,
            dual: f64::NAN,
        })?;
    let chosen_index = match rule {
        SelectionRule::Min => best,
        SelectionRule::OneSe => {
            let limit = mean_loss[best] + se_loss[best];
            (0..=best).find(|&j| mean_loss[j] <= limit).unwrap_or(best)
        }
    };
    Ok(CvReport {
        method,
        lambdas: grid.to_vec(),
        mean_loss,
        se_loss,
        chosen_index,
        rule,
        folds: per_fold.len(),
    })
}

/// Standard K-fold CV for the raw-moment methods.
pub fn kfold_cv(
    z: &LogDesign,
    y: &DVector<f64>,
    method: Method,
    grid: &LambdaGrid,
    cfg: &CvConfig,
) -> Result<CvReport> {
    if method.corrected() {
        return Err(EricError::Domain(format!("{method} is tuned by calibrated CV")));
    }
    Ok(cross_validate(&[(method, grid)], z, y, None, cfg)?.remove(0))
}

/// Calibrated CV for the corrected-moment methods.
pub fn calibrated_cv(
    z: &LogDesign,
    y: &DVector<f64>,
    eb: &ErrorCovariance,
    method: Method,
    grid: &LambdaGrid,
    cfg: &CvConfig,
) -> Result<CvReport> {
    if !method.corrected() {
        return Err(EricError::Domain(format!("{method} is tuned by standard CV")));
    }
    Ok(cross_validate(&[(method, grid)], z, y, Some(eb), cfg)?.remove(0))
}
