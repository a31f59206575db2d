//! Bootstrap leave-one-out prediction error.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::bench::{bench_estimator_config, tune_and_fit, TuneSpec};
use crate::composition::LogDesign;
use crate::error::{dim_mismatch, EricError, Result};
use crate::estimators::EstimatorConfig;
use crate::linalg::{select_entries, select_rows};
use crate::metrics::SUPPORT_THRESHOLD;
use crate::simulate::{
    contaminate_log, derived_seed, gen_response, gen_scenario1, rng_for, ErrorSampler, ScenarioConfig,
    ScenarioKind, Stream,
};
use crate::solver::Method;
use crate::tuning::{SelectionRule, DEFAULT_FOLDS};

#[derive(Debug, Clone, PartialEq)]
pub struct LooReport {
    pub mse_loo: f64,
    pub mae_loo: f64,
    /// Number of fits with `|β̂_j|` above the support threshold, per component.
    pub selection_count: Vec<usize>,
    /// Observations with at least one excluding replicate.
    pub evaluated: usize,
    pub failed_fits: usize,
}

/// `n_boot` row samples of size `⌊n/2⌋`, drawn with replacement.
pub fn bootstrap_samples(n: usize, n_boot: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..n_boot as u64)
        .map(|b| {
            let mut rng = rng_for(seed, b, Stream::Bootstrap);
            (0..n / 2).map(|_| rng.gen_range(0..n)).collect()
        })
        .collect()
}

/// Leave-one-out aggregation over given samples.
///
/// `fit(b, rows)` returns one coefficient vector per output slot (for example
/// one per method). Observation `i` is predicted as
/// `ȳ_b + (x_i − x̄_b)ᵀβ̂_b` from the clean design, using only the samples that
/// exclude it; fits that fail are skipped.
pub fn bootstrap_loo_with<F>(
    y: &DVector<f64>,
    x_clean: &LogDesign,
    samples: &[Vec<usize>],
    outputs: usize,
    fit: F,
) -> Result<Vec<LooReport>>
where
    F: Fn(usize, &[usize]) -> Result<Vec<DVector<f64>>> + Sync,
{
    let n = y.len();
    if x_clean.n() != n {
        return Err(dim_mismatch("response and clean design differ in rows"));
    }
    if n < 4 {
        return Err(EricError::InsufficientData(format!("bootstrap needs n >= 4, got {n}")));
    }
    if samples.is_empty() {
        return Err(EricError::Domain("at least one bootstrap sample is required".into()));
    }
    let x = x_clean.raw_values();
    let p = x.ncols();
    let fits: Vec<Option<Vec<DVector<f64>>>> = samples
        .par_iter()
        .enumerate()
        .map(|(b, rows)| match fit(b, rows) {
            Ok(betas) if betas.len() == outputs && betas.iter().all(|v| v.len() == p) => Some(betas),
            Ok(_) => {
                log::warn!("bootstrap fit {b} returned the wrong shape; skipped");
                None
            }
            Err(e) => {
                log::warn!("bootstrap fit {b} failed: {e}");
                None
            }
        })
        .collect();

    let mut sq = vec![vec![0.0; n]; outputs];
    let mut ab = vec![vec![0.0; n]; outputs];
    let mut counts = vec![0usize; n];
    let mut selection = vec![vec![0usize; p]; outputs];
    let mut failed = 0;
    for (rows, betas) in samples.iter().zip(&fits) {
        let Some(betas) = betas else {
            failed += 1;
            continue;
        };
        let mut inside = vec![false; n];
        rows.iter().for_each(|&r| inside[r] = true);
        let xb = select_rows(&x, rows);
        let x_mean = DVector::from_fn(p, |j, _| xb.column(j).mean());
        let y_mean = select_entries(y, rows).mean();
        for i in (0..n).filter(|&i| !inside[i]) {
            counts[i] += 1;
            for (k, beta) in betas.iter().enumerate() {
                let pred = y_mean + (0..p).map(|j| (x[(i, j)] - x_mean[j]) * beta[j]).sum::<f64>();
                let r = y[i] - pred;
                sq[k][i] += r * r;
                ab[k][i] += r.abs();
            }
        }
        for (k, beta) in betas.iter().enumerate() {
            for j in 0..p {
                selection[k][j] += usize::from(beta[j].abs() > SUPPORT_THRESHOLD);
            }
        }
    }
    let evaluated = counts.iter().filter(|&&c| c > 0).count();
    if evaluated < n {
        log::warn!("{} observations appear in every bootstrap sample and are not evaluated", n - evaluated);
    }
    if evaluated == 0 {
        return Err(EricError::InsufficientData("no observation was left out of any bootstrap sample".into()));
    }
    Ok((0..outputs)
        .map(|k| {
            let avg = |acc: &[f64]| {
                (0..n).filter(|&i| counts[i] > 0).map(|i| acc[i] / counts[i] as f64).sum::<f64>() / evaluated as f64
            };
            LooReport {
                mse_loo: avg(&sq[k]),
                mae_loo: avg(&ab[k]),
                selection_count: selection[k].clone(),
                evaluated,
                failed_fits: failed,
            }
        })
        .collect())
}

/// Bootstrap LOO for a single fitter on a fixed corrupted design.
pub fn bootstrap_loo<F>(
    y: &DVector<f64>,
    x_clean: &LogDesign,
    z_corrupt: &LogDesign,
    n_boot: usize,
    seed: u64,
    fitter: F,
) -> Result<LooReport>
where
    F: Fn(&LogDesign, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    if z_corrupt.n() != y.len() || z_corrupt.p() != x_clean.p() {
        return Err(dim_mismatch("corrupted design does not match the clean design"));
    }
    let z = z_corrupt.raw_values();
    let samples = bootstrap_samples(y.len(), n_boot, seed);
    let mut out = bootstrap_loo_with(y, x_clean, &samples, 1, |_, rows| {
        let zb = LogDesign::from_log_values_unchecked(select_rows(&z, rows), true);
        Ok(vec![fitter(&zb, &select_entries(y, rows))?])
    })?;
    Ok(out.remove(0))
}

#[derive(Debug, Clone)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub sampler: ErrorSampler,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub grid_points: usize,
    pub min_ratio: f64,
    pub folds: usize,
    pub rule: SelectionRule,
    pub estimator: EstimatorConfig,
}

impl BootstrapConfig {
    pub fn new(n_boot: usize, sampler: ErrorSampler, seed: u64) -> Self {
        Self {
            n_boot,
            sampler,
            seed,
            methods: Method::ALL.to_vec(),
            grid_points: 40,
            min_ratio: 1e-2,
            folds: DEFAULT_FOLDS,
            rule: SelectionRule::Min,
            estimator: bench_estimator_config(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapResult {
    pub methods: Vec<Method>,
    pub reports: Vec<LooReport>,
    pub n_boot: usize,
}

/// Full protocol on a clean design: each bootstrap sample is contaminated
/// afresh, every method is tuned by CV and refit, and predictions use the
/// clean design.
pub fn run_bootstrap(y: &DVector<f64>, x_clean: &LogDesign, cfg: &BootstrapConfig) -> Result<BootstrapResult> {
    if cfg.methods.is_empty() {
        return Err(EricError::Domain("no methods selected".into()));
    }
    let p = x_clean.p();
    let eb = cfg.sampler.error_covariance(p)?;
    let needs_eb = cfg.methods.iter().any(|m| m.corrected());
    let x = x_clean.raw_values();
    let samples = bootstrap_samples(y.len(), cfg.n_boot, cfg.seed);
    let reports = bootstrap_loo_with(y, x_clean, &samples, cfg.methods.len(), |b, rows| {
        let mut rng = rng_for(cfg.seed, b as u64, Stream::MeasurementError);
        let log_e = cfg.sampler.sample_log(rows.len(), p, &mut rng)?;
        let xb = LogDesign::from_log_values_unchecked(select_rows(&x, rows), false);
        let zb = contaminate_log(&xb, &log_e)?.centered();
        let spec = TuneSpec {
            grid_points: cfg.grid_points,
            min_ratio: cfg.min_ratio,
            folds: cfg.folds,
            rule: cfg.rule,
            fold_seed: derived_seed(cfg.seed, b as u64, Stream::Folds),
        };
        let fits = tune_and_fit(&cfg.methods, &zb, &select_entries(y, rows), needs_eb.then_some(&eb), &spec, &cfg.estimator)?;
        Ok(fits.into_iter().map(|f| f.beta).collect())
    })?;
    Ok(BootstrapResult {
        methods: cfg.methods.clone(),
        reports,
        n_boot: cfg.n_boot,
    })
}

/// Synthetic stand-in data: a Scenario-1 clean design and its response.
pub fn synthetic_dataset(n: usize, p: usize, seed: u64) -> Result<(DVector<f64>, LogDesign)> {
    let cfg = ScenarioConfig::new(ScenarioKind::LogisticNormal, n, p, 0.0, seed)?;
    let clean = gen_scenario1(&cfg, 0)?;
    let mut rng = rng_for(seed, 0, Stream::Response);
    let y = gen_response(&clean.x, &cfg.beta_star, cfg.sigma_eps, &mut rng)?;
    Ok((y, clean.x))
}

/// Method comparison as `method,mse_loo,mae_loo,evaluated,failed_fits`.
pub fn write_bootstrap_csv<W: Write>(res: &BootstrapResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "mse_loo", "mae_loo", "evaluated", "failed_fits"])?;
    for (m, r) in res.methods.iter().zip(&res.reports) {
        out.write_record([
            m.as_str().to_string(),
            format!("{:.10e}", r.mse_loo),
            format!("{:.10e}", r.mae_loo),
            r.evaluated.to_string(),
            r.failed_fits.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Selection frequencies as `component,name,method,count,frequency`.
pub fn write_selection_csv<W: Write>(res: &BootstrapResult, names: &[String], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["component", "name", "method", "count", "frequency"])?;
    for (m, r) in res.methods.iter().zip(&res.reports) {
        for (j, &c) in r.selection_count.iter().enumerate() {
            out.write_record([
                j.to_string(),
                names.get(j).cloned().unwrap_or_default(),
                m.as_str().to_string(),
                c.to_string(),
                format!("{:.6}", c as f64 / res.n_boot as f64),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn toy_design(n: usize) -> LogDesign {
        let raw = DMatrix::from_fn(n, 2, |i, j| if j == 0 { -(1.0 + i as f64).ln_1p() } else { 0.0 });
        let mut log = raw.clone();
        for i in 0..n {
            let lse = crate::composition::log_sum_exp(raw.row(i).iter().copied());
            log.row_mut(i).add_scalar_mut(-lse);
        }
        LogDesign::from_log_values(log, false).unwrap()
    }

    #[test]
    fn only_excluded_rows_are_evaluated() {
        let x = toy_design(4);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 5.0]);
        let samples = vec![vec![0, 1]];
        let r = bootstrap_loo_with(&y, &x, &samples, 1, |_, _| Ok(vec![DVector::zeros(2)])).unwrap();
        // Constant predictor ȳ = 1.5 evaluated on rows 3 and 4.
        assert_eq!(r[0].evaluated, 2);
        assert!((r[0].mse_loo - (1.5f64.powi(2) + 3.5f64.powi(2)) / 2.0).abs() < 1e-12);
        assert!((r[0].mae_loo - 2.5).abs() < 1e-12);
    }

    #[test]
    fn hand_traced_two_samples() {
        let x = toy_design(4);
        let y = DVector::from_column_slice(&[1.0, 2.0, 3.0, 5.0]);
        // Sample A = {1,1} (ȳ=2), sample B = {0,3} (ȳ=3).
        let samples = vec![vec![1, 1], vec![0, 3]];
        let r = bootstrap_loo_with(&y, &x, &samples, 1, |_, _| Ok(vec![DVector::zeros(2)])).unwrap();
        // Row 0: A → 1. Row 1: B → 1. Row 2: A → 1, B → 0. Row 3: A → 9.
        let mse = (1.0 + 1.0 + 0.5 + 9.0) / 4.0;
        let mae = (1.0 + 1.0 + 0.5 + 3.0) / 4.0;
        assert!((r[0].mse_loo - mse).abs() < 1e-12);
        assert!((r[0].mae_loo - mae).abs() < 1e-12);
    }

    #[test]
    fn true_coefficients_give_zero_error() {
        let cfg = ScenarioConfig::new(ScenarioKind::LogisticNormal, 20, 10, 0.0, 5).unwrap();
        let clean = gen_scenario1(&cfg, 0).unwrap();
        let y = clean.x.raw_values() * cfg.beta_star.as_vector();
        let beta = cfg.beta_star.as_vector().clone();
        let r = bootstrap_loo(&y, &clean.x, &clean.x, 10, 3, |_, _| Ok(beta.clone())).unwrap();
        assert!(r.mse_loo < 1e-20 && r.mae_loo < 1e-10);
        assert_eq!(r.selection_count.iter().filter(|&&c| c == 10).count(), 6);
    }

    #[test]
    fn smoke_pipeline() {
        let (y, x) = synthetic_dataset(24, 10, 1).unwrap();
        let mut cfg = BootstrapConfig::new(3, ErrorSampler::bootstrap_uniform(), 1);
        cfg.grid_points = 10;
        cfg.folds = 3;
        let res = run_bootstrap(&y, &x, &cfg).unwrap();
        assert_eq!(res.reports.len(), 4);
        assert!(res.reports.iter().all(|r| r.mse_loo.is_finite() && r.failed_fits == 0));
    }
}
