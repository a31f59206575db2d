//! Monte Carlo benchmark and ROC runners over simulated replicates.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{EricError, Result};
use crate::estimators::{EstimatorConfig, Moments};
use crate::linalg::gram;
use crate::metrics::{
    average_operating_points, eval_metrics, operating_point, roc_from_points, zero_sum_ttest,
    MetricsReport, RocCurve, TTest,
};
use crate::simulate::{derived_seed, generate_replicate, Replicate, ScenarioConfig, Stream};
use crate::composition::LogDesign;
use crate::solver::{lambda_max, regularization_path_until_stall, FitResult, Method, SolverConfig};
use crate::surrogate::ErrorCovariance;
use crate::surrogate::PsdProjectionConfig;
use crate::tuning::{cross_validate, CvConfig, LambdaGrid, SelectionRule, DEFAULT_FOLDS};

/// Fraction of failed replicates above which a run is reported as failed.
pub const FAILURE_BUDGET: f64 = 0.10;

/// Projection settings for Monte Carlo runs: a looser tolerance and a capped
/// iteration count whose best feasible iterate is accepted.
pub fn bench_psd_config() -> PsdProjectionConfig {
    PsdProjectionConfig {
        tol: 1e-4,
        max_iter: 40,
        accept_max_iter: true,
        ..PsdProjectionConfig::default()
    }
}

pub fn bench_estimator_config() -> EstimatorConfig {
    EstimatorConfig {
        solver: SolverConfig::default(),
        psd: bench_psd_config(),
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: ScenarioConfig,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub grid_points: usize,
    pub min_ratio: f64,
    pub folds: usize,
    pub rule: SelectionRule,
    pub estimator: EstimatorConfig,
}

impl BenchConfig {
    pub fn new(scenario: ScenarioConfig, reps: usize) -> Self {
        Self {
            scenario,
            reps,
            methods: Method::ALL.to_vec(),
            grid_points: 50,
            min_ratio: 1e-2,
            folds: DEFAULT_FOLDS,
            rule: SelectionRule::Min,
            estimator: bench_estimator_config(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    /// One entry per configured method, in order.
    pub metrics: Vec<MetricsReport>,
    pub lambdas: Vec<f64>,
    pub betas: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub methods: Vec<Method>,
    pub outcomes: Vec<ReplicateOutcome>,
    pub failures: Vec<(u64, String)>,
}

impl BenchResult {
    pub fn failure_fraction(&self) -> f64 {
        let total = self.outcomes.len() + self.failures.len();
        if total == 0 {
            0.0
        } else {
            self.failures.len() as f64 / total as f64
        }
    }

    pub fn over_budget(&self) -> bool {
        self.failure_fraction() > FAILURE_BUDGET
    }

    /// Per-replicate metrics of one method.
    pub fn metrics_for(&self, method: Method) -> Vec<&MetricsReport> {
        self.outcomes
            .iter()
            .flat_map(|o| o.metrics.iter())
            .filter(|m| m.method == Some(method))
            .collect()
    }
}

/// Full-data moments shared across methods: raw and (when needed) corrected.
struct SharedMoments {
    raw: Option<Moments>,
    corrected: Option<Moments>,
}

impl SharedMoments {
    fn build(
        z: &LogDesign,
        y: &DVector<f64>,
        eb: Option<&ErrorCovariance>,
        methods: &[Method],
        est: &EstimatorConfig,
    ) -> Result<Self> {
        let raw = if methods.iter().any(|m| !m.corrected()) {
            Some(Moments::raw(z, y)?)
        } else {
            None
        };
        let corrected = if methods.iter().any(|m| m.corrected()) {
            let eb = eb.ok_or_else(|| EricError::Domain("corrected methods need an error covariance".into()))?;
            Some(Moments::corrected(z, y, eb, &est.psd)?)
        } else {
            None
        };
        Ok(Self { raw, corrected })
    }

    fn get(&self, method: Method) -> &Moments {
        let m = if method.corrected() { &self.corrected } else { &self.raw };
        m.as_ref().expect("moments built for every configured method")
    }
}

/// Walks the path down to `target` and returns the fit there, or the last fit
/// reached if the path stalls first.
fn fit_along_path(moments: &Moments, method: Method, grid: &[f64], target: usize, cfg: &SolverConfig) -> Result<FitResult> {
    let mut solver = moments.solver(method.zero_sum(), cfg)?;
    let path = regularization_path_until_stall(&mut solver, &grid[..=target])?;
    if path.len() <= target {
        log::warn!(
            "{method}: full-data path stalled before the chosen lambda {:.4e}; using {:.4e}",
            grid[target],
            grid[path.len() - 1]
        );
    }
    let mut fit = path.into_iter().last().ok_or(EricError::NotConverged {
        solver: "regularisation path",
        iterations: 0,
        primal: f64::NAN,
        dual: f64::NAN,
    })?;
    fit.method = Some(method);
    Ok(fit)
}

/// Grid, fold and rule settings for tuning by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneSpec {
    pub grid_points: usize,
    pub min_ratio: f64,
    pub folds: usize,
    pub rule: SelectionRule,
    pub fold_seed: u64,
}

/// Tunes every method by cross-validation on `(z, y)` and refits on the full
/// data at the chosen λ. Moments are shared between methods that use them.
pub fn tune_and_fit(
    methods: &[Method],
    z: &LogDesign,
    y: &DVector<f64>,
    eb: Option<&ErrorCovariance>,
    spec: &TuneSpec,
    est: &EstimatorConfig,
) -> Result<Vec<FitResult>> {
    let shared = SharedMoments::build(z, y, eb, methods, est)?;
    let grids: Vec<LambdaGrid> = methods
        .iter()
        .map(|&m| LambdaGrid::new(lambda_max(&shared.get(m).rho, m.zero_sum()), spec.grid_points, spec.min_ratio))
        .collect::<Result<_>>()?;
    let cv = CvConfig {
        folds: spec.folds,
        seed: spec.fold_seed,
        rule: spec.rule,
        estimator: *est,
    };
    let pairs: Vec<(Method, &LambdaGrid)> = methods.iter().copied().zip(grids.iter()).collect();
    let reports = cross_validate(&pairs, z, y, eb, &cv)?;
    methods
        .iter()
        .zip(&grids)
        .zip(&reports)
        .map(|((&method, grid), report)| fit_along_path(shared.get(method), method, grid.values(), report.chosen_index, &est.solver))
        .collect()
}

/// Generates, tunes, fits and scores one replicate.
pub fn run_replicate(cfg: &BenchConfig, replicate: u64) -> Result<ReplicateOutcome> {
    let rep = generate_replicate(&cfg.scenario, replicate)?;
    let spec = TuneSpec {
        grid_points: cfg.grid_points,
        min_ratio: cfg.min_ratio,
        folds: cfg.folds,
        rule: cfg.rule,
        fold_seed: derived_seed(cfg.scenario.seed, replicate, Stream::Folds),
    };
    let needs_eb = cfg.methods.iter().any(|m| m.corrected());
    let fits = tune_and_fit(&cfg.methods, &rep.z, &rep.y, needs_eb.then_some(&rep.error_cov), &spec, &cfg.estimator)?;

    let sigma_true = true_gram(&rep);
    let beta_star = cfg.scenario.beta_star.as_vector();
    let mut metrics = Vec::with_capacity(fits.len());
    let mut lambdas = Vec::with_capacity(fits.len());
    let mut betas = Vec::with_capacity(fits.len());
    for fit in fits {
        let mut m = eval_metrics(&fit.beta, beta_star, &sigma_true)?;
        m.method = fit.method;
        m.replicate = replicate;
        metrics.push(m);
        lambdas.push(fit.lambda);
        betas.push(fit.beta);
    }
    Ok(ReplicateOutcome { replicate, metrics, lambdas, betas })
}

/// Runs every replicate (in parallel) and keeps failures aside.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult> {
    if cfg.methods.is_empty() {
        return Err(EricError::Domain("no methods selected".into()));
    }
    cfg.scenario.validate()?;
    let results: Vec<(u64, Result<ReplicateOutcome>)> = (0..cfg.reps as u64)
        .into_par_iter()
        .map(|r| (r, run_replicate(cfg, r)))
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push((r, e.to_string()));
            }
        }
    }
    Ok(BenchResult {
        methods: cfg.methods.clone(),
        outcomes,
        failures,
    })
}

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, se, count: n })
    }

    fn cell(opt: Option<Self>) -> String {
        opt.map_or_else(|| "NA".to_string(), |m| format!("{:.2} ({:.2})", m.mean, m.se))
    }
}

#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub replicates: usize,
    pub se: Option<MeanSe>,
    pub pe: Option<MeanSe>,
    pub linf: Option<MeanSe>,
    pub fpr: Option<MeanSe>,
    pub fnr: Option<MeanSe>,
    pub coef_sum: Option<MeanSe>,
    /// Fraction of replicates with exact sign recovery.
    pub sign_recovery: f64,
    pub ttest: Option<TTest>,
}

pub fn summarize(result: &BenchResult) -> Vec<MethodSummary> {
    result
        .methods
        .iter()
        .map(|&method| {
            let ms = result.metrics_for(method);
            let col = |f: &dyn Fn(&MetricsReport) -> Option<f64>| MeanSe::of(&ms.iter().filter_map(|m| f(m)).collect::<Vec<_>>());
            let sums: Vec<f64> = ms.iter().map(|m| m.coef_sum).collect();
            MethodSummary {
                method,
                replicates: ms.len(),
                se: col(&|m| Some(m.se)),
                pe: col(&|m| Some(m.pe)),
                linf: col(&|m| Some(m.linf)),
                fpr: col(&|m| m.fpr),
                fnr: col(&|m| m.fnr),
                coef_sum: MeanSe::of(&sums),
                sign_recovery: if ms.is_empty() {
                    0.0
                } else {
                    ms.iter().filter(|m| m.sign_consistent).count() as f64 / ms.len() as f64
                },
                ttest: zero_sum_ttest(&sums).ok(),
            }
        })
        .collect()
}

/// Long-format metrics: `replicate,method,metric,value`.
pub fn write_metrics_csv<W: Write>(result: &BenchResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replicate", "method", "metric", "value"])?;
    for o in &result.outcomes {
        for m in &o.metrics {
            let method = m.method.map_or("", |x| x.as_str());
            let r = m.replicate.to_string();
            let rows: [(&str, Option<f64>); 7] = [
                ("se", Some(m.se)),
                ("pe", Some(m.pe)),
                ("linf", Some(m.linf)),
                ("fpr", m.fpr),
                ("fnr", m.fnr),
                ("coef_sum", Some(m.coef_sum)),
                ("sign_consistent", Some(f64::from(u8::from(m.sign_consistent)))),
            ];
            for (name, v) in rows {
                let v = v.map_or_else(|| "NA".to_string(), |v| format!("{v:.10e}"));
                out.write_record([r.as_str(), method, name, v.as_str()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

const SUMMARY_METRICS: [&str; 6] = ["se", "pe", "linf", "fpr", "fnr", "coef_sum"];

fn summary_cells(s: &MethodSummary) -> [Option<MeanSe>; 6] {
    [s.se, s.pe, s.linf, s.fpr, s.fnr, s.coef_sum]
}

/// Aggregate table as CSV: one row per (method, metric).
pub fn write_summary_csv<W: Write>(summary: &[MethodSummary], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["method", "metric", "mean", "se", "count"])?;
    for s in summary {
        for (name, cell) in SUMMARY_METRICS.iter().zip(summary_cells(s)) {
            let (mean, se, count) = cell.map_or(("NA".into(), "NA".into(), "0".into()), |c| {
                (format!("{:.10e}", c.mean), format!("{:.10e}", c.se), c.count.to_string())
            });
            out.write_record([s.method.as_str(), name, &mean, &se, &count])?;
        }
        out.write_record([
            s.method.as_str(),
            "sign_recovery",
            &format!("{:.10e}", s.sign_recovery),
            "NA",
            &s.replicates.to_string(),
        ])?;
        if let Some(t) = s.ttest {
            out.write_record([s.method.as_str(), "ttest_t", &format!("{:.10e}", t.t), "NA", &s.replicates.to_string()])?;
            out.write_record([s.method.as_str(), "ttest_p", &format!("{:.10e}", t.p_value), "NA", &s.replicates.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Aligned plain-text table with `mean (se)` cells and a t-test row.
pub fn render_summary(summary: &[MethodSummary]) -> String {
    let mut header = vec!["metric".to_string()];
    header.extend(summary.iter().map(|s| s.method.label().to_string()));
    let mut rows = vec![header];
    for (k, name) in SUMMARY_METRICS.iter().enumerate() {
        let mut row = vec![name.to_uppercase()];
        row.extend(summary.iter().map(|s| MeanSe::cell(summary_cells(s)[k])));
        rows.push(row);
    }
    let mut sign = vec!["SIGN".to_string()];
    sign.extend(summary.iter().map(|s| format!("{:.2}", s.sign_recovery)));
    rows.push(sign);
    let mut tt = vec!["t-test p".to_string()];
    tt.extend(summary.iter().map(|s| s.ttest.map_or("NA".into(), |t| format!("{:.3}", t.p_value))));
    rows.push(tt);

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:>w$}")).collect();
        let _ = writeln!(out, "{}", line.join("  "));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RocConfig {
    /// Base scenario; `tau` is overridden by each entry of `taus`.
    pub scenario: ScenarioConfig,
    pub taus: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub grid_points: usize,
    pub min_ratio: f64,
    pub estimator: EstimatorConfig,
}

impl RocConfig {
    pub fn new(scenario: ScenarioConfig, taus: Vec<f64>, reps: usize) -> Self {
        Self {
            scenario,
            taus,
            reps,
            methods: Method::ALL.to_vec(),
            grid_points: 100,
            min_ratio: 1e-3,
            estimator: bench_estimator_config(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RocResult {
    pub curves: Vec<(Method, RocCurve)>,
    pub failures: Vec<(f64, u64, String)>,
}

/// Operating points of one replicate's full path for each method.
/// Operating points along each method's path.
type ReplicatePoints = Vec<Vec<(f64, f64)>>;

fn replicate_points(cfg: &RocConfig, scenario: &ScenarioConfig, r: u64) -> Result<ReplicatePoints> {
    let rep = generate_replicate(scenario, r)?;
    let beta_star = scenario.beta_star.as_vector();
    let shared = SharedMoments::build(&rep.z, &rep.y, Some(&rep.error_cov), &cfg.methods, &cfg.estimator)?;
    cfg.methods
        .iter()
        .map(|&method| {
            let m = shared.get(method);
            let lmax = lambda_max(&m.rho, method.zero_sum());
            let grid = LambdaGrid::new(lmax, cfg.grid_points, cfg.min_ratio)?;
            let mut solver = m.solver(method.zero_sum(), &cfg.estimator.solver)?;
            let path = regularization_path_until_stall(&mut solver, grid.values())?;
            Ok(path.iter().filter_map(|f| operating_point(&f.beta, beta_star)).collect())
        })
        .collect()
}

/// Sweeps full regularisation paths and averages operating points per grid
/// index across replicates, for every `(τ, method)`.
pub fn run_roc(cfg: &RocConfig) -> Result<RocResult> {
    if cfg.methods.is_empty() || cfg.taus.is_empty() {
        return Err(EricError::Domain("ROC needs at least one method and one tau".into()));
    }
    let mut curves = Vec::new();
    let mut failures = Vec::new();
    for &tau in &cfg.taus {
        let mut scenario = cfg.scenario.clone();
        scenario.tau = tau;
        scenario.validate()?;
        let per_rep: Vec<(u64, Result<ReplicatePoints>)> = (0..cfg.reps as u64)
            .into_par_iter()
            .map(|r| (r, replicate_points(cfg, &scenario, r)))
            .collect();
        let mut ok = Vec::new();
        for (r, res) in per_rep {
            match res {
                Ok(p) => ok.push(p),
                Err(e) => {
                    log::warn!("ROC replicate {r} (tau {tau}) failed: {e}");
                    failures.push((tau, r, e.to_string()));
                }
            }
        }
        for (k, &method) in cfg.methods.iter().enumerate() {
            let pts: Vec<Vec<(f64, f64)>> = ok.iter().map(|rep| rep[k].clone()).collect();
            curves.push((method, roc_from_points(&average_operating_points(&pts), tau)));
        }
    }
    Ok(RocResult { curves, failures })
}

/// ROC points as `tau,method,fpr,tpr`.
pub fn write_roc_csv<W: Write>(result: &RocResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tau", "method", "fpr", "tpr"])?;
    for (method, c) in &result.curves {
        for (f, t) in &c.points {
            out.write_record([format!("{}", c.tau), method.as_str().to_string(), format!("{f:.10e}"), format!("{t:.10e}")])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// AUC summary as `tau,method,auc`.
pub fn write_auc_csv<W: Write>(result: &RocResult, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tau", "method", "auc"])?;
    for (method, c) in &result.curves {
        out.write_record([format!("{}", c.tau), method.as_str().to_string(), format!("{:.10e}", c.auc)])?;
    }
    out.flush()?;
    Ok(())
}

/// Clean-design Gram used for the prediction error.
pub fn true_gram(rep: &Replicate) -> DMatrix<f64> {
    gram(rep.clean.x.centered().values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::ScenarioKind;

    fn small(kind: ScenarioKind) -> BenchConfig {
        let mut cfg = BenchConfig::new(ScenarioConfig::new(kind, 30, 10, 0.5, 7).unwrap(), 2);
        cfg.grid_points = 15;
        cfg
    }

    #[test]
    fn smoke_run_emits_rows_for_every_method() {
        let res = run_bench(&small(ScenarioKind::LogisticNormal)).unwrap();
        assert!(res.failures.is_empty(), "{:?}", res.failures);
        assert_eq!(res.outcomes.len(), 2);
        assert!(res.outcomes.iter().all(|o| o.metrics.len() == 4));
        let mut buf = Vec::new();
        write_metrics_csv(&res, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 2 * 4 * 7);
    }

    #[test]
    fn aggregate_mean_matches_rows() {
        let res = run_bench(&small(ScenarioKind::Dirichlet)).unwrap();
        let summary = summarize(&res);
        for s in &summary {
            let ms = res.metrics_for(s.method);
            let mean = ms.iter().map(|m| m.se).sum::<f64>() / ms.len() as f64;
            assert!((s.se.unwrap().mean - mean).abs() < 1e-12);
        }
        assert!(render_summary(&summary).contains("Eric"));
    }

    #[test]
    fn bench_is_deterministic() {
        let cfg = small(ScenarioKind::DirichletMultinomial);
        let a = run_bench(&cfg).unwrap();
        let b = run_bench(&cfg).unwrap();
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.metrics, y.metrics);
        }
    }

    #[test]
    fn roc_curves_have_endpoints() {
        let mut cfg = RocConfig::new(ScenarioConfig::new(ScenarioKind::LogisticNormal, 30, 12, 0.3, 1).unwrap(), vec![0.3, 0.5], 2);
        cfg.grid_points = 20;
        let res = run_roc(&cfg).unwrap();
        assert_eq!(res.curves.len(), 8);
        for (_, c) in &res.curves {
            assert_eq!(c.points.first(), Some(&(0.0, 0.0)));
            assert_eq!(c.points.last(), Some(&(1.0, 1.0)));
            assert!((0.0..=1.0).contains(&c.auc));
        }
    }
}
