use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eric_lasso::bench::{
    render_summary, run_bench, run_roc, summarize, write_auc_csv, write_metrics_csv, write_roc_csv,
    write_summary_csv, BenchConfig, RocConfig,
};
use eric_lasso::bootstrap::{
    run_bootstrap, synthetic_dataset, write_bootstrap_csv, write_selection_csv, BootstrapConfig,
};
use eric_lasso::composition::{default_names, log_design, CompositionMatrix, LogDesign};
use eric_lasso::config::{apply_scenario_kv, KeyValues};
use eric_lasso::error::EricError;
use eric_lasso::estimators::{EstimatorConfig, Moments};
use eric_lasso::io::{
    read_composition_path, read_square_path, read_table_path, read_vector_path, write_fit_dir,
    write_matrix_path, write_vector_path,
};
use eric_lasso::simulate::{generate_replicate, ErrorSampler, ScenarioConfig, ScenarioKind};
use eric_lasso::solver::{FitResult, Method};
use eric_lasso::surrogate::{estimate_error_cov, ErrorCovariance};
use eric_lasso::tuning::{calibrated_cv, kfold_cv, CvConfig, CvReport, LambdaGrid, SelectionRule};

/// Default seed when `--seed` is not given.
const DEFAULT_SEED: u64 = 20_240_101;
/// Output root used when `--out` is absent.
const OUT_ENV: &str = "ERIC_OUT";

#[derive(Parser)]
#[command(name = "eric", version, about = "Error-in-composition Lasso for log-contrast regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (defaults to $ERIC_OUT, then the current directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one simulated data set.
    Simulate(SimulateArgs),
    /// Fit one estimator to data files.
    Fit(FitArgs),
    /// Cross-validate λ without refitting.
    Tune(FitArgs),
    /// Monte Carlo comparison of the four estimators.
    Bench(BenchArgs),
    /// ROC curves from full regularisation paths.
    Roc(RocArgs),
    /// Bootstrap leave-one-out prediction error.
    Bootstrap(BootstrapArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario number (1, 2 or 3).
    #[arg(long, default_value = "1")]
    scenario: ScenarioKind,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    p: usize,
    /// Key-value scenario file; its entries override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tune {
    Cv,
    Calibrated,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    method: Method,
    #[arg(long, conflicts_with = "tune")]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    tune: Option<Tune>,
    /// Compositions (or counts with --counts), one sample per row.
    #[arg(long)]
    z: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Log-scale error covariance, p × p.
    #[arg(long = "sigma-b", conflicts_with = "error_reps")]
    sigma_b: Option<PathBuf>,
    /// Observed log-scale error realisations, one per row.
    #[arg(long = "error-reps")]
    error_reps: Option<PathBuf>,
    #[arg(long = "pseudo-count", default_value_t = 0.5)]
    pseudo_count: f64,
    /// Treat --z as raw counts.
    #[arg(long)]
    counts: bool,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long = "grid-points", default_value_t = 100)]
    grid_points: usize,
    #[arg(long = "one-se")]
    one_se: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long = "grid-points", default_value_t = 50)]
    grid_points: usize,
}

#[derive(Args)]
struct RocArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated error scales.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5")]
    tau: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long = "grid-points", default_value_t = 100)]
    grid_points: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ErrorKind {
    Uniform,
    Lognormal,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "n-boot", default_value_t = 100)]
    n_boot: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    error: ErrorKind,
    /// Log-normal error scale.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Synthetic data size when no data files are given.
    #[arg(long, default_value_t = 96)]
    n: usize,
    #[arg(long, default_value_t = 80)]
    p: usize,
    /// Clean compositions (with --y) instead of synthetic data.
    #[arg(long, requires = "y")]
    x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long = "grid-points", default_value_t = 40)]
    grid_points: usize,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Parse(String),
    Contract(String),
    Solver(String),
    Budget(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Contract(_) => 3,
            Failure::Solver(_) => 4,
            Failure::Budget(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Contract(m) | Failure::Solver(m) | Failure::Budget(m) => m,
        }
    }
}

impl From<EricError> for Failure {
    fn from(e: EricError) -> Self {
        let msg = e.to_string();
        match e {
            EricError::Parse(_) | EricError::Csv(_) => Failure::Parse(msg),
            EricError::NotConverged { .. } | EricError::Singular(_) => Failure::Solver(msg),
            EricError::DimensionMismatch(_)
            | EricError::Domain(_)
            | EricError::DegenerateRow { .. }
            | EricError::InsufficientData(_)
            | EricError::Io(_) => Failure::Contract(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Contract(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn out_dir(common: &Common) -> Result<PathBuf, Failure> {
    let dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn setup_threads(common: &Common) -> CmdResult {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Failure::Contract("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Contract(e.to_string()))?;
    }
    Ok(())
}

fn writer(path: &Path) -> Result<BufWriter<fs::File>, Failure> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn scenario(args: &ScenarioArgs, tau: f64, seed: u64) -> Result<ScenarioConfig, Failure> {
    Ok(match &args.config {
        Some(path) => {
            let kv = KeyValues::parse(&fs::read_to_string(path)?)?;
            apply_scenario_kv(&kv, args.scenario, args.n, args.p, tau, seed)?
        }
        None => ScenarioConfig::new(args.scenario, args.n, args.p, tau, seed)?,
    })
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let cfg = scenario(&a.scenario, a.tau, a.common.seed)?;
    let dir = out_dir(&a.common)?;
    let rep = generate_replicate(&cfg, a.replicate)?;
    let names = default_names(cfg.p);
    write_matrix_path(&dir.join("U.csv"), rep.clean.u.values(), Some(&names))?;
    let observed = CompositionMatrix::from_log_values(&rep.z.raw_values());
    write_matrix_path(&dir.join("O.csv"), observed.values(), Some(&names))?;
    write_vector_path(&dir.join("y.csv"), &rep.y, "y")?;
    write_vector_path(&dir.join("beta_star.csv"), cfg.beta_star.as_vector(), "beta")?;
    write_matrix_path(&dir.join("sigma_b.csv"), rep.error_cov.matrix(), Some(&names))?;
    if let Some(counts) = &rep.counts {
        write_matrix_path(&dir.join("counts.csv"), counts, Some(&names))?;
    }
    println!("wrote simulated data ({}, n={}, p={}) to {}", cfg.scenario, cfg.n, cfg.p, dir.display());
    Ok(())
}

struct FitInputs {
    z: LogDesign,
    y: nalgebra::DVector<f64>,
    eb: Option<ErrorCovariance>,
    names: Vec<String>,
}

fn load_fit_inputs(a: &FitArgs) -> Result<FitInputs, Failure> {
    let comp = read_composition_path(&a.z, a.counts, a.pseudo_count)?;
    let y = read_vector_path(&a.y)?;
    if y.len() != comp.n() {
        return Err(Failure::Contract(format!(
            "dimension mismatch: --y has {} values for {} rows of --z",
            y.len(),
            comp.n()
        )));
    }
    let p = comp.p();
    let eb = match (&a.sigma_b, &a.error_reps) {
        (Some(path), _) => Some(ErrorCovariance::from_matrix(read_square_path(path, p)?)?),
        (None, Some(path)) => {
            let t = read_table_path(path)?;
            if t.values.ncols() != p {
                return Err(Failure::Contract(format!(
                    "dimension mismatch: --error-reps has {} columns, expected {p}",
                    t.values.ncols()
                )));
            }
            Some(estimate_error_cov(&t.values)?)
        }
        (None, None) => None,
    };
    if a.method.corrected() && eb.is_none() {
        return Err(Failure::Contract(format!(
            "method {} needs the error covariance: pass --sigma-b or --error-reps",
            a.method
        )));
    }
    let names = comp.names().to_vec();
    Ok(FitInputs {
        z: log_design(&comp, true),
        y,
        eb: if a.method.corrected() { eb } else { None },
        names,
    })
}

fn tune(a: &FitArgs, inp: &FitInputs, mode: Tune) -> Result<CvReport, Failure> {
    let est = EstimatorConfig::default();
    let moments = Moments::for_method(a.method, &inp.z, &inp.y, inp.eb.as_ref(), &est.psd)?;
    let grid = LambdaGrid::new(
        eric_lasso::solver::lambda_max(&moments.rho, a.method.zero_sum()),
        a.grid_points,
        eric_lasso::tuning::DEFAULT_MIN_RATIO,
    )?;
    let cfg = CvConfig {
        folds: a.folds,
        seed: a.common.seed,
        rule: if a.one_se { SelectionRule::OneSe } else { SelectionRule::Min },
        estimator: est,
    };
    let report = match (mode, inp.eb.as_ref()) {
        (Tune::Cv, _) => kfold_cv(&inp.z, &inp.y, a.method, &grid, &cfg)?,
        (Tune::Calibrated, Some(eb)) => calibrated_cv(&inp.z, &inp.y, eb, a.method, &grid, &cfg)?,
        (Tune::Calibrated, None) => {
            return Err(Failure::Contract(format!("{} is tuned with --tune cv", a.method)));
        }
    };
    Ok(report)
}

fn write_cv(dir: &Path, report: &CvReport) -> CmdResult {
    let mut w = writer(&dir.join("cv.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    let dir = out_dir(&a.common)?;
    let inp = load_fit_inputs(&a)?;
    let lambda = match (a.lambda, a.tune) {
        (Some(l), _) => l,
        (None, Some(mode)) => {
            let report = tune(&a, &inp, mode)?;
            write_cv(&dir, &report)?;
            report.chosen_lambda()
        }
        (None, None) => return Err(Failure::Contract("pass either --lambda or --tune".into())),
    };
    let est = EstimatorConfig::default();
    let result = Moments::for_method(a.method, &inp.z, &inp.y, inp.eb.as_ref(), &est.psd)
        .and_then(|m| m.solver(a.method.zero_sum(), &est.solver))
        .and_then(|mut s| s.solve(lambda, None));
    let fit: FitResult = match result {
        Ok(mut f) => {
            f.method = Some(a.method);
            f
        }
        Err(e) => {
            let failure = Failure::from(e);
            fs::write(dir.join("diagnostics.txt"), format!("method={}\nlambda={lambda}\nerror={}\n", a.method, failure.message()))?;
            return Err(failure);
        }
    };
    write_fit_dir(&dir, &fit, &inp.names)?;
    println!(
        "{}: lambda={:.6e} support={} coef_sum={:.3e} kkt_gap={:.3e}",
        a.method,
        fit.lambda,
        fit.support(eric_lasso::metrics::SUPPORT_THRESHOLD).len(),
        fit.coef_sum(),
        fit.kkt_gap
    );
    Ok(())
}

fn cmd_tune(a: FitArgs) -> CmdResult {
    let dir = out_dir(&a.common)?;
    let inp = load_fit_inputs(&a)?;
    let mode = a.tune.unwrap_or(if a.method.corrected() { Tune::Calibrated } else { Tune::Cv });
    let report = tune(&a, &inp, mode)?;
    write_cv(&dir, &report)?;
    fs::write(
        dir.join("tune.txt"),
        format!(
            "method={}\nlambda={}\nindex={}\nfolds={}\n",
            a.method,
            report.chosen_lambda(),
            report.chosen_index,
            report.folds
        ),
    )?;
    println!("{}: chosen lambda {:.6e}", a.method, report.chosen_lambda());
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CmdResult {
    let cfg = scenario(&a.scenario, a.tau, a.common.seed)?;
    let dir = out_dir(&a.common)?;
    let mut bench = BenchConfig::new(cfg, a.reps);
    bench.grid_points = a.grid_points;
    let res = run_bench(&bench)?;
    let summary = summarize(&res);
    let mut w = writer(&dir.join("metrics.csv"))?;
    write_metrics_csv(&res, &mut w)?;
    w.flush()?;
    let mut w = writer(&dir.join("summary.csv"))?;
    write_summary_csv(&summary, &mut w)?;
    w.flush()?;
    let table = render_summary(&summary);
    fs::write(dir.join("summary.txt"), &table)?;
    print!("{table}");
    if !res.failures.is_empty() {
        let text: String = res.failures.iter().map(|(r, e)| format!("{r},{e}\n")).collect();
        fs::write(dir.join("failures.csv"), format!("replicate,error\n{text}"))?;
    }
    if res.over_budget() {
        return Err(Failure::Budget(format!(
            "{} of {} replicates failed",
            res.failures.len(),
            a.reps
        )));
    }
    Ok(())
}

fn cmd_roc(a: RocArgs) -> CmdResult {
    let first = *a.tau.first().ok_or_else(|| Failure::Contract("--tau needs a value".into()))?;
    let cfg = scenario(&a.scenario, first, a.common.seed)?;
    let dir = out_dir(&a.common)?;
    let mut roc = RocConfig::new(cfg, a.tau.clone(), a.reps);
    roc.grid_points = a.grid_points;
    let res = run_roc(&roc)?;
    let mut w = writer(&dir.join("roc.csv"))?;
    write_roc_csv(&res, &mut w)?;
    w.flush()?;
    let mut w = writer(&dir.join("auc.csv"))?;
    write_auc_csv(&res, &mut w)?;
    w.flush()?;
    for (m, c) in &res.curves {
        println!("tau={} {:>8} AUC={:.4}", c.tau, m.as_str(), c.auc);
    }
    let total = a.reps * a.tau.len();
    if total > 0 && res.failures.len() as f64 / total as f64 > eric_lasso::bench::FAILURE_BUDGET {
        return Err(Failure::Budget(format!("{} of {total} ROC replicates failed", res.failures.len())));
    }
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs) -> CmdResult {
    let dir = out_dir(&a.common)?;
    let (y, x, names) = match (&a.x, &a.y) {
        (Some(xp), Some(yp)) => {
            let comp = read_composition_path(xp, false, 0.5)?;
            let y = read_vector_path(yp)?;
            if y.len() != comp.n() {
                return Err(Failure::Contract("dimension mismatch: --y and --x differ in rows".into()));
            }
            let names = comp.names().to_vec();
            (y, log_design(&comp, false), names)
        }
        _ => {
            let (y, x) = synthetic_dataset(a.n, a.p, a.common.seed)?;
            (y, x, default_names(a.p))
        }
    };
    let sampler = match a.error {
        ErrorKind::Uniform => ErrorSampler::bootstrap_uniform(),
        ErrorKind::Lognormal => ErrorSampler::LogNormal { tau: a.tau },
    };
    let mut cfg = BootstrapConfig::new(a.n_boot, sampler, a.common.seed);
    cfg.grid_points = a.grid_points;
    let res = run_bootstrap(&y, &x, &cfg)?;
    let mut w = writer(&dir.join("bootstrap.csv"))?;
    write_bootstrap_csv(&res, &mut w)?;
    w.flush()?;
    let mut w = writer(&dir.join("selection.csv"))?;
    write_selection_csv(&res, &names, &mut w)?;
    w.flush()?;
    let mut table = format!("{:>8}  {:>10}  {:>10}\n", "method", "MSE_LOO", "MAE_LOO");
    for (m, r) in res.methods.iter().zip(&res.reports) {
        table.push_str(&format!("{:>8}  {:>10.4}  {:>10.4}\n", m.label(), r.mse_loo, r.mae_loo));
    }
    fs::write(dir.join("summary.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let common = match &cli.command {
        Command::Simulate(a) => &a.common,
        Command::Fit(a) | Command::Tune(a) => &a.common,
        Command::Bench(a) => &a.common,
        Command::Roc(a) => &a.common,
        Command::Bootstrap(a) => &a.common,
    };
    setup_threads(common)?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Bootstrap(a) => cmd_bootstrap(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
