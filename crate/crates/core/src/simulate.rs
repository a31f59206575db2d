//! Data-generating scenarios and the multiplicative contamination model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal, Uniform};

use crate::composition::{closure, log_sum_exp, CoefficientVector, CompositionMatrix, LogDesign};
use crate::error::{dim_mismatch, EricError, Result};
use crate::surrogate::{estimate_error_cov, ErrorCovariance};

/// Independent random streams, one per (seed, replicate, purpose).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Composition = 0,
    Depth = 1,
    Counts = 2,
    MeasurementError = 3,
    Response = 4,
    ReplicateCounts = 5,
    Folds = 6,
    Bootstrap = 7,
}

pub fn rng_for(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replicate << 8) | stream as u64);
    rng
}

/// Derived 64-bit seed for consumers that take a plain seed.
pub fn derived_seed(seed: u64, replicate: u64, stream: Stream) -> u64 {
    rng_for(seed, replicate, stream).gen()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Logistic-normal compositions with AR(1) latent correlation.
    LogisticNormal,
    /// Symmetric Dirichlet(1/p) compositions.
    Dirichlet,
    /// Logistic-normal compositions observed through Dirichlet-multinomial counts.
    DirichletMultinomial,
}

impl ScenarioKind {
    pub fn number(self) -> u8 {
        match self {
            ScenarioKind::LogisticNormal => 1,
            ScenarioKind::Dirichlet => 2,
            ScenarioKind::DirichletMultinomial => 3,
        }
    }

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(ScenarioKind::LogisticNormal),
            2 => Ok(ScenarioKind::Dirichlet),
            3 => Ok(ScenarioKind::DirichletMultinomial),
            other => Err(EricError::Parse(format!("unknown scenario {other}"))),
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::LogisticNormal => "S1-logistic-normal",
            ScenarioKind::Dirichlet => "S2-dirichlet",
            ScenarioKind::DirichletMultinomial => "S3-dirmult",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = EricError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "s1" | "s1-logistic-normal" | "logistic-normal" => Ok(ScenarioKind::LogisticNormal),
            "2" | "s2" | "s2-dirichlet" | "dirichlet" => Ok(ScenarioKind::Dirichlet),
            "3" | "s3" | "s3-dirmult" | "dirmult" => Ok(ScenarioKind::DirichletMultinomial),
            other => Err(EricError::Parse(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Leading nonzero block of the true coefficients used in the simulations.
pub const DEFAULT_BETA_HEAD: [f64; 8] = [1.2, -0.8, 0.7, 0.0, 0.0, -1.5, -1.0, 1.4];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub p: usize,
    /// AR(1) correlation of the latent normal.
    pub rho: f64,
    /// Latent mean: `theta_value` on the first `theta_count` components, 0 elsewhere.
    pub theta_value: f64,
    pub theta_count: usize,
    /// Log-normal error scale.
    pub tau: f64,
    /// Dirichlet-multinomial concentration.
    pub alpha: f64,
    pub depth_mean: f64,
    pub depth_var: f64,
    pub sigma_eps: f64,
    pub beta_star: CoefficientVector,
    pub seed: u64,
}

impl ScenarioConfig {
    /// The simulation defaults for a given scenario and size.
    pub fn new(scenario: ScenarioKind, n: usize, p: usize, tau: f64, seed: u64) -> Result<Self> {
        let cfg = Self {
            scenario,
            n,
            p,
            rho: 0.5,
            theta_value: (0.2 * p as f64).ln(),
            theta_count: 5,
            tau,
            alpha: 5000.0,
            depth_mean: 3e4,
            depth_var: 3e6,
            sigma_eps: 0.5,
            beta_star: padded_beta(&DEFAULT_BETA_HEAD, p)?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.p < 2 {
            return Err(EricError::Domain("scenario needs n, p >= 2".into()));
        }
        if !(self.tau >= 0.0 && self.alpha > 0.0 && self.sigma_eps > 0.0) {
            return Err(EricError::Domain("scenario needs tau >= 0, alpha > 0, sigma_eps > 0".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(EricError::Domain("AR(1) correlation must lie in (-1, 1)".into()));
        }
        if !(self.depth_var > self.depth_mean && self.depth_mean > 0.0) {
            return Err(EricError::Domain("negative binomial depth needs variance > mean > 0".into()));
        }
        if self.beta_star.len() != self.p {
            return Err(dim_mismatch(format!(
                "beta_star has {} entries for p = {}",
                self.beta_star.len(),
                self.p
            )));
        }
        Ok(())
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_fn(self.p, |j, _| if j < self.theta_count { self.theta_value } else { 0.0 })
    }

    /// Σ_W with entries `ρ^|i−j|`.
    pub fn latent_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.rho.powi((i as i32 - j as i32).abs()))
    }
}

/// `head` followed by zeros up to length `p`.
pub fn padded_beta(head: &[f64], p: usize) -> Result<CoefficientVector> {
    if head.len() > p {
        return Err(dim_mismatch(format!("{} coefficients for p = {p}", head.len())));
    }
    CoefficientVector::new(DVector::from_fn(p, |j, _| head.get(j).copied().unwrap_or(0.0)))
}

/// Clean compositions together with their exact log values.
#[derive(Debug, Clone)]
pub struct CleanData {
    pub u: CompositionMatrix,
    /// Uncentred `log U`.
    pub x: LogDesign,
}

fn from_log_rows(log_u: DMatrix<f64>) -> Result<CleanData> {
    let u = CompositionMatrix::from_log_values(&log_u);
    Ok(CleanData {
        u,
        x: LogDesign::from_log_values(log_u, false)?,
    })
}

/// Normalises every row in log space: `v_ij − log Σ_k exp(v_ik)`.
fn log_normalise_rows(v: &mut DMatrix<f64>) {
    for i in 0..v.nrows() {
        let lse = log_sum_exp(v.row(i).iter().copied());
        for j in 0..v.ncols() {
            v[(i, j)] -= lse;
        }
    }
}

fn latent_logistic_normal(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let theta = cfg.theta();
    let innov = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut w = DMatrix::zeros(cfg.n, cfg.p);
    for i in 0..cfg.n {
        let mut prev: f64 = rng.sample(StandardNormal);
        w[(i, 0)] = prev + theta[0];
        for j in 1..cfg.p {
            let e: f64 = rng.sample(StandardNormal);
            prev = cfg.rho * prev + innov * e;
            w[(i, j)] = prev + theta[j];
        }
    }
    w
}

/// Scenario 1: `W ~ N(θ, Σ_W)`, `U = softmax(W)`.
pub fn gen_scenario1(cfg: &ScenarioConfig, replicate: u64) -> Result<CleanData> {
    let mut rng = rng_for(cfg.seed, replicate, Stream::Composition);
    let mut w = latent_logistic_normal(cfg, &mut rng);
    log_normalise_rows(&mut w);
    from_log_rows(w)
}

/// `log G` for `G ~ Gamma(shape, 1)`, accurate for tiny shapes.
fn log_gamma_draw(shape: f64, rng: &mut ChaCha8Rng) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("positive shape").sample(rng).ln()
    } else {
        // G = G' · V^{1/a} with G' ~ Gamma(a + 1), V ~ Unif(0, 1).
        let g = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
        let v: f64 = rng.sample(rand_distr::OpenClosed01);
        g.ln() + v.ln() / shape
    }
}

/// Log of a Dirichlet draw with the given (possibly tiny) concentrations.
fn log_dirichlet(alphas: impl Iterator<Item = f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut logs: Vec<f64> = alphas.map(|a| log_gamma_draw(a, rng)).collect();
    let lse = log_sum_exp(logs.iter().copied());
    logs.iter_mut().for_each(|v| *v -= lse);
    logs
}

/// Scenario 2: rows i.i.d. Dirichlet(1/p, …, 1/p).
pub fn gen_scenario2(cfg: &ScenarioConfig, replicate: u64) -> Result<CleanData> {
    let mut rng = rng_for(cfg.seed, replicate, Stream::Composition);
    let a = 1.0 / cfg.p as f64;
    let mut log_u = DMatrix::zeros(cfg.n, cfg.p);
    for i in 0..cfg.n {
        let row = log_dirichlet(std::iter::repeat_n(a, cfg.p), &mut rng);
        for (j, v) in row.into_iter().enumerate() {
            log_u[(i, j)] = v;
        }
    }
    from_log_rows(log_u)
}

/// Scenario-3 output: clean compositions, counts and the observed design.
#[derive(Debug, Clone)]
pub struct CountData {
    pub clean: CleanData,
    pub counts: DMatrix<f64>,
    /// `log` of the pseudo-count closure of `counts`, uncentred.
    pub z: LogDesign,
}

fn negative_binomial_depth(mean: f64, var: f64, rng: &mut ChaCha8Rng) -> Result<u64> {
    let r = mean * mean / (var - mean);
    let lambda = Gamma::new(r, mean / r)
        .map_err(|e| EricError::Domain(e.to_string()))?
        .sample(rng);
    if lambda <= 0.0 {
        return Ok(0);
    }
    let draw: f64 = Poisson::new(lambda)
        .map_err(|e| EricError::Domain(e.to_string()))?
        .sample(rng);
    Ok(draw as u64)
}

/// Dirichlet-multinomial counts for one row; sequential binomials.
fn dirmult_row(depth: u64, alpha: f64, log_u: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let log_pi = log_dirichlet(log_u.iter().map(|l| alpha * l.exp().max(f64::MIN_POSITIVE)), rng);
    let pi: Vec<f64> = log_pi.iter().map(|l| l.exp()).collect();
    let mut remaining = depth;
    let mut mass_left = 1.0f64;
    let mut out = vec![0.0; pi.len()];
    for (j, &pj) in pi.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j == pi.len() - 1 || mass_left <= 0.0 {
            out[j] = remaining as f64;
            break;
        }
        let prob = (pj / mass_left).clamp(0.0, 1.0);
        let k = Binomial::new(remaining, prob)
            .map_err(|e| EricError::Domain(e.to_string()))?
            .sample(rng);
        out[j] = k as f64;
        remaining -= k;
        mass_left -= pj;
    }
    Ok(out)
}

pub const COUNT_PSEUDO: f64 = 0.5;

fn draw_counts(cfg: &ScenarioConfig, clean: &CleanData, replicate: u64, depth_stream: Stream, count_stream: Stream) -> Result<DMatrix<f64>> {
    let mut depth_rng = rng_for(cfg.seed, replicate, depth_stream);
    let mut count_rng = rng_for(cfg.seed, replicate, count_stream);
    let log_u = clean.x.raw_values();
    let mut counts = DMatrix::zeros(cfg.n, cfg.p);
    for i in 0..cfg.n {
        let depth = negative_binomial_depth(cfg.depth_mean, cfg.depth_var, &mut depth_rng)?;
        let row: Vec<f64> = log_u.row(i).iter().copied().collect();
        let c = dirmult_row(depth, cfg.alpha, &row, &mut count_rng)?;
        for (j, v) in c.into_iter().enumerate() {
            counts[(i, j)] = v;
        }
    }
    Ok(counts)
}

fn counts_to_design(counts: &DMatrix<f64>) -> Result<LogDesign> {
    let comp = closure(counts, COUNT_PSEUDO)?;
    LogDesign::from_log_values(comp.values().map(f64::ln), false)
}

/// Scenario 3: logistic-normal compositions, negative-binomial depths,
/// Dirichlet-multinomial counts, pseudo-count closure.
pub fn gen_scenario3(cfg: &ScenarioConfig, replicate: u64) -> Result<CountData> {
    let clean = gen_scenario1(cfg, replicate)?;
    let counts = draw_counts(cfg, &clean, replicate, Stream::Depth, Stream::Counts)?;
    let z = counts_to_design(&counts)?;
    Ok(CountData { clean, counts, z })
}

/// Per-entry multiplicative error factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorSampler {
    /// `E = exp(B)`, `B ~ N(0, τ²)`.
    LogNormal { tau: f64 },
    /// `E ~ Unif(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

impl ErrorSampler {
    /// The factors used for the bootstrap protocol.
    pub fn bootstrap_uniform() -> Self {
        ErrorSampler::Uniform { lo: 0.1, hi: 10.0 }
    }

    /// `Var(log E)`, the diagonal of the implied Σ_B.
    pub fn log_variance(&self) -> f64 {
        match *self {
            ErrorSampler::LogNormal { tau } => tau * tau,
            ErrorSampler::Uniform { lo, hi } => {
                // Moments of log E for E uniform on [lo, hi].
                let m1 = |x: f64| x * x.ln() - x;
                let m2 = |x: f64| x * (x.ln().powi(2) - 2.0 * x.ln() + 2.0);
                let w = hi - lo;
                let e1 = (m1(hi) - m1(lo)) / w;
                let e2 = (m2(hi) - m2(lo)) / w;
                e2 - e1 * e1
            }
        }
    }

    pub fn error_covariance(&self, p: usize) -> Result<ErrorCovariance> {
        ErrorCovariance::isotropic(p, self.log_variance())
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ErrorSampler::LogNormal { tau } if tau >= 0.0 && tau.is_finite() => Ok(()),
            ErrorSampler::Uniform { lo, hi } if lo > 0.0 && hi > lo && hi.is_finite() => Ok(()),
            _ => Err(EricError::Domain(format!("invalid error sampler {self:?}"))),
        }
    }

    /// An `n × p` matrix of `log E`.
    pub fn sample_log(&self, n: usize, p: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        self.validate()?;
        Ok(match *self {
            ErrorSampler::LogNormal { tau } => {
                if tau == 0.0 {
                    DMatrix::zeros(n, p)
                } else {
                    let d = Normal::new(0.0, tau).map_err(|e| EricError::Domain(e.to_string()))?;
                    DMatrix::from_fn(n, p, |_, _| d.sample(rng))
                }
            }
            ErrorSampler::Uniform { lo, hi } => {
                let d = Uniform::new_inclusive(lo, hi);
                DMatrix::from_fn(n, p, |_, _| d.sample(rng).ln())
            }
        })
    }
}

/// `O_ij = U_ij E_ij / Σ_k U_ik E_ik`.
pub fn contaminate(u: &CompositionMatrix, e: &DMatrix<f64>) -> Result<CompositionMatrix> {
    if e.shape() != (u.n(), u.p()) {
        return Err(dim_mismatch("error factors and compositions differ in shape"));
    }
    if e.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(EricError::Domain("error factors must be positive".into()));
    }
    let mut o = u.values().component_mul(e);
    for i in 0..o.nrows() {
        let s: f64 = o.row(i).sum();
        o.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    CompositionMatrix::new(o, u.names().to_vec())
}

/// Contamination in log space: `Z = X + B − logsumexp_rows(X + B)`.
///
/// Exact for compositions with entries far below machine precision, where
/// forming `U ∘ E` directly would underflow.
pub fn contaminate_log(x: &LogDesign, log_e: &DMatrix<f64>) -> Result<LogDesign> {
    let raw = x.raw_values();
    if log_e.shape() != raw.shape() {
        return Err(dim_mismatch("error matrix and design differ in shape"));
    }
    let mut z = raw + log_e;
    log_normalise_rows(&mut z);
    LogDesign::from_log_values(z, false)
}

/// `y = Xβ* + ε`, `ε ~ N(0, σ²)`.
pub fn gen_response(x: &LogDesign, beta_star: &CoefficientVector, sigma_eps: f64, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    if beta_star.len() != x.p() {
        return Err(dim_mismatch("beta_star and design differ in p"));
    }
    if !(sigma_eps >= 0.0) {
        return Err(EricError::Domain("noise sd must be >= 0".into()));
    }
    let mut y = x.raw_values() * beta_star.as_vector();
    if sigma_eps > 0.0 {
        let d = Normal::new(0.0, sigma_eps).map_err(|e| EricError::Domain(e.to_string()))?;
        y.iter_mut().for_each(|v| *v += d.sample(rng));
    }
    Ok(y)
}

/// One simulated data set with everything the estimators and metrics need.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub clean: CleanData,
    /// Observed design, column-centred.
    pub z: LogDesign,
    pub y: DVector<f64>,
    /// Error covariance handed to the corrected estimators.
    pub error_cov: ErrorCovariance,
    pub counts: Option<DMatrix<f64>>,
}

/// Generates replicate `r` of a scenario.
///
/// Scenarios 1 and 2 use log-normal errors with the known `Σ_B = τ²I`.
/// Scenario 3 has no additive error model; its `Σ_B` is estimated from an
/// independent technical replicate of the counts, `(Z₁ − Z₂)/√2`.
pub fn generate_replicate(cfg: &ScenarioConfig, replicate: u64) -> Result<Replicate> {
    cfg.validate()?;
    let (clean, z_obs, error_cov, counts) = match cfg.scenario {
        ScenarioKind::LogisticNormal | ScenarioKind::Dirichlet => {
            let clean = if cfg.scenario == ScenarioKind::LogisticNormal {
                gen_scenario1(cfg, replicate)?
            } else {
                gen_scenario2(cfg, replicate)?
            };
            let sampler = ErrorSampler::LogNormal { tau: cfg.tau };
            let mut rng = rng_for(cfg.seed, replicate, Stream::MeasurementError);
            let b = sampler.sample_log(cfg.n, cfg.p, &mut rng)?;
            let z = contaminate_log(&clean.x, &b)?;
            (clean, z, sampler.error_covariance(cfg.p)?, None)
        }
        ScenarioKind::DirichletMultinomial => {
            let data = gen_scenario3(cfg, replicate)?;
            let second = draw_counts(cfg, &data.clean, replicate, Stream::Depth, Stream::ReplicateCounts)?;
            let z2 = counts_to_design(&second)?;
            let b_o = (data.z.raw_values() - z2.raw_values()) / std::f64::consts::SQRT_2;
            (data.clean, data.z, estimate_error_cov(&b_o)?, Some(data.counts))
        }
    };
    let mut rng = rng_for(cfg.seed, replicate, Stream::Response);
    let y = gen_response(&clean.x, &cfg.beta_star, cfg.sigma_eps, &mut rng)?;
    Ok(Replicate {
        clean,
        z: z_obs.centered(),
        y,
        error_cov,
        counts,
    })
}
