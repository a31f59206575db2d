//! Property suite, runnable from test harnesses and the acceptance report.

use eric_lasso::composition::{
    closure, contrast_design, default_names, log_design, CoefficientVector, CompositionMatrix, ContrastBasis,
    LogDesign,
};
use eric_lasso::error::EricError;
use eric_lasso::estimators::{eric_fit, EstimatorConfig};
use eric_lasso::linalg::{is_symmetric, max_abs_diff, min_eigenvalue};
use eric_lasso::metrics::{eval_metrics, roc_from_points, theory_diagnostics_gram};
use eric_lasso::simulate::{contaminate, generate_replicate, ScenarioConfig, ScenarioKind};
use eric_lasso::solver::{
    constrained_l1_quadratic, kkt_gap, lambda_max, regularization_path, LassoSolver, QuadraticLassoProblem,
    SolverConfig,
};
use eric_lasso::surrogate::{contrast_moments, nearest_psd_maxnorm, ErrorCovariance, PsdProjectionConfig};
use eric_lasso::tuning::{fold_assignment, LambdaGrid};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

pub type Property = fn(u32) -> Result<(), String>;

/// Every property with its name.
pub const ALL: [(&str, Property); 13] = [
    ("simplex preservation", simplex_preservation),
    ("log-additive identity", log_additive_identity),
    ("contrast design identity", contrast_design_identity),
    ("KKT certificate", kkt_certificate),
    ("certified path", certified_path),
    ("PSD projection feasibility", psd_feasibility),
    ("contrast moment reduction", contrast_moment_reduction),
    ("reference invariance", reference_invariance),
    ("permutation equivariance", permutation_equivariance),
    ("determinism under seed", determinism),
    ("metric bounds", metric_bounds),
    ("fold partition", fold_partition),
    ("log design round trip", log_round_trip),
];

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn shaped(lo: f64, hi: f64) -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..7, 2usize..9).prop_flat_map(move |(n, p)| matrix(n, p, lo, hi))
}

/// A PSD Gram `AᵀA/m`, the cross moment `Aᵀy/m`, a λ fraction and the
/// constraint flag.
fn quadratic() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, f64, bool)> {
    (2usize..8, 1usize..12).prop_flat_map(|(p, m)| {
        (matrix(m, p, -2.0, 2.0), prop::collection::vec(-1.0..1.0f64, m), 0.01..0.95f64, any::<bool>()).prop_map(
            move |(a, y, frac, zs)| {
                let rho = a.transpose() * DVector::from_vec(y) / m as f64;
                (a.transpose() * &a / m as f64, rho, frac, zs)
            },
        )
    })
}

fn zero_sum(v: &[f64]) -> DVector<f64> {
    let mut b = DVector::from_column_slice(v);
    let m = b.mean();
    b.add_scalar_mut(-m);
    b
}

fn permute_cols(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])])
}

pub fn simplex_preservation(cases: u32) -> Result<(), String> {
    run(cases, (shaped(0.0, 50.0), matrix(6, 8, 0.1, 10.0)), |(raw, e)| {
        let c = closure(&raw, 0.5).unwrap();
        for i in 0..c.n() {
            prop_assert!((c.values().row(i).sum() - 1.0).abs() < 1e-12);
            prop_assert!(c.values().row(i).iter().all(|v| *v > 0.0));
        }
        let e = e.view((0, 0), (c.n(), c.p())).into_owned();
        let o = contaminate(&c, &e).unwrap();
        for i in 0..o.n() {
            prop_assert!((o.values().row(i).sum() - 1.0).abs() < 1e-12);
        }
        Ok(())
    })
}

pub fn log_additive_identity(cases: u32) -> Result<(), String> {
    let s = (shaped(0.01, 1.0), matrix(6, 8, 0.1, 10.0), prop::collection::vec(-3.0..3.0f64, 8));
    run(cases, s, |(u, e, b)| {
        let (n, p) = u.shape();
        let u = closure(&u, 0.0).unwrap();
        let e = e.view((0, 0), (n, p)).into_owned();
        let o = contaminate(&u, &e).unwrap();
        let beta = zero_sum(&b[..p]);
        for i in 0..n {
            let lhs: f64 = (0..p).map(|j| beta[j] * o.values()[(i, j)].ln()).sum();
            let rhs: f64 = (0..p).map(|j| beta[j] * (u.values()[(i, j)].ln() + e[(i, j)].ln())).sum();
            prop_assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
        Ok(())
    })
}

pub fn contrast_design_identity(cases: u32) -> Result<(), String> {
    let s = (shaped(0.01, 1.0), prop::collection::vec(-2.0..2.0f64, 8), 0usize..8);
    run(cases, s, |(u, b, r)| {
        let p = u.ncols();
        let design = log_design(&closure(&u, 0.0).unwrap(), false);
        let basis = ContrastBasis::new(p, r % p).unwrap();
        let beta = CoefficientVector::new(zero_sum(&b[..p])).unwrap();
        let lhs = contrast_design(&design, &basis).unwrap() * beta.reduce(&basis).unwrap();
        let rhs = design.values() * beta.as_vector();
        prop_assert!((lhs - rhs).amax() < 1e-10);
        Ok(())
    })
}

pub fn kkt_certificate(cases: u32) -> Result<(), String> {
    run(cases, quadratic(), |(sigma, rho, frac, zs)| {
        let lambda = frac * lambda_max(&rho, zs).max(1e-3);
        let prob = QuadraticLassoProblem::new(sigma.clone(), rho.clone(), lambda, zs).unwrap();
        let fit = constrained_l1_quadratic(&prob, &SolverConfig::default()).unwrap();
        let tol = 1e-6 * (1.0 + rho.amax());
        prop_assert!(kkt_gap(&sigma, &rho, lambda, &fit.beta, zs) <= tol);
        prop_assert!(fit.kkt_gap <= tol);
        if zs {
            prop_assert!(fit.beta.sum().abs() <= 1e-8);
        }
        Ok(())
    })
}

pub fn certified_path(cases: u32) -> Result<(), String> {
    run(cases, quadratic(), |(sigma, rho, _, zs)| {
        let lmax = lambda_max(&rho, zs);
        if lmax <= 1e-6 {
            return Ok(());
        }
        let grid = LambdaGrid::new(lmax, 8, 0.05).unwrap();
        let mut solver = LassoSolver::new(sigma.clone(), rho.clone(), zs, SolverConfig::default()).unwrap();
        let path = regularization_path(&mut solver, grid.values()).unwrap();
        prop_assert_eq!(path.len(), grid.n_points());
        prop_assert!(path[0].beta.amax() <= 1e-12);
        for f in &path {
            prop_assert!(kkt_gap(&sigma, &rho, f.lambda, &f.beta, zs) <= 1e-6 * (1.0 + rho.amax()));
        }
        Ok(())
    })
}

pub fn psd_feasibility(cases: u32) -> Result<(), String> {
    run(cases, (2usize..7).prop_flat_map(|p| matrix(p, p, -3.0, 3.0)), |a| {
        let s = (&a + a.transpose()) * 0.5;
        let cfg = PsdProjectionConfig {
            accept_max_iter: true,
            ..Default::default()
        };
        let proj = nearest_psd_maxnorm(&s, &cfg).unwrap();
        prop_assert!(is_symmetric(&proj.matrix, 1e-12));
        prop_assert!(min_eigenvalue(&proj.matrix).unwrap() >= cfg.floor - 1e-8);
        prop_assert!((max_abs_diff(&proj.matrix, &s) - proj.gap).abs() < 1e-12);
        Ok(())
    })
}

pub fn contrast_moment_reduction(cases: u32) -> Result<(), String> {
    let s = (
        (3usize..8).prop_flat_map(|p| matrix(12, p, 0.01, 1.0)),
        prop::collection::vec(-3.0..3.0f64, 12),
        0usize..8,
    );
    run(cases, s, |(a, y, r)| {
        let p = a.ncols();
        let z = log_design(&closure(&a, 0.0).unwrap(), true);
        let y = DVector::from_vec(y);
        let sigma = z.values().transpose() * z.values() / 12.0;
        let basis = ContrastBasis::new(p, r % p).unwrap();
        let m = contrast_moments(&sigma, &z, &y, &basis).unwrap();
        let d = basis.matrix();
        prop_assert!(max_abs_diff(&m.sigma_tilde_p, &(d.transpose() * &sigma * &d)) < 1e-10);
        prop_assert!((&m.rho_tilde_p - d.transpose() * &m.rho_tilde).amax() < 1e-10);
        Ok(())
    })
}

pub fn reference_invariance(cases: u32) -> Result<(), String> {
    let s = (
        (4usize..9).prop_flat_map(|p| matrix(40, p, -2.0, 2.0)),
        prop::collection::vec(any::<bool>(), 3),
        0usize..3,
    );
    run(cases, s, |(a, signs, pick)| {
        let sigma = a.transpose() * &a / 40.0;
        let support = [0usize, 1, 2];
        let s: Vec<f64> = signs.iter().map(|b| if *b { 1.0 } else { -1.0 }).collect();
        let base = theory_diagnostics_gram(&sigma, &support, &s, 0, 0.1).unwrap();
        let other = theory_diagnostics_gram(&sigma, &support, &s, support[pick], 0.1).unwrap();
        prop_assert!((base.irrepresentable - other.irrepresentable).abs() < 1e-8 * (1.0 + base.irrepresentable));
        prop_assert!((base.phi - other.phi).abs() < 1e-8 * (1.0 + base.phi));
        prop_assert!((base.c_min - other.c_min).abs() < 1e-12);
        Ok(())
    })
}

pub fn permutation_equivariance(cases: u32) -> Result<(), String> {
    let s = (any::<u64>(), Just((0..10).collect::<Vec<usize>>()).prop_shuffle());
    run(cases, s, |(seed, perm)| {
        let cfg = ScenarioConfig::new(ScenarioKind::LogisticNormal, 40, 10, 0.5, seed).unwrap();
        let rep = generate_replicate(&cfg, 0).unwrap();
        let est = EstimatorConfig::default();
        // The invariant concerns converged projections only.
        let lambda = 0.3 * lambda_max(&(rep.z.values().transpose() * &rep.y / 40.0), true);
        let fit = match eric_fit(&rep.z, &rep.y, &rep.error_cov, lambda, &est) {
            Err(EricError::NotConverged { .. }) => return Err(TestCaseError::reject("projection did not converge")),
            other => other.unwrap(),
        };
        let zp = LogDesign::from_log_values(permute_cols(&rep.z.raw_values(), &perm), true).unwrap();
        let sb = permute_cols(&permute_cols(rep.error_cov.matrix(), &perm).transpose(), &perm);
        let fitp = eric_fit(&zp, &rep.y, &ErrorCovariance::from_matrix(sb).unwrap(), lambda, &est).unwrap();
        let tol = 1e-6 * (1.0 + fit.beta.amax());
        for (k, &j) in perm.iter().enumerate() {
            prop_assert!((fitp.beta[k] - fit.beta[j]).abs() < tol, "{} vs {}", fitp.beta[k], fit.beta[j]);
        }
        prop_assert!(fit.beta.sum().abs() < 1e-8);
        Ok(())
    })
}

pub fn determinism(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 0u64..1000, 1u8..4), |(seed, rep, kind)| {
        let cfg = ScenarioConfig::new(ScenarioKind::from_number(kind).unwrap(), 12, 8, 0.5, seed).unwrap();
        let a = generate_replicate(&cfg, rep).unwrap();
        let b = generate_replicate(&cfg, rep).unwrap();
        prop_assert_eq!(a.z.values(), b.z.values());
        prop_assert_eq!(&a.y, &b.y);
        prop_assert_eq!(a.error_cov.matrix(), b.error_cov.matrix());
        prop_assert_eq!(&a.counts, &b.counts);
        Ok(())
    })
}

pub fn metric_bounds(cases: u32) -> Result<(), String> {
    let coef = || prop::collection::vec(prop_oneof![Just(0.0), -2.0..2.0f64], 10);
    let s = (coef(), coef(), prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 0..20));
    run(cases, s, |(hat, star, pts)| {
        let (h, s) = (DVector::from_vec(hat), DVector::from_vec(star));
        let m = eval_metrics(&h, &s, &DMatrix::identity(10, 10)).unwrap();
        prop_assert!(m.se >= 0.0 && m.pe >= 0.0 && m.linf >= 0.0);
        prop_assert!(m.linf <= m.se.sqrt() + 1e-12);
        prop_assert!((m.pe - m.se).abs() < 1e-9 * (1.0 + m.se));
        for rate in [m.fpr, m.fnr].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        let roc = roc_from_points(&pts, 0.5);
        prop_assert!((0.0..=1.0).contains(&roc.auc));
        prop_assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        prop_assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        prop_assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0));
        Ok(())
    })
}

pub fn fold_partition(cases: u32) -> Result<(), String> {
    run(cases, (6usize..200, 2usize..6, any::<u64>()), |(n, folds, seed)| {
        let labels = fold_assignment(n, folds, seed).unwrap();
        prop_assert_eq!(&labels, &fold_assignment(n, folds, seed).unwrap());
        let mut sizes = vec![0usize; folds];
        labels.iter().for_each(|&k| sizes[k] += 1);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        Ok(())
    })
}

pub fn log_round_trip(cases: u32) -> Result<(), String> {
    run(cases, shaped(0.01, 1.0), |u| {
        let c = closure(&u, 0.0).unwrap().with_names(default_names(u.ncols())).unwrap();
        let l = log_design(&c, false);
        let back = CompositionMatrix::from_log_values(&l.raw_values());
        prop_assert!(max_abs_diff(back.values(), c.values()) < 1e-12);
        Ok(())
    })
}
