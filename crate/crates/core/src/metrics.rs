//! Estimation and selection metrics, the zero-sum t-test, theory-condition
//! diagnostics and ROC curves.

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;

use crate::composition::LogDesign;
use crate::error::{dim_mismatch, EricError, Result};
use crate::linalg::{gram, min_eigenvalue, solve_dense, submatrix};
use crate::solver::{FitResult, Method};

/// Coefficients with `|β_j|` above this count as selected.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: Option<Method>,
    pub replicate: u64,
    /// `‖β* − β̂‖²`.
    pub se: f64,
    /// `(β* − β̂)ᵀ Σ (β* − β̂)`.
    pub pe: f64,
    pub linf: f64,
    /// Absent when β* has no zero entries.
    pub fpr: Option<f64>,
    /// Absent when β* has no nonzero entries.
    pub fnr: Option<f64>,
    pub coef_sum: f64,
    /// Selected support and signs equal those of β*.
    pub sign_consistent: bool,
}

fn sign_of(v: f64) -> i8 {
    if v.abs() > SUPPORT_THRESHOLD {
        if v > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// `sigma_true` is the Gram of the clean design used for PE.
pub fn eval_metrics(beta_hat: &DVector<f64>, beta_star: &DVector<f64>, sigma_true: &DMatrix<f64>) -> Result<MetricsReport> {
    let p = beta_star.len();
    if beta_hat.len() != p || sigma_true.shape() != (p, p) {
        return Err(dim_mismatch("metric inputs disagree in p"));
    }
    let d = beta_star - beta_hat;
    let (mut fp, mut neg, mut fnc, mut pos) = (0usize, 0usize, 0usize, 0usize);
    let mut sign_consistent = true;
    for j in 0..p {
        let truth = beta_star[j] != 0.0;
        let selected = beta_hat[j].abs() > SUPPORT_THRESHOLD;
        if truth {
            pos += 1;
            fnc += usize::from(!selected);
        } else {
            neg += 1;
            fp += usize::from(selected);
        }
        sign_consistent &= sign_of(beta_hat[j]) == sign_of(beta_star[j]);
    }
    Ok(MetricsReport {
        method: None,
        replicate: 0,
        se: d.norm_squared(),
        pe: (sigma_true * &d).dot(&d).max(0.0),
        linf: d.amax(),
        fpr: (neg > 0).then(|| fp as f64 / neg as f64),
        fnr: (pos > 0).then(|| fnc as f64 / pos as f64),
        coef_sum: beta_hat.sum(),
        sign_consistent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub mean: f64,
    pub t: f64,
    pub p_value: f64,
    pub df: usize,
}

/// One-sample two-sided t-test of mean zero.
pub fn zero_sum_ttest(sums: &[f64]) -> Result<TTest> {
    let n = sums.len();
    if n < 2 {
        return Err(EricError::InsufficientData("t-test needs at least two values".into()));
    }
    let mean = sums.iter().sum::<f64>() / n as f64;
    let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var == 0.0 {
        let (t, p_value) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TTest { mean, t, p_value, df });
    }
    let t = mean / (var / n as f64).sqrt();
    let nu = df as f64;
    let p_value = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t)).clamp(0.0, 1.0);
    Ok(TTest { mean, t, p_value, df })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryDiagnostics {
    /// Smallest eigenvalue of `Σ_SS`.
    pub c_min: f64,
    /// Left-hand side of the irrepresentable-type condition.
    pub irrepresentable: f64,
    /// `1 − irrepresentable`.
    pub xi_slack: f64,
    /// `‖D_SS (Σ^p_SS)⁻¹ D_SSᵀ‖_∞`.
    pub phi: f64,
    /// `9 φ λ / 2`.
    pub bound: f64,
}

/// Diagnostics from the Gram of the clean design.
///
/// `support` lists S, `signs` the signs of β* on S (same order), and
/// `reference` the element of S used as the log-ratio reference.
pub fn theory_diagnostics_gram(
    sigma: &DMatrix<f64>,
    support: &[usize],
    signs: &[f64],
    reference: usize,
    lambda: f64,
) -> Result<TheoryDiagnostics> {
    let p = sigma.nrows();
    if !sigma.is_square() || support.len() != signs.len() {
        return Err(dim_mismatch("support and signs differ in length"));
    }
    if support.iter().any(|&j| j >= p) {
        return Err(dim_mismatch("support index out of range"));
    }
    let mut seen = vec![false; p];
    for &j in support {
        if std::mem::replace(&mut seen[j], true) {
            return Err(EricError::Domain("support has repeated indices".into()));
        }
    }
    let ref_pos = support
        .iter()
        .position(|&j| j == reference)
        .ok_or_else(|| EricError::Domain("reference must belong to the support".into()))?;
    if signs.iter().any(|s| s.abs() != 1.0) {
        return Err(EricError::Domain("signs must be +1 or -1".into()));
    }
    let r = reference;
    let reduced = |k: usize, l: usize| sigma[(k, l)] - sigma[(k, r)] - sigma[(r, l)] + sigma[(r, r)];

    let free: Vec<usize> = support.iter().copied().filter(|&j| j != r).collect();
    let free_signs: Vec<f64> = support
        .iter()
        .zip(signs)
        .filter(|(j, _)| **j != r)
        .map(|(_, s)| *s)
        .collect();
    let ref_sign = signs[ref_pos];
    let off: Vec<usize> = (0..p).filter(|j| !seen[*j]).collect();

    let c_min = min_eigenvalue(&submatrix(sigma, support, support))?;
    let m = free.len();
    let sss = DMatrix::from_fn(m, m, |a, b| reduced(free[a], free[b]));

    // (Σ^p_SS)⁻¹ column by column; singular blocks are rejected.
    let mut inv = DMatrix::zeros(m, m);
    for c in 0..m {
        let mut e = DVector::zeros(m);
        e[c] = 1.0;
        let col = solve_dense(&sss, &e).map_err(|_| EricError::Singular("reduced Gram on the support is singular".into()))?;
        inv.set_column(c, &col);
    }

    let v = DVector::from_iterator(m, free_signs.iter().map(|s| s - ref_sign));
    let w = &inv * v;
    let irrepresentable = off
        .iter()
        .map(|&k| {
            let row: f64 = free.iter().enumerate().map(|(a, &l)| reduced(k, l) * w[a]).sum();
            (row + ref_sign).abs()
        })
        .fold(0.0, f64::max);

    // D_SS: identity on the free rows, −1ᵀ on the reference row.
    let s = support.len();
    let mut d = DMatrix::zeros(s, m);
    let mut col = 0;
    for (row, &j) in support.iter().enumerate() {
        if j == r {
            d.row_mut(row).fill(-1.0);
        } else {
            d[(row, col)] = 1.0;
            col += 1;
        }
    }
    let k = &d * &inv * d.transpose();
    let phi = (0..s)
        .map(|i| k.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);

    Ok(TheoryDiagnostics {
        c_min,
        irrepresentable,
        xi_slack: 1.0 - irrepresentable,
        phi,
        bound: 4.5 * phi * lambda,
    })
}

/// Diagnostics from a clean design (its centred Gram is used).
pub fn theory_diagnostics(
    x: &LogDesign,
    support: &[usize],
    signs: &[f64],
    reference: usize,
    lambda: f64,
) -> Result<TheoryDiagnostics> {
    theory_diagnostics_gram(&gram(x.centered().values()), support, signs, reference, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` sorted by FPR, then TPR ascending; includes (0,0) and (1,1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub tau: f64,
}

/// Builds a curve from raw operating points.
///
/// Ties in FPR are ordered by increasing TPR so that vertical segments add no
/// spurious area and a path that finds the whole support before any false
/// positive scores exactly 1.
pub fn roc_from_points(raw: &[(f64, f64)], tau: f64) -> RocCurve {
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(raw.len() + 2);
    points.push((0.0, 0.0));
    points.extend(raw.iter().copied().filter(|(f, t)| f.is_finite() && t.is_finite()));
    points.push((1.0, 1.0));
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let auc = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum();
    RocCurve { points, auc, tau }
}

/// `(FPR, TPR)` of one coefficient vector.
pub fn operating_point(beta_hat: &DVector<f64>, beta_star: &DVector<f64>) -> Option<(f64, f64)> {
    let (mut fp, mut neg, mut tp, mut pos) = (0usize, 0usize, 0usize, 0usize);
    for (b, s) in beta_hat.iter().zip(beta_star.iter()) {
        let sel = b.abs() > SUPPORT_THRESHOLD;
        if *s != 0.0 {
            pos += 1;
            tp += usize::from(sel);
        } else {
            neg += 1;
            fp += usize::from(sel);
        }
    }
    (pos > 0 && neg > 0).then(|| (fp as f64 / neg as f64, tp as f64 / pos as f64))
}

/// ROC curve traced by a regularisation path.
pub fn roc_sweep(path: &[FitResult], beta_star: &DVector<f64>, tau: f64) -> RocCurve {
    let pts: Vec<(f64, f64)> = path
        .iter()
        .filter_map(|f| operating_point(&f.beta, beta_star))
        .collect();
    roc_from_points(&pts, tau)
}

/// Averages operating points index-wise across replicates (each replicate's
/// path is on the same relative grid). A replicate whose path stopped early
/// contributes its last operating point to the remaining indices.
pub fn average_operating_points(per_replicate: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let reps: Vec<&Vec<(f64, f64)>> = per_replicate.iter().filter(|r| !r.is_empty()).collect();
    let len = reps.iter().map(|r| r.len()).max().unwrap_or(0);
    let c = reps.len() as f64;
    (0..len)
        .map(|k| {
            let (f, t) = reps
                .iter()
                .map(|r| r[k.min(r.len() - 1)])
                .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
            (f / c, t / c)
        })
        .collect()
}
