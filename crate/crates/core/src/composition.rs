//! Simplex-valued data, log designs and the additive log-ratio contrast algebra.
//!
//! Compositions are stored row-wise: one sample per row, one component per
//! column. Log designs hold natural-log abundances, optionally column-centred
//! with the centres kept so held-out rows can be recentred consistently.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_mismatch, EricError, Result};

/// Row-sum tolerance for an input to be accepted as a composition as-is.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Rows within this distance of the simplex are renormalised instead of rejected.
pub const RENORMALIZE_TOL: f64 = 1e-8;
/// Zero-sum tolerance of [`CoefficientVector`], relative to `max(1, ‖β‖₁)`.
pub const ZERO_SUM_TOL: f64 = 1e-10;

/// Default component names `c1..cp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("c{j}")).collect()
}

/// An `n × p` matrix whose rows lie in the open simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl CompositionMatrix {
    /// Validates and wraps a matrix of proportions.
    ///
    /// Rows off the simplex by more than [`SIMPLEX_TOL`] but less than
    /// [`RENORMALIZE_TOL`] are renormalised with a warning.
    pub fn new(mut values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 1 || p < 2 {
            return Err(EricError::Domain(format!(
                "a composition matrix needs n >= 1 and p >= 2, got {n}x{p}"
            )));
        }
        if names.len() != p {
            return Err(dim_mismatch(format!(
                "{} component names for {p} columns",
                names.len()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..p {
                let v = values[(i, j)];
                if !(v.is_finite() && v > 0.0) {
                    return Err(EricError::Domain(format!(
                        "entry ({i}, {j}) = {v} is not strictly positive"
                    )));
                }
                sum += v;
            }
            let dev = (sum - 1.0).abs();
            if dev > RENORMALIZE_TOL {
                return Err(EricError::Domain(format!(
                    "row {i} sums to {sum}, not 1"
                )));
            }
            if dev > SIMPLEX_TOL {
                log::warn!("row {i} sums to {sum}; renormalising");
                values.row_mut(i).unscale_mut(sum);
            }
        }
        Ok(Self { values, names })
    }

    /// Builds compositions from unnormalised log abundances (a row-wise softmax).
    ///
    /// Proportions that underflow are stored at `f64::MIN_POSITIVE`; callers
    /// that need exact log values should keep the log matrix.
    pub fn from_log_values(log_values: &DMatrix<f64>) -> Self {
        let (n, p) = log_values.shape();
        let mut values = DMatrix::zeros(n, p);
        for i in 0..n {
            let lse = log_sum_exp(log_values.row(i).iter().copied());
            for j in 0..p {
                values[(i, j)] = (log_values[(i, j)] - lse).exp().max(f64::MIN_POSITIVE);
            }
        }
        Self {
            values,
            names: default_names(p),
        }
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.p() {
            return Err(dim_mismatch(format!(
                "{} component names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

/// `log Σ exp(x)` computed stably.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Normalises nonnegative rows (plus a pseudo-count) onto the simplex.
pub fn closure(raw: &DMatrix<f64>, pseudo_count: f64) -> Result<CompositionMatrix> {
    if !(pseudo_count.is_finite() && pseudo_count >= 0.0) {
        return Err(EricError::Domain(format!(
            "pseudo-count must be a nonnegative number, got {pseudo_count}"
        )));
    }
    let (n, p) = raw.shape();
    let mut values = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut sum = 0.0;
        for j in 0..p {
            let v = raw[(i, j)];
            if !(v.is_finite() && v >= 0.0) {
                return Err(EricError::Domain(format!(
                    "entry ({i}, {j}) = {v} is negative or not finite"
                )));
            }
            sum += v + pseudo_count;
        }
        if sum <= 0.0 {
            return Err(EricError::DegenerateRow { row: i });
        }
        for j in 0..p {
            let v = (raw[(i, j)] + pseudo_count) / sum;
            if v <= 0.0 {
                return Err(EricError::Domain(format!(
                    "entry ({i}, {j}) is zero; a positive pseudo-count is required"
                )));
            }
            values[(i, j)] = v;
        }
    }
    CompositionMatrix::new(values, default_names(p))
}

/// Natural-log abundances, optionally column-centred.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDesign {
    values: DMatrix<f64>,
    column_means: Option<DVector<f64>>,
}

impl LogDesign {
    /// Wraps raw log abundances; each row must exponentiate onto the simplex.
    pub fn from_log_values(values: DMatrix<f64>, center: bool) -> Result<Self> {
        for i in 0..values.nrows() {
            if values.row(i).iter().any(|v| !v.is_finite()) {
                return Err(EricError::Domain(format!("row {i} has a non-finite log value")));
            }
            let lse = log_sum_exp(values.row(i).iter().copied());
            if lse.abs() > 1e-10 {
                return Err(EricError::Domain(format!(
                    "row {i} does not exponentiate onto the simplex (log-sum-exp {lse:.3e})"
                )));
            }
        }
        Ok(Self::from_log_values_unchecked(values, center))
    }

    pub(crate) fn from_log_values_unchecked(values: DMatrix<f64>, center: bool) -> Self {
        let design = Self {
            values,
            column_means: None,
        };
        if center {
            design.centered()
        } else {
            design
        }
    }

    /// Column-centred copy; a no-op if already centred.
    pub fn centered(&self) -> Self {
        if self.column_means.is_some() {
            return self.clone();
        }
        let means = column_means(&self.values);
        let mut values = self.values.clone();
        subtract_row_vector(&mut values, &means);
        Self {
            values,
            column_means: Some(means),
        }
    }

    pub fn is_centered(&self) -> bool {
        self.column_means.is_some()
    }

    pub fn column_means(&self) -> Option<&DVector<f64>> {
        self.column_means.as_ref()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// The log abundances before centring.
    pub fn raw_values(&self) -> DMatrix<f64> {
        match &self.column_means {
            None => self.values.clone(),
            Some(means) => {
                let mut raw = self.values.clone();
                for (j, m) in means.iter().enumerate() {
                    raw.column_mut(j).add_scalar_mut(*m);
                }
                raw
            }
        }
    }

    /// Applies this design's stored centres to other rows of log abundances.
    pub fn recenter(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != self.p() {
            return Err(dim_mismatch(format!(
                "{} columns against a {}-component design",
                rows.ncols(),
                self.p()
            )));
        }
        let mut out = rows.clone();
        if let Some(means) = &self.column_means {
            subtract_row_vector(&mut out, means);
        }
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }
}

/// Entrywise log of a composition matrix.
pub fn log_design(c: &CompositionMatrix, center: bool) -> LogDesign {
    LogDesign::from_log_values_unchecked(c.values().map(f64::ln), center)
}

pub(crate) fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn subtract_row_vector(m: &mut DMatrix<f64>, v: &DVector<f64>) {
    for (j, mean) in v.iter().enumerate() {
        m.column_mut(j).add_scalar_mut(-mean);
    }
}

/// The additive log-ratio contrast with a chosen reference component.
///
/// The materialised matrix `D` is `p × (p-1)`: identity on the rows of the
/// free components (in their natural order) and `-1` on the reference row.
/// Indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContrastBasis {
    p: usize,
    reference: usize,
}

impl ContrastBasis {
    pub fn new(p: usize, reference: usize) -> Result<Self> {
        if p < 2 {
            return Err(EricError::Domain(format!("contrast basis needs p >= 2, got {p}")));
        }
        if reference >= p {
            return Err(EricError::Domain(format!(
                "reference index {reference} out of range for p = {p}"
            )));
        }
        Ok(Self { p, reference })
    }

    /// Last component as reference.
    pub fn last(p: usize) -> Result<Self> {
        Self::new(p, p.saturating_sub(1))
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Components other than the reference, in order; position `k` here is
    /// column `k` of `D`.
    pub fn free_components(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&j| j != self.reference)
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.p, self.p - 1);
        for (k, j) in self.free_components().enumerate() {
            d[(j, k)] = 1.0;
            d[(self.reference, k)] = -1.0;
        }
        d
    }
}

/// Log-ratios against the reference component: column `k` is `L_j − L_ref`.
pub fn contrast_design(l: &LogDesign, basis: &ContrastBasis) -> Result<DMatrix<f64>> {
    if l.p() != basis.p() {
        return Err(dim_mismatch(format!(
            "design has {} columns but the basis has p = {}",
            l.p(),
            basis.p()
        )));
    }
    let values = l.values();
    let reference = values.column(basis.reference());
    let mut out = DMatrix::zeros(l.n(), basis.p() - 1);
    for (k, j) in basis.free_components().enumerate() {
        out.set_column(k, &(values.column(j) - reference));
    }
    Ok(out)
}

/// A zero-sum coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    beta: DVector<f64>,
}

impl CoefficientVector {
    pub fn new(beta: DVector<f64>) -> Result<Self> {
        let sum = beta.sum();
        let scale = beta.lp_norm(1).max(1.0);
        if !sum.is_finite() || sum.abs() > ZERO_SUM_TOL * scale {
            return Err(EricError::Domain(format!(
                "coefficients sum to {sum:.3e}, not zero"
            )));
        }
        Ok(Self { beta })
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.beta
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    /// Coordinates of the free components (drops the reference).
    pub fn reduce(&self, basis: &ContrastBasis) -> Result<DVector<f64>> {
        if self.len() != basis.p() {
            return Err(dim_mismatch("coefficient length differs from basis p"));
        }
        Ok(DVector::from_iterator(
            basis.p() - 1,
            basis.free_components().map(|j| self.beta[j]),
        ))
    }
}

/// Maps reference-free coefficients back to a full zero-sum vector (`D·β₋`).
pub fn expand_coefficients(beta_minus: &DVector<f64>, basis: &ContrastBasis) -> Result<CoefficientVector> {
    if beta_minus.len() + 1 != basis.p() {
        return Err(dim_mismatch(format!(
            "{} free coefficients for p = {}",
            beta_minus.len(),
            basis.p()
        )));
    }
    let mut beta = DVector::zeros(basis.p());
    for (k, j) in basis.free_components().enumerate() {
        beta[j] = beta_minus[k];
    }
    beta[basis.reference()] = -beta_minus.sum();
    CoefficientVector::new(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, v.len(), v)
    }

    #[test]
    fn closure_normalises_rows() {
        let c = closure(&row(&[1.0, 1.0, 2.0]), 0.0).unwrap();
        assert_abs_diff_eq!(c.values()[(0, 0)], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values()[(0, 2)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn closure_with_half_pseudo_count() {
        let c = closure(&row(&[0.0, 1.0, 3.0]), 0.5).unwrap();
        assert_abs_diff_eq!(c.values()[(0, 0)], 1.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values()[(0, 1)], 3.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.values()[(0, 2)], 7.0 / 11.0, epsilon = 1e-15);
    }

    #[test]
    fn closure_leaves_simplex_rows_alone() {
        let r = row(&[0.2, 0.3, 0.5]);
        let c = closure(&r, 0.0).unwrap();
        assert_abs_diff_eq!(c.values(), &r, epsilon = 1e-15);
    }

    #[test]
    fn closure_errors() {
        assert!(matches!(
            closure(&row(&[0.0, 0.0]), 0.0),
            Err(EricError::DegenerateRow { row: 0 })
        ));
        assert!(matches!(closure(&row(&[-1.0, 2.0]), 0.0), Err(EricError::Domain(_))));
        assert!(matches!(closure(&row(&[0.0, 2.0]), 0.0), Err(EricError::Domain(_))));
    }

    #[test]
    fn composition_rejects_off_simplex_and_renormalises_near_misses() {
        assert!(CompositionMatrix::new(row(&[0.5, 0.6]), default_names(2)).is_err());
        let c = CompositionMatrix::new(row(&[0.5, 0.5 + 1e-10]), default_names(2)).unwrap();
        assert_abs_diff_eq!(c.values().row(0).sum(), 1.0, epsilon = 1e-15);
        assert!(CompositionMatrix::new(row(&[1.0]), default_names(1)).is_err());
    }

    #[test]
    fn log_design_examples() {
        let third = 1.0 / 3.0;
        let c = CompositionMatrix::new(row(&[third, third, third]), default_names(3)).unwrap();
        let l = log_design(&c, false);
        for j in 0..3 {
            assert_abs_diff_eq!(l.values()[(0, j)], -(3.0f64).ln(), epsilon = 1e-14);
        }
        let centered = log_design(&c, true);
        assert!(centered.values().iter().all(|v| v.abs() < 1e-15));

        let c = CompositionMatrix::new(row(&[0.5, 0.3, 0.2]), default_names(3)).unwrap();
        let l = log_design(&c, false);
        let expected = [-std::f64::consts::LN_2, -1.2040, -1.6094];
        for j in 0..3 {
            assert_abs_diff_eq!(l.values()[(0, j)], expected[j], epsilon = 5e-5);
        }
    }

    #[test]
    fn centring_keeps_means_for_recentring() {
        let c = closure(&DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 1.0, 1.0]), 0.0).unwrap();
        let l = log_design(&c, true);
        let raw = l.raw_values();
        assert_abs_diff_eq!(raw, log_design(&c, false).values().clone(), epsilon = 1e-15);
        let again = l.recenter(&raw).unwrap();
        assert_abs_diff_eq!(again, l.values().clone(), epsilon = 1e-15);
    }

    #[test]
    fn contrast_matrix_structure() {
        let b = ContrastBasis::new(4, 1).unwrap();
        let d = b.matrix();
        for k in 0..3 {
            assert_abs_diff_eq!(d.column(k).sum(), 0.0);
        }
        let dtd = d.transpose() * &d;
        let expected = DMatrix::identity(3, 3) + DMatrix::from_element(3, 3, 1.0);
        assert_abs_diff_eq!(dtd, expected);
        assert!(ContrastBasis::new(3, 3).is_err());
        assert!(ContrastBasis::new(1, 0).is_err());
    }

    #[test]
    fn contrast_design_examples() {
        let c = CompositionMatrix::new(row(&[0.25; 4]), default_names(4)).unwrap();
        let z = contrast_design(&log_design(&c, false), &ContrastBasis::last(4).unwrap()).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-15));

        let c = CompositionMatrix::new(row(&[0.8, 0.2]), default_names(2)).unwrap();
        let z = contrast_design(&log_design(&c, false), &ContrastBasis::last(2).unwrap()).unwrap();
        assert_abs_diff_eq!(z[(0, 0)], 4.0f64.ln(), epsilon = 1e-12);

        let bad = ContrastBasis::last(3).unwrap();
        assert!(contrast_design(&log_design(&c, false), &bad).is_err());
    }

    #[test]
    fn expand_examples() {
        let b = ContrastBasis::last(4).unwrap();
        let beta = expand_coefficients(&DVector::from_vec(vec![1.0, -1.0, 0.0]), &b).unwrap();
        assert_eq!(beta.as_vector().as_slice(), &[1.0, -1.0, 0.0, 0.0]);

        let zero = expand_coefficients(&DVector::zeros(3), &b).unwrap();
        assert!(zero.as_vector().iter().all(|v| *v == 0.0));

        let b8 = ContrastBasis::last(8).unwrap();
        let head = DVector::from_vec(vec![1.2, -0.8, 0.7, 0.0, 0.0, -1.5, -1.0]);
        let full = expand_coefficients(&head, &b8).unwrap();
        assert_abs_diff_eq!(full.as_vector()[7], 1.4, epsilon = 1e-12);

        assert!(expand_coefficients(&DVector::zeros(2), &b).is_err());
    }

    #[test]
    fn coefficient_vector_checks_zero_sum() {
        assert!(CoefficientVector::new(DVector::from_vec(vec![1.0, -0.5])).is_err());
        let v = CoefficientVector::new(DVector::from_vec(vec![1.0, 2.0, -3.0])).unwrap();
        let b = ContrastBasis::new(3, 0).unwrap();
        assert_eq!(v.reduce(&b).unwrap().as_slice(), &[2.0, -3.0]);
    }
}
