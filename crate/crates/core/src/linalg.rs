//! Small dense linear-algebra helpers shared across modules.

use faer::{MatRef, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{EricError, Result};

/// Eigen-pairs of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `k` is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition of `(m + mᵀ)/2`.
pub fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let p = m.nrows();
    if p != m.ncols() {
        return Err(EricError::DimensionMismatch(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            p,
            m.ncols()
        )));
    }
    let sym = symmetrize(m);
    let view = MatRef::from_column_major_slice(sym.as_slice(), p, p);
    let evd = view
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| EricError::Singular(format!("eigendecomposition failed: {e:?}")))?;
    let u = evd.U();
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..p).map(|k| s[k]).collect();
    let vectors = DMatrix::from_fn(p, p, |i, j| u[(i, j)]);
    Ok(SymmetricEigen { values, vectors })
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let p = m.nrows();
    if p == 0 {
        return Ok(f64::INFINITY);
    }
    let sym = symmetrize(m);
    let view = MatRef::from_column_major_slice(sym.as_slice(), p, p);
    let values = view
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| EricError::Singular(format!("eigenvalues failed: {e:?}")))?;
    Ok(values[0])
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// `mᵀ m / n` for an `n × p` matrix.
pub fn gram(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows().max(1) as f64;
    let mut g = m.tr_mul(m);
    g /= n;
    symmetrize(&g)
}

/// `mᵀ y / n`.
pub fn cross_moment(m: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    m.tr_mul(y) / n
}

/// Solves a square system by LU with partial pivoting, rejecting near-singular results.
pub fn solve_dense(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or_else(|| EricError::Singular("LU solve hit a zero pivot".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(EricError::Singular("LU solve produced non-finite values".into()));
    }
    Ok(x)
}

/// Rows of `m` at `idx`, in order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Principal submatrix on `rows × cols`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigen_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 1.0]);
        let e = symmetric_eigen(&m).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(e.values.clone()));
        let back = &e.vectors * d * e.vectors.transpose();
        assert_abs_diff_eq!(back, m, epsilon = 1e-12);
        assert_abs_diff_eq!(min_eigenvalue(&m).unwrap(), e.values[0], epsilon = 1e-12);
    }

    #[test]
    fn gram_and_solve() {
        let z = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        assert_abs_diff_eq!(gram(&z)[(0, 0)], 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = solve_dense(&a, &DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(x, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-14);
        assert!(solve_dense(&DMatrix::zeros(2, 2), &DVector::zeros(2)).is_err());
    }
}
