//! Thin wrappers around the dense factorizations used by the estimators.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub fn to_dvector(v: ArrayView1<'_, f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn from_dvector(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Symmetric eigendecomposition `a = Q diag(vals) Q^T`.
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

pub fn sym_eigen(a: ArrayView2<'_, f64>) -> Result<SymEigen> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Numerical("symmetric eigendecomposition needs a square matrix".into()));
    }
    let se = to_dmatrix(a).symmetric_eigen();
    let values = Array1::from_iter(se.eigenvalues.iter().copied());
    let mut vectors = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            vectors[[i, j]] = se.eigenvectors[(i, j)];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Solve the symmetric positive-definite system `a x = b` by Cholesky.
/// If factorization fails, retries once with `jitter` added to the diagonal.
pub fn spd_solve(a: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>, jitter: f64) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.len() });
    }
    let m = to_dmatrix(a);
    let rhs = to_dvector(b);
    if let Some(ch) = m.clone().cholesky() {
        return Ok(from_dvector(&ch.solve(&rhs)));
    }
    let mut mj = m;
    for i in 0..n {
        mj[(i, i)] += jitter;
    }
    match mj.cholesky() {
        Some(ch) => Ok(from_dvector(&ch.solve(&rhs))),
        None => Err(Error::Numerical(
            "Cholesky factorization failed even after diagonal jitter".into(),
        )),
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// with a single jitter retry.
pub fn cholesky_lower(a: ArrayView2<'_, f64>, jitter: f64) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Numerical("Cholesky needs a square matrix".into()));
    }
    let m = to_dmatrix(a);
    let factor = match m.clone().cholesky() {
        Some(ch) => ch,
        None => {
            let mut mj = m;
            for i in 0..n {
                mj[(i, i)] += jitter;
            }
            mj.cholesky().ok_or_else(|| {
                Error::Numerical("Cholesky factorization failed even after diagonal jitter".into())
            })?
        }
    };
    let l = factor.l();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            out[[i, j]] = l[(i, j)];
        }
    }
    Ok(out)
}
