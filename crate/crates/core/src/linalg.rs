//! Symmetric matrix functions via eigendecomposition.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Applies `f` to the eigenvalues of the symmetric matrix `a`.
///
/// Eigenvalues are floored at `1e-14 · tr(a)` before `f` is applied.
fn spectral_map(a: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "matrix function of a non-finite matrix".into(),
        ));
    }
    let sym = (a + a.transpose()) * 0.5;
    let floor = 1e-14 * sym.trace().abs();
    let eig = SymmetricEigen::new(sym);
    let mapped = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| f(l.max(floor))),
    );
    if mapped.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "eigendecomposition produced non-finite values".into(),
        ));
    }
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&mapped) * v.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

pub fn sym_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral_map(a, f64::sqrt)
}

pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spectral_map(a, |l| 1.0 / l.sqrt())
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
