//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut Mat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Clamp the eigenvalues of a symmetric matrix from below at `floor`.
pub fn floor_eigenvalues(m: &Mat, floor: f64) -> Mat {
    let mut eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter_mut().for_each(|v| *v = v.max(floor));
    let mut out = eig.recompose();
    symmetrize(&mut out);
    out
}

/// Cholesky factor of a symmetric matrix that should be positive definite.
/// If the factorization breaks down from round-off, the spectrum is floored
/// at `1e-12 * trace` and the factorization retried once.
pub fn robust_cholesky(m: &Mat) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let trace = m.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::numerical("matrix is not positive definite"));
    }
    let floored = floor_eigenvalues(m, 1e-12 * trace);
    Cholesky::new(floored).ok_or_else(|| Error::numerical("matrix is not positive definite"))
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(m: &Mat) -> Result<Mat> {
    let mut inv = robust_cholesky(m)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Extreme eigenvalues of a Hermitian `n x n` matrix stored row-major.
pub fn hermitian_eig_range(values: &[Complex64], n: usize) -> (f64, f64) {
    let m = DMatrix::<Complex64>::from_row_slice(n, n, values);
    let mut h = m.clone();
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 0.5 * (m[(i, j)] + m[(j, i)].conj());
        }
    }
    let eig = SymmetricEigen::new(h);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}
