//! Small dense helpers on top of nalgebra for the d x d matrices that show
//! up in the hazard fit and the fluctuation tests.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::FitError;

/// Absolute eigenvalue floor below which a covariance is treated as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Builds `V f(Λ) Vᵀ` from a symmetric eigendecomposition.
pub fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    if m.is_empty() {
        return m.clone();
    }
    let eig = SymmetricEigen::new(m.clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&mapped) * v.transpose();
    symmetrize(&mut out);
    out
}

/// `(+∞, −∞)` for an empty matrix.
pub fn min_max_eigen(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (f64::INFINITY, f64::NEG_INFINITY);
    }
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Symmetric inverse square root; fails if any eigenvalue is at or below the floor.
pub fn inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FitError> {
    let (min, _) = min_max_eigen(m);
    if !(min > EIGEN_FLOOR) {
        return Err(FitError::DegenerateCovariance(min));
    }
    Ok(spectral_map(m, |l| 1.0 / l.sqrt()))
}

/// Symmetric square root of a positive semi-definite matrix; negative
/// round-off eigenvalues are clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |l| l.max(0.0).sqrt())
}

/// Pseudo-inverse of a symmetric matrix, dropping eigenvalues at or below the floor.
pub fn sym_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    spectral_map(m, |l| if l > EIGEN_FLOOR { 1.0 / l } else { 0.0 })
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, FitError> {
    let chol = m.clone().cholesky().ok_or(FitError::SingularCovariance)?;
    let l = chol.l_dirty();
    let (lo, hi) = (0..m.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if !(lo > EIGEN_FLOOR * hi) {
        return Err(FitError::SingularCovariance);
    }
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

#[cfg(test)]
mod tests {
    #[test]
    fn empty_matrices() {
        let e = DMatrix::<f64>::zeros(0, 0);
        assert!(inverse_sqrt(&e).unwrap().is_empty());
        assert!(spd_inverse(&e).unwrap().is_empty());
        assert!(psd_sqrt(&e).is_empty());
    }

    use super::*;

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = inverse_sqrt(&m).unwrap();
        let back = &r * &m * &r;
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((back[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_sqrt(&m), Err(FitError::DegenerateCovariance(_))));
        assert!(spd_inverse(&m).is_err());
    }
}
