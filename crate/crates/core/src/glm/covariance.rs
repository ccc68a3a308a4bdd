use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::linalg;

/// Estimator of `Cov(ψ)` used to decorrelate the fluctuation process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceEstimator {
    /// Outer product of gradients, `n⁻¹ Σ ψ_r ψ_rᵀ`.
    Opg,
    /// `A M⁻¹ A` with `A` the per-row observed information and `M` the OPG,
    /// so that `Ĵ⁻¹ = A⁻¹ M A⁻¹` only needs `A` to be invertible.
    #[default]
    Sandwich,
}

impl std::str::FromStr for CovarianceEstimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "opg" => Ok(Self::Opg),
            "sandwich" => Ok(Self::Sandwich),
            other => Err(format!("unknown covariance estimator '{other}'")),
        }
    }
}

/// `Ĵ` together with its symmetric inverse square root when one exists.
#[derive(Clone, Debug)]
pub struct ScoreCovariance {
    pub estimator: CovarianceEstimator,
    pub matrix: DMatrix<f64>,
    inv_sqrt: Result<DMatrix<f64>, FitError>,
}

impl ScoreCovariance {
    /// `Ĵ^{-1/2}`; fails with [`FitError::DegenerateCovariance`] when the OPG
    /// has an eigenvalue at or below the floor.
    pub fn inverse_sqrt(&self) -> Result<&DMatrix<f64>, FitError> {
        self.inv_sqrt.as_ref().map_err(Clone::clone)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Estimates `Cov(ψ)` from the `n x d` score rows. `information` is the
/// unscaled observed information `XᵀWX` and is required for the sandwich.
pub fn covariance(
    scores: &DMatrix<f64>,
    estimator: CovarianceEstimator,
    information: Option<&DMatrix<f64>>,
) -> Result<ScoreCovariance, FitError> {
    let n = scores.nrows().max(1) as f64;
    let mut meat = scores.transpose() * scores / n;
    linalg::symmetrize(&mut meat);
    match estimator {
        CovarianceEstimator::Opg => {
            let inv_sqrt = linalg::inverse_sqrt(&meat);
            Ok(ScoreCovariance {
                estimator,
                matrix: meat,
                inv_sqrt,
            })
        }
        CovarianceEstimator::Sandwich => {
            let info = information.ok_or(FitError::SingularCovariance)?;
            let bread = info / n;
            let bread_inv = linalg::spd_inverse(&bread)?;
            let mut j_inv = &bread_inv * &meat * &bread_inv;
            linalg::symmetrize(&mut j_inv);
            let mut matrix = &bread * linalg::sym_pinv(&meat) * &bread;
            linalg::symmetrize(&mut matrix);
            Ok(ScoreCovariance {
                estimator,
                matrix,
                inv_sqrt: Ok(linalg::psd_sqrt(&j_inv)),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn opg_of_zero_scores_is_zero() {
        let s = DMatrix::zeros(5, 2);
        let c = covariance(&s, CovarianceEstimator::Opg, None).unwrap();
        assert_eq!(c.matrix, DMatrix::zeros(2, 2));
        assert!(matches!(c.inverse_sqrt(), Err(FitError::DegenerateCovariance(_))));
    }

    #[test]
    fn opg_single_column() {
        let c = 1.7;
        let s = DMatrix::from_column_slice(2, 1, &[c, -c]);
        let cov = covariance(&s, CovarianceEstimator::Opg, None).unwrap();
        assert!((cov.matrix[(0, 0)] - c * c).abs() < 1e-14);
        assert!((cov.inverse_sqrt().unwrap()[(0, 0)] - 1.0 / c).abs() < 1e-14);
    }

    #[test]
    fn sandwich_needs_invertible_information() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(
            covariance(&s, CovarianceEstimator::Sandwich, Some(&singular)).unwrap_err(),
            FitError::SingularCovariance
        );
    }

    #[test]
    fn sandwich_equals_opg_when_information_matches() {
        let s = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, -0.3, 0.2, -0.4, -0.9, -0.3, 0.2]);
        let meat_unscaled = s.transpose() * &s;
        let opg = covariance(&s, CovarianceEstimator::Opg, None).unwrap();
        let sw = covariance(&s, CovarianceEstimator::Sandwich, Some(&meat_unscaled)).unwrap();
        let diff = (&opg.matrix - &sw.matrix).amax();
        assert!(diff < 1e-12, "{diff}");
        let r1 = opg.inverse_sqrt().unwrap();
        let r2 = sw.inverse_sqrt().unwrap();
        assert!((r1 - r2).amax() < 1e-10);
    }
}
