//! Discrete hazard models `g(λ(t | x)) = γ₀t + xᵀβ` fitted as binary GLMs on
//! person-period rows.
//!
//! Each time point gets its own intercept (dummy-coded time factor, no
//! global intercept). Time points at which the risk set in the fitted data
//! is empty, or where every row or no row has an event, have a maximum
//! likelihood intercept of ±∞; they are pinned to a fixed hazard of 0 or 1,
//! contribute nothing to the likelihood and have zero score rows.

mod covariance;
mod design;
mod fit;
mod link;

pub use covariance::{covariance, CovarianceEstimator, ScoreCovariance};
pub use design::{HazardDesign, TimeSlot};
pub(crate) use fit::fit_with_design;
pub use fit::{fit, loglik, score_rows, FitOptions, FittedHazardModel, ModelSummary, MU_CLAMP};
pub use link::Link;

use serde::{Deserialize, Serialize};

use crate::survival::Dataset;

/// Model structure shared by all nodes of a tree: the link and which
/// x covariates enter with coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub link: Link,
    /// Indices into the dataset's x columns.
    pub x_terms: Vec<usize>,
    /// Coefficient labels, parallel to `x_terms`.
    pub x_labels: Vec<String>,
}

impl ModelSpec {
    pub fn intercept_only(link: Link) -> Self {
        Self {
            link,
            x_terms: Vec::new(),
            x_labels: Vec::new(),
        }
    }

    /// Uses every x column of the dataset.
    pub fn for_dataset(link: Link, dataset: &Dataset) -> Self {
        Self {
            link,
            x_terms: (0..dataset.p()).collect(),
            x_labels: dataset.x_names().to_vec(),
        }
    }

    pub fn p(&self) -> usize {
        self.x_terms.len()
    }
}
