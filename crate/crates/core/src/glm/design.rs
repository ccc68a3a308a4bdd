use serde::{Deserialize, Serialize};

use super::Link;
use super::ModelSpec;
use crate::survival::AugmentedDataset;

/// How a time point enters the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum TimeSlot {
    /// Free intercept at this coefficient index.
    Coef(usize),
    /// Hazard pinned to 0 (no events) or 1 (all rows are events).
    Fixed(f64),
    /// No rows at this time point.
    Absent,
}

/// Resolved column layout of a hazard model: one coefficient per estimable
/// time point followed by the x coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HazardDesign {
    pub link: Link,
    /// Indexed by `t - 1`.
    pub slots: Vec<TimeSlot>,
    pub x_terms: Vec<usize>,
    pub names: Vec<String>,
    pub n_time: usize,
}

impl HazardDesign {
    /// Builds the layout from per-time `(at_risk, events)` counts.
    pub fn from_counts(counts: &[(usize, usize)], spec: &ModelSpec) -> Self {
        let mut slots = Vec::with_capacity(counts.len());
        let mut names = Vec::new();
        for (i, &(n, d)) in counts.iter().enumerate() {
            let slot = if n == 0 {
                TimeSlot::Absent
            } else if d == 0 {
                TimeSlot::Fixed(0.0)
            } else if d == n {
                TimeSlot::Fixed(1.0)
            } else {
                names.push(format!("time{}", i + 1));
                TimeSlot::Coef(names.len() - 1)
            };
            slots.push(slot);
        }
        let n_time = names.len();
        for (k, &term) in spec.x_terms.iter().enumerate() {
            names.push(
                spec.x_labels
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("x{}", term + 1)),
            );
        }
        Self {
            link: spec.link,
            slots,
            x_terms: spec.x_terms.clone(),
            names,
            n_time,
        }
    }

    pub fn for_augmented(aug: &AugmentedDataset, spec: &ModelSpec) -> Self {
        Self::from_counts(&aug.time_counts(), spec)
    }

    pub fn dim(&self) -> usize {
        self.n_time + self.x_terms.len()
    }

    pub fn slot(&self, t: u32) -> TimeSlot {
        self.slots.get(t as usize - 1).copied().unwrap_or(TimeSlot::Absent)
    }

    /// Linear predictor of a row with a free intercept.
    #[inline]
    pub fn eta(&self, theta: &[f64], coef: usize, x_row: &[f64]) -> f64 {
        let mut eta = theta[coef];
        for (k, &term) in self.x_terms.iter().enumerate() {
            eta += theta[self.n_time + k] * x_row[term];
        }
        eta
    }

    /// Hazard at time `t` for covariates `x_row`; `None` where the time point
    /// was never at risk.
    pub fn hazard(&self, theta: &[f64], t: u32, x_row: &[f64]) -> Option<f64> {
        match self.slot(t) {
            TimeSlot::Coef(j) => Some(self.link.inverse(self.eta(theta, j, x_row))),
            TimeSlot::Fixed(h) => Some(h),
            TimeSlot::Absent => None,
        }
    }
}
