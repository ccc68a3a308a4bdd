//! Score-based M-fluctuation tests: the empirical fluctuation process of
//! score contributions ordered by a partitioning variable, the supLM
//! functional for numeric variables, the χ² increment statistic for
//! categorical variables, and their asymptotic p-values.

mod blocks;
mod reference;

pub use blocks::{Ordering, SubjectBlocks};
pub use reference::{asymptotic_pvalue, AsymptoticKind, ReferenceDistribution, ReferenceStore};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::TestError;

/// Trimming window `[low, high]` of the supLM functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trim {
    pub low: f64,
    pub high: f64,
}

impl Default for Trim {
    fn default() -> Self {
        Self { low: 0.1, high: 0.9 }
    }
}

impl Trim {
    pub fn new(low: f64, high: f64) -> Result<Self, TestError> {
        if !(low > 0.0 && low < high && high < 1.0) {
            return Err(TestError::InvalidTrim { low, high });
        }
        Ok(Self { low, high })
    }

    /// Symmetric window `[trim, 1 - trim]`.
    pub fn symmetric(trim: f64) -> Result<Self, TestError> {
        Self::new(trim, 1.0 - trim)
    }

    #[inline]
    pub fn contains(&self, m: f64) -> bool {
        m >= self.low - 1e-12 && m <= self.high + 1e-12
    }
}

/// Cumulative sums of decorrelated score rows ordered by a partitioning
/// variable: row `r - 1` holds `W(r/n) = Ĵ^{-1/2} n^{-1/2} Σ_{s ≤ r} ψ_(s)`.
#[derive(Clone, Debug)]
pub struct FluctuationProcess {
    pub process: DMatrix<f64>,
    /// Row counts `r` after which the ordering variable changes value (and `n`).
    pub boundaries: Vec<usize>,
}

impl FluctuationProcess {
    /// Builds a process from precomputed values; every row is a boundary.
    pub fn from_values(process: DMatrix<f64>) -> Self {
        let boundaries = (1..=process.nrows()).collect();
        Self { process, boundaries }
    }

    pub fn n(&self) -> usize {
        self.process.nrows()
    }

    pub fn d(&self) -> usize {
        self.process.ncols()
    }

    /// `W(r/n)`; `r = 0` is the origin.
    pub fn at(&self, r: usize) -> Vec<f64> {
        if r == 0 {
            vec![0.0; self.d()]
        } else {
            self.process.row(r - 1).iter().copied().collect()
        }
    }
}

/// Scales score rows by `Ĵ^{-1/2} n^{-1/2}`.
pub fn scale_scores(scores: &DMatrix<f64>, inv_sqrt: &DMatrix<f64>) -> DMatrix<f64> {
    let n = scores.nrows().max(1) as f64;
    scores * inv_sqrt.transpose() / n.sqrt()
}

/// Empirical fluctuation process of `scores` ordered by `order_key`
/// (stable ascending). Ties share one evaluation point at the end of their run.
pub fn efp(scores: &DMatrix<f64>, inv_sqrt: &DMatrix<f64>, order_key: &[f64]) -> FluctuationProcess {
    let (n, d) = scores.shape();
    assert_eq!(order_key.len(), n, "one ordering value per score row");
    let scaled = scale_scores(scores, inv_sqrt);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| order_key[a].total_cmp(&order_key[b]));
    let mut process = DMatrix::zeros(n, d);
    let mut acc = vec![0.0; d];
    let mut boundaries = Vec::new();
    for (pos, &r) in order.iter().enumerate() {
        for j in 0..d {
            acc[j] += scaled[(r, j)];
            process[(pos, j)] = acc[j];
        }
        let last = pos + 1 == n;
        if last || order_key[order[pos + 1]] != order_key[r] {
            boundaries.push(pos + 1);
        }
    }
    FluctuationProcess { process, boundaries }
}

/// `max ‖W(m)‖² / (m(1 − m))` over boundary points with `m = r/n` inside the window.
pub fn suplm(proc: &FluctuationProcess, trim: Trim) -> Result<f64, TestError> {
    let n = proc.n();
    let mut best: Option<f64> = None;
    for &r in &proc.boundaries {
        let m = r as f64 / n as f64;
        if !trim.contains(m) || r == n {
            continue;
        }
        let norm2: f64 = proc.process.row(r - 1).iter().map(|v| v * v).sum();
        let v = norm2 / (m * (1.0 - m));
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best.ok_or(TestError::EmptyWindow {
        low: trim.low,
        high: trim.high,
        n,
    })
}

/// `Σ_c (n / n_c) ‖Δ_c‖²` with `Δ_c` the sum of scaled score rows in category
/// `c`. Empty categories are dropped; returns the statistic and `d (C − 1)`.
pub fn cat_stat(scores: &DMatrix<f64>, inv_sqrt: &DMatrix<f64>, categories: &[u32]) -> Result<(f64, usize), TestError> {
    let (n, d) = scores.shape();
    assert_eq!(categories.len(), n, "one category per score row");
    let scaled = scale_scores(scores, inv_sqrt);
    let n_cat = categories.iter().copied().max().map_or(0, |m| m as usize + 1);
    let mut sums = vec![0.0; n_cat * d];
    let mut counts = vec![0usize; n_cat];
    for (r, &c) in categories.iter().enumerate() {
        let c = c as usize;
        counts[c] += 1;
        for j in 0..d {
            sums[c * d + j] += scaled[(r, j)];
        }
    }
    blocks::categorical_from_sums(&sums, &counts, n, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suplm_hand_evaluation() {
        let proc = FluctuationProcess::from_values(DMatrix::from_column_slice(4, 1, &[0.1, 0.3, 0.0, 0.0]));
        let s = suplm(&proc, Trim::default()).unwrap();
        assert!((s - 0.36).abs() < 1e-12);
        let zero = FluctuationProcess::from_values(DMatrix::zeros(4, 2));
        assert_eq!(suplm(&zero, Trim::default()).unwrap(), 0.0);
    }

    #[test]
    fn empty_window_is_an_error() {
        let proc = FluctuationProcess::from_values(DMatrix::zeros(3, 1));
        let err = suplm(&proc, Trim::new(0.4, 0.6).unwrap()).unwrap_err();
        assert!(matches!(err, TestError::EmptyWindow { n: 3, .. }));
        assert!(Trim::new(0.6, 0.4).is_err());
        assert!(Trim::new(0.0, 0.5).is_err());
    }

    fn toy_scores() -> DMatrix<f64> {
        // Columns sum to zero, like scores at the MLE.
        DMatrix::from_row_slice(6, 2, &[0.5, -0.2, -0.3, 0.4, 0.1, 0.1, -0.6, -0.5, 0.2, 0.3, 0.1, -0.1])
    }

    #[test]
    fn efp_end_point_and_reversal() {
        let s = toy_scores();
        let id = DMatrix::identity(2, 2);
        let key = [0.3, -1.0, 2.0, 0.7, 1.1, -0.2];
        let p = efp(&s, &id, &key);
        assert!(p.at(6).iter().all(|v| v.abs() < 1e-12));
        let rev: Vec<f64> = key.iter().map(|k| -k).collect();
        let q = efp(&s, &id, &rev);
        for r in 0..=6 {
            let lhs = q.at(r);
            let (a, b) = (p.at(6), p.at(6 - r));
            for j in 0..2 {
                assert!((lhs[j] - (a[j] - b[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn efp_groups_ties() {
        let s = toy_scores();
        let p = efp(&s, &DMatrix::identity(2, 2), &[1.0, 1.0, 2.0, 2.0, 2.0, 3.0]);
        assert_eq!(p.boundaries, vec![2, 5, 6]);
    }

    #[test]
    fn suplm_only_sees_the_ordering() {
        let s = toy_scores();
        let id = DMatrix::identity(2, 2);
        let key = [0.3, -1.0, 2.0, 0.7, 1.1, -0.2];
        let warped: Vec<f64> = key.iter().map(|k: &f64| k.exp() * 3.0 + 1.0).collect();
        let trim = Trim::new(0.15, 0.85).unwrap();
        let a = suplm(&efp(&s, &id, &key), trim).unwrap();
        let b = suplm(&efp(&s, &id, &warped), trim).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cat_stat_two_groups_identity() {
        let s = toy_scores();
        let id = DMatrix::identity(2, 2);
        let labels = [0, 1, 0, 1, 1, 0];
        let (stat, df) = cat_stat(&s, &id, &labels).unwrap();
        assert_eq!(df, 2);
        let n: f64 = 6.0;
        let mut delta = [0.0; 2];
        for r in [0, 2, 5] {
            for j in 0..2 {
                delta[j] += s[(r, j)] / n.sqrt();
            }
        }
        let want = (n / 3.0 + n / 3.0) * (delta[0] * delta[0] + delta[1] * delta[1]);
        assert!((stat - want).abs() < 1e-12);

        let zero = DMatrix::zeros(6, 2);
        assert_eq!(cat_stat(&zero, &id, &labels).unwrap().0, 0.0);
        assert!(matches!(
            cat_stat(&s, &id, &[2; 6]),
            Err(TestError::TooFewCategories(1))
        ));
    }

    #[test]
    fn cat_stat_ignores_label_names() {
        let s = toy_scores();
        let id = DMatrix::identity(2, 2);
        let a = cat_stat(&s, &id, &[0, 1, 2, 0, 1, 2]).unwrap();
        let b = cat_stat(&s, &id, &[5, 0, 3, 5, 0, 3]).unwrap();
        assert!((a.0 - b.0).abs() < 1e-12);
        assert_eq!(a.1, b.1);
    }
}
