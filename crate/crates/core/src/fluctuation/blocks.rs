//! Subject-level evaluation of the fluctuation statistics.
//!
//! Partitioning variables are constant within a subject, so every subject's
//! person-period rows are adjacent in any ordering by `z` and tied with each
//! other. The statistics therefore only depend on per-subject sums of the
//! decorrelated scores and per-subject row counts, which lets a permutation
//! of outcomes against `z` be evaluated in `O(N d)` without re-augmenting.

use nalgebra::DMatrix;

use super::{scale_scores, Trim};
use crate::error::TestError;

/// Per-subject sums of `Ĵ^{-1/2} n^{-1/2} ψ_r` and row counts.
#[derive(Clone, Debug)]
pub struct SubjectBlocks {
    sums: Vec<f64>,
    rows: Vec<usize>,
    d: usize,
    n: usize,
}

/// How a partitioning variable orders (or groups) subjects.
#[derive(Clone, Debug)]
pub enum Ordering {
    Numeric {
        /// Subject indices sorted by ascending value.
        order: Vec<usize>,
        /// `true` where the next subject in `order` has a different value.
        group_end: Vec<bool>,
    },
    Categorical {
        codes: Vec<u32>,
        n_levels: usize,
    },
}

impl Ordering {
    pub fn numeric(values: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let group_end = (0..order.len())
            .map(|j| j + 1 == order.len() || values[order[j + 1]] != values[order[j]])
            .collect();
        Ordering::Numeric { order, group_end }
    }

    pub fn categorical(codes: &[f64], n_levels: usize) -> Self {
        Ordering::Categorical {
            codes: codes.iter().map(|&c| c as u32).collect(),
            n_levels,
        }
    }
}

impl SubjectBlocks {
    /// `offsets` delimits each subject's rows in `scores` (length `N + 1`).
    pub fn from_scores(scores: &DMatrix<f64>, inv_sqrt: &DMatrix<f64>, offsets: &[usize]) -> Self {
        let (n, d) = scores.shape();
        let scaled = scale_scores(scores, inv_sqrt);
        let n_subj = offsets.len() - 1;
        let mut sums = vec![0.0; n_subj * d];
        let mut rows = vec![0usize; n_subj];
        for i in 0..n_subj {
            rows[i] = offsets[i + 1] - offsets[i];
            for r in offsets[i]..offsets[i + 1] {
                for j in 0..d {
                    sums[i * d + j] += scaled[(r, j)];
                }
            }
        }
        Self { sums, rows, d, n }
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// supLM with subject `i` carrying the outcome block `assign[i]`; `None`
    /// when no evaluation point falls inside the window.
    pub fn suplm(&self, order: &[usize], group_end: &[bool], assign: &[usize], trim: Trim) -> Option<f64> {
        let d = self.d;
        let n = self.n as f64;
        let mut acc = vec![0.0; d];
        let mut r = 0usize;
        let mut best: Option<f64> = None;
        for (j, &s) in order.iter().enumerate() {
            let b = assign[s];
            r += self.rows[b];
            for (a, v) in acc.iter_mut().zip(&self.sums[b * d..(b + 1) * d]) {
                *a += v;
            }
            if group_end[j] && r < self.n {
                let m = r as f64 / n;
                if trim.contains(m) {
                    let norm2: f64 = acc.iter().map(|v| v * v).sum();
                    let v = norm2 / (m * (1.0 - m));
                    best = Some(best.map_or(v, |x: f64| x.max(v)));
                }
            }
        }
        best
    }

    pub fn categorical(&self, codes: &[u32], n_levels: usize, assign: &[usize]) -> Result<(f64, usize), TestError> {
        let d = self.d;
        let mut sums = vec![0.0; n_levels * d];
        let mut counts = vec![0usize; n_levels];
        for (s, &c) in codes.iter().enumerate() {
            let b = assign[s];
            let c = c as usize;
            counts[c] += self.rows[b];
            for (a, v) in sums[c * d..(c + 1) * d].iter_mut().zip(&self.sums[b * d..(b + 1) * d]) {
                *a += v;
            }
        }
        categorical_from_sums(&sums, &counts, self.n, d)
    }

    /// Statistic for one ordering; `Ok(None)` when the variable cannot be
    /// tested (empty trimming window). Categorical results carry their df.
    pub fn statistic(
        &self,
        ordering: &Ordering,
        assign: &[usize],
        trim: Trim,
    ) -> Result<Option<(f64, Option<usize>)>, TestError> {
        match ordering {
            Ordering::Numeric { order, group_end } => Ok(self.suplm(order, group_end, assign, trim).map(|s| (s, None))),
            Ordering::Categorical { codes, n_levels } => match self.categorical(codes, *n_levels, assign) {
                Ok((s, df)) => Ok(Some((s, Some(df)))),
                Err(TestError::TooFewCategories(_)) => Ok(None),
                Err(e) => Err(e),
            },
        }
    }
}

pub(crate) fn categorical_from_sums(
    sums: &[f64],
    counts: &[usize],
    n: usize,
    d: usize,
) -> Result<(f64, usize), TestError> {
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(TestError::TooFewCategories(present));
    }
    let mut stat = 0.0;
    for (c, &nc) in counts.iter().enumerate() {
        if nc == 0 {
            continue;
        }
        let norm2: f64 = sums[c * d..(c + 1) * d].iter().map(|v| v * v).sum();
        stat += n as f64 / nc as f64 * norm2;
    }
    Ok((stat, d * (present - 1)))
}
