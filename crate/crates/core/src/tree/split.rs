//! Split-point search for the selected partitioning variable.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::glm::{fit, FitOptions, ModelSpec};
use crate::survival::{augment, Dataset, ZVariable};

/// Largest number of categories searched exhaustively.
pub const MAX_CATEGORIES: usize = 12;
/// Coarse candidate count of the fast numeric search.
pub const FAST_GRID: usize = 50;
/// Coarse candidates refined by the fast numeric search.
pub const FAST_REFINE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitKind {
    /// Left child is `z ≤ cutpoint`.
    Numeric { cutpoint: f64 },
    /// Levels present at the node, by child. Levels in neither set cannot be routed.
    Categorical { left: Vec<String>, right: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub variable: String,
    pub variable_index: usize,
    #[serde(flatten)]
    pub kind: SplitKind,
    /// Summed child log-likelihood at the chosen split.
    pub objective: f64,
}

impl SplitRule {
    /// `Some(true)` for the left child; `None` for a level outside both sets.
    pub fn goes_left(&self, var: &ZVariable, value: f64) -> Option<bool> {
        match &self.kind {
            SplitKind::Numeric { cutpoint } => Some(value <= *cutpoint),
            SplitKind::Categorical { left, right } => {
                let level = var.levels()?.get(value as usize)?;
                if left.contains(level) {
                    Some(true)
                } else if right.contains(level) {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }
}

/// Constraints every child must meet.
#[derive(Clone, Copy, Debug)]
pub struct SplitLimits {
    pub min_subjects: usize,
    pub min_events: usize,
}

/// Per-time `(at_risk, events)` counts with a closed-form profile
/// log-likelihood for intercept-only models, which for either link is
/// `Σ_t d log(d/n) + (n − d) log(1 − d/n)`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Counts {
    at_risk: Vec<usize>,
    events: Vec<usize>,
    subjects: usize,
    total_events: usize,
}

impl Counts {
    pub(crate) fn new(k_max: u32) -> Self {
        Self {
            at_risk: vec![0; k_max as usize],
            events: vec![0; k_max as usize],
            subjects: 0,
            total_events: 0,
        }
    }

    pub(crate) fn add(&mut self, time: u32, event: bool) {
        for n in &mut self.at_risk[..time as usize] {
            *n += 1;
        }
        if event {
            self.events[time as usize - 1] += 1;
            self.total_events += 1;
        }
        self.subjects += 1;
    }

    fn minus(&self, other: &Counts) -> Counts {
        Counts {
            at_risk: self.at_risk.iter().zip(&other.at_risk).map(|(a, b)| a - b).collect(),
            events: self.events.iter().zip(&other.events).map(|(a, b)| a - b).collect(),
            subjects: self.subjects - other.subjects,
            total_events: self.total_events - other.total_events,
        }
    }

    pub(crate) fn loglik(&self) -> f64 {
        self.at_risk
            .iter()
            .zip(&self.events)
            .map(|(&n, &d)| {
                if d == 0 || d == n {
                    0.0
                } else {
                    let (n, d) = (n as f64, d as f64);
                    d * (d / n).ln() + (n - d) * (1.0 - d / n).ln()
                }
            })
            .sum()
    }

    fn admissible(&self, limits: SplitLimits) -> bool {
        self.subjects >= limits.min_subjects && self.total_events >= limits.min_events
    }
}

fn subject_counts(dataset: &Dataset, members: &[usize]) -> Counts {
    let mut c = Counts::new(dataset.k_max());
    for &i in members {
        let s = &dataset.subjects()[i];
        c.add(s.time(), s.event());
    }
    c
}

fn child_counts_ok(dataset: &Dataset, left: &[usize], right: &[usize], limits: SplitLimits) -> bool {
    subject_counts(dataset, left).admissible(limits) && subject_counts(dataset, right).admissible(limits)
}

/// Summed log-likelihood of separate fits to the two children; `None` if a
/// child violates the limits or cannot be fitted.
fn refit_objective(
    dataset: &Dataset,
    left: &[usize],
    right: &[usize],
    spec: &ModelSpec,
    opts: &FitOptions,
    limits: SplitLimits,
) -> Option<f64> {
    if !child_counts_ok(dataset, left, right, limits) {
        return None;
    }
    let mut total = 0.0;
    for part in [left, right] {
        let aug = augment(&dataset.subset(part));
        let model = fit(&aug, spec, opts).ok()?;
        if !model.converged {
            return None;
        }
        total += model.loglik;
    }
    Some(total)
}

/// Keeps the first maximum (strictly better replaces), so ties go to the
/// earlier candidate.
fn argmax(values: impl IntoIterator<Item = Option<f64>>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if let Some(v) = v {
            let better = match best {
                None => true,
                Some((_, b)) => v > b + 1e-10 * b.abs().max(1.0),
            };
            if better {
                best = Some((i, v));
            }
        }
    }
    best
}

/// Best binary split of `dataset` on variable `l`; `Ok(None)` when no
/// candidate is admissible.
pub fn best_split(
    dataset: &Dataset,
    l: usize,
    spec: &ModelSpec,
    opts: &FitOptions,
    limits: SplitLimits,
    fast: bool,
) -> Result<Option<SplitRule>, Error> {
    let var = &dataset.z_vars()[l];
    match var.levels() {
        Some(levels) => categorical_split(dataset, l, levels, spec, opts, limits),
        None => Ok(numeric_split(dataset, l, spec, opts, limits, fast)),
    }
}

fn numeric_split(
    dataset: &Dataset,
    l: usize,
    spec: &ModelSpec,
    opts: &FitOptions,
    limits: SplitLimits,
    fast: bool,
) -> Option<SplitRule> {
    let subjects = dataset.subjects();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.sort_by(|&a, &b| subjects[a].z[l].total_cmp(&subjects[b].z[l]));
    // Candidate j splits after position j (left = order[..=j]).
    let cands: Vec<usize> = (0..order.len().saturating_sub(1))
        .filter(|&j| subjects[order[j]].z[l] != subjects[order[j + 1]].z[l])
        .collect();
    let cut = |j: usize| 0.5 * (subjects[order[j]].z[l] + subjects[order[j + 1]].z[l]);

    let objectives: Vec<Option<f64>> = if spec.p() == 0 {
        let total = subject_counts(dataset, &order);
        let mut left = Counts::new(dataset.k_max());
        let mut next = 0;
        cands
            .iter()
            .map(|&j| {
                while next <= j {
                    let s = &subjects[order[next]];
                    left.add(s.time(), s.event());
                    next += 1;
                }
                let right = total.minus(&left);
                (left.admissible(limits) && right.admissible(limits)).then(|| left.loglik() + right.loglik())
            })
            .collect()
    } else {
        let eval = |j: usize| refit_objective(dataset, &order[..=j], &order[j + 1..], spec, opts, limits);
        if fast && cands.len() > FAST_GRID {
            fast_objectives(&cands, eval)
        } else {
            cands.par_iter().map(|&j| eval(j)).collect()
        }
    };
    let (i, objective) = argmax(objectives)?;
    Some(SplitRule {
        variable: dataset.z_vars()[l].name.clone(),
        variable_index: l,
        kind: SplitKind::Numeric {
            cutpoint: cut(cands[i]),
        },
        objective,
    })
}

/// Evaluates a quantile grid of candidates, then every candidate between the
/// grid neighbours of the best few grid points. Unevaluated candidates are `None`.
fn fast_objectives(cands: &[usize], eval: impl Fn(usize) -> Option<f64> + Sync) -> Vec<Option<f64>> {
    let m = cands.len();
    let mut grid: Vec<usize> = (0..FAST_GRID).map(|g| (g * (m - 1)) / (FAST_GRID - 1)).collect();
    grid.dedup();
    let coarse: Vec<Option<f64>> = grid.par_iter().map(|&i| eval(cands[i])).collect();
    let mut ranked: Vec<usize> = (0..grid.len()).filter(|&g| coarse[g].is_some()).collect();
    ranked.sort_by(|&a, &b| coarse[b].unwrap().total_cmp(&coarse[a].unwrap()).then(a.cmp(&b)));
    let mut out = vec![None; m];
    for (g, &i) in grid.iter().enumerate() {
        out[i] = coarse[g];
    }
    let mut todo: Vec<usize> = Vec::new();
    for &g in ranked.iter().take(FAST_REFINE) {
        let lo = if g == 0 { 0 } else { grid[g - 1] + 1 };
        let hi = grid.get(g + 1).map_or(m, |&i| i);
        todo.extend((lo..hi).filter(|&i| out[i].is_none() && !grid.contains(&i)));
    }
    todo.sort_unstable();
    todo.dedup();
    let refined: Vec<Option<f64>> = todo.par_iter().map(|&i| eval(cands[i])).collect();
    for (&i, v) in todo.iter().zip(refined) {
        out[i] = v;
    }
    out
}

fn categorical_split(
    dataset: &Dataset,
    l: usize,
    levels: &[String],
    spec: &ModelSpec,
    opts: &FitOptions,
    limits: SplitLimits,
) -> Result<Option<SplitRule>, Error> {
    let subjects = dataset.subjects();
    let mut present: Vec<usize> = subjects.iter().map(|s| s.z[l] as usize).collect();
    present.sort_unstable();
    present.dedup();
    let c = present.len();
    if c < 2 {
        return Ok(None);
    }
    if c > MAX_CATEGORIES {
        return Err(Error::Config(format!(
            "'{}' has {c} levels at this node; at most {MAX_CATEGORIES} can be searched",
            dataset.z_vars()[l].name
        )));
    }
    // Bit i of a mask puts present[i] on the left; the last level stays right.
    let masks: Vec<u32> = (1..(1u32 << (c - 1))).collect();
    let split = |mask: u32| -> (Vec<usize>, Vec<usize>) {
        (0..subjects.len()).partition(|&i| {
            let pos = present.binary_search(&(subjects[i].z[l] as usize)).unwrap();
            mask >> pos & 1 == 1
        })
    };
    let objectives: Vec<Option<f64>> = if spec.p() == 0 {
        masks
            .iter()
            .map(|&m| {
                let (left, right) = split(m);
                let (a, b) = (subject_counts(dataset, &left), subject_counts(dataset, &right));
                (a.admissible(limits) && b.admissible(limits)).then(|| a.loglik() + b.loglik())
            })
            .collect()
    } else {
        masks
            .par_iter()
            .map(|&m| {
                let (left, right) = split(m);
                refit_objective(dataset, &left, &right, spec, opts, limits)
            })
            .collect()
    };
    let Some((i, objective)) = argmax(objectives) else {
        return Ok(None);
    };
    let mask = masks[i];
    let (left, right): (Vec<usize>, Vec<usize>) = (0..c).partition(|&pos| mask >> pos & 1 == 1);
    let names = |idx: Vec<usize>| idx.into_iter().map(|p| levels[present[p]].clone()).collect();
    Ok(Some(SplitRule {
        variable: dataset.z_vars()[l].name.clone(),
        variable_index: l,
        kind: SplitKind::Categorical {
            left: names(left),
            right: names(right),
        },
        objective,
    }))
}
