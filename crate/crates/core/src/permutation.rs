//! Permutation null distributions of the instability statistics.
//!
//! The un-augmented `(t̃, δ, x)` triples are permuted against the `z`
//! vectors, re-augmented, refitted and re-tested. Because the permuted data
//! set contains exactly the same outcome triples, the refitted model has the
//! same `θ̂`, the same per-subject score sums and the same `Ĵ`: only the
//! pairing with `z` changes. [`NullStrategy::Reuse`] exploits this and
//! evaluates each permutation directly on the observed per-subject score
//! blocks; [`NullStrategy::Refit`] performs the literal
//! permute → augment → refit → test cycle and yields the same null.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, TestError};
use crate::fluctuation::SubjectBlocks;
use crate::glm::{self, FitOptions, FittedHazardModel};
use crate::instability::{InstabilityResult, NodeTests, PValueMethod};
use crate::rng;
use crate::survival::{augment, Dataset};

/// Retries per replicate after a failed refit.
pub const MAX_ATTEMPTS: u64 = 3;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.10;
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullStrategy {
    #[default]
    Reuse,
    Refit,
}

/// How a permutation p-value is formed from the null sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermPValue {
    /// `(1 + #{stat_b ≥ obs}) / (B + 1)`.
    #[default]
    AddOne,
    /// `(#{stat_b > obs} + U (1 + #{stat_b = obs})) / (B + 1)`, `U ~ U(0, 1)`:
    /// exactly uniform under the null, so it can reject at levels below
    /// `1 / (B + 1)`.
    Randomized,
}

impl std::str::FromStr for NullStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reuse" => Ok(Self::Reuse),
            "refit" => Ok(Self::Refit),
            _ => Err(format!("unknown null strategy '{s}' (reuse, refit)")),
        }
    }
}

impl std::str::FromStr for PermPValue {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "add-one" | "add_one" => Ok(Self::AddOne),
            "randomized" => Ok(Self::Randomized),
            _ => Err(format!("unknown permutation p-value '{s}' (add-one, randomized)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub n_perms: usize,
    pub base_seed: u64,
    /// Mixed into every replicate seed so different tree nodes draw
    /// independent permutations.
    pub node_id: u64,
    pub strategy: NullStrategy,
}

impl PermutationPlan {
    pub fn new(n_perms: usize, base_seed: u64) -> Self {
        Self {
            n_perms,
            base_seed,
            node_id: 0,
            strategy: NullStrategy::Reuse,
        }
    }

    fn seed(&self, b: usize, attempt: u64) -> u64 {
        if attempt == 0 {
            rng::derive_seed(self.base_seed, &[self.node_id, b as u64])
        } else {
            rng::derive_seed(self.base_seed, &[self.node_id, b as u64, attempt])
        }
    }
}

/// Per-variable sorted null statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermutationNull {
    pub statistics: Vec<Vec<f64>>,
    /// Replicates that needed more than one attempt or failed outright.
    pub retried: usize,
    pub failed: usize,
}

impl PermutationNull {
    pub fn n_perms(&self) -> usize {
        self.statistics.first().map_or(0, Vec::len)
    }
}

/// Uniformly random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, &[]));
    p
}

/// Applies `assign`: subject `i` keeps its id and `z` but takes the
/// `(t̃, δ, x)` of subject `assign[i]`.
pub fn apply_permutation(dataset: &Dataset, assign: &[usize]) -> Dataset {
    let src = dataset.subjects();
    let subjects = src
        .iter()
        .zip(assign)
        .map(|(s, &b)| {
            let mut out = s.clone();
            out.obs_time = src[b].obs_time;
            out.status = src[b].status;
            out.x = src[b].x.clone();
            out
        })
        .collect();
    dataset.with_subjects(subjects)
}

pub fn permute_once(dataset: &Dataset, seed: u64) -> Result<Dataset, DataError> {
    if dataset.len() < 2 {
        return Err(DataError::TooFewSubjects(dataset.len()));
    }
    Ok(apply_permutation(dataset, &permutation(dataset.len(), seed)))
}

/// Statistics of one literal permutation: augment, refit with the observed
/// design and warm start, and re-test.
fn refit_statistics(
    dataset: &Dataset,
    model: &FittedHazardModel,
    tests: &NodeTests,
    assign: &[usize],
    opts: &FitOptions,
) -> Option<Vec<Option<f64>>> {
    let permuted = apply_permutation(dataset, assign);
    let aug = augment(&permuted);
    let opts = FitOptions {
        warm_start: Some(model.theta.clone()),
        covariance: model.covariance.estimator,
        ..opts.clone()
    };
    let refit = glm::fit_with_design(&aug, model.design.clone(), &opts).ok()?;
    if !refit.converged {
        return None;
    }
    let inv = refit.covariance.inverse_sqrt().ok()?;
    let blocks = SubjectBlocks::from_scores(&refit.scores, inv, &aug.subject_offsets);
    let identity: Vec<usize> = (0..dataset.len()).collect();
    tests.with_blocks(blocks).statistics(&identity).ok()
}

fn collect(
    per_replicate: Vec<Option<Vec<Option<f64>>>>,
    q: usize,
    retried: usize,
) -> Result<PermutationNull, TestError> {
    let total = per_replicate.len();
    if total == 0 {
        return Err(TestError::EmptyNull);
    }
    let failed = per_replicate.iter().filter(|r| r.is_none()).count();
    if failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(TestError::PermutationFailures { failed, total });
    }
    let mut statistics = vec![Vec::with_capacity(total); q];
    for stats in per_replicate.into_iter().flatten() {
        for (l, s) in stats.into_iter().enumerate() {
            // A statistic that cannot be evaluated carries no evidence.
            statistics[l].push(s.unwrap_or(0.0));
        }
    }
    for v in &mut statistics {
        v.sort_by(f64::total_cmp);
    }
    Ok(PermutationNull {
        statistics,
        retried,
        failed,
    })
}

/// Null distribution for explicit assignments (one per replicate).
pub fn null_from_assignments(
    dataset: &Dataset,
    model: &FittedHazardModel,
    tests: &NodeTests,
    assignments: &[Vec<usize>],
    strategy: NullStrategy,
    opts: &FitOptions,
) -> Result<PermutationNull, TestError> {
    let per: Vec<Option<Vec<Option<f64>>>> = assignments
        .par_iter()
        .map(|a| match strategy {
            NullStrategy::Reuse => tests.statistics(a).ok(),
            NullStrategy::Refit => refit_statistics(dataset, model, tests, a, opts),
        })
        .collect();
    collect(per, tests.q(), 0)
}

pub fn null_distribution(
    dataset: &Dataset,
    model: &FittedHazardModel,
    tests: &NodeTests,
    plan: &PermutationPlan,
    opts: &FitOptions,
) -> Result<PermutationNull, TestError> {
    if plan.n_perms == 0 {
        return Err(TestError::EmptyNull);
    }
    let n = dataset.len();
    let per: Vec<(Option<Vec<Option<f64>>>, bool)> = (0..plan.n_perms)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..MAX_ATTEMPTS {
                let assign = permutation(n, plan.seed(b, attempt));
                let stats = match plan.strategy {
                    NullStrategy::Reuse => tests.statistics(&assign).ok(),
                    NullStrategy::Refit => refit_statistics(dataset, model, tests, &assign, opts),
                };
                if stats.is_some() {
                    return (stats, attempt > 0);
                }
            }
            (None, true)
        })
        .collect();
    let retried = per.iter().filter(|(_, r)| *r).count();
    collect(per.into_iter().map(|(s, _)| s).collect(), tests.q(), retried)
}

fn tolerance(observed: f64) -> f64 {
    TIE_TOLERANCE * observed.abs().max(1e-12)
}

/// Add-one permutation p-value against a sorted null.
pub fn perm_pvalue(observed: f64, null: &[f64]) -> f64 {
    let at_least = null.len() - null.partition_point(|&v| v < observed - tolerance(observed));
    (1 + at_least) as f64 / (null.len() + 1) as f64
}

/// Randomized permutation p-value with uniform draw `u`.
pub fn perm_pvalue_randomized(observed: f64, null: &[f64], u: f64) -> f64 {
    let tol = tolerance(observed);
    let lo = null.partition_point(|&v| v < observed - tol);
    let hi = null.partition_point(|&v| v <= observed + tol);
    let greater = null.len() - hi;
    let ties = hi - lo;
    (greater as f64 + u * (1 + ties) as f64) / (null.len() + 1) as f64
}

/// Permutation p-values for every variable at a node.
pub fn permutation_results(
    tests: &NodeTests,
    observed: &[Option<f64>],
    null: &PermutationNull,
    rule: PermPValue,
    plan: &PermutationPlan,
) -> Vec<InstabilityResult> {
    let mut u_rng = rng::stream(plan.base_seed, &[plan.node_id, u64::MAX]);
    let p: Vec<f64> = observed
        .iter()
        .zip(&null.statistics)
        .map(|(obs, nul)| {
            let u: f64 = u_rng.random();
            match obs {
                None => 1.0,
                Some(s) => match rule {
                    PermPValue::AddOne => perm_pvalue(*s, nul),
                    PermPValue::Randomized => perm_pvalue_randomized(*s, nul, u),
                },
            }
        })
        .collect();
    tests.results(observed, &p, PValueMethod::Permutation)
}
