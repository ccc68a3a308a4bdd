//! Per-node test battery: one fluctuation statistic per partitioning
//! variable, its p-value, and the Bonferroni adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{FitError, TestError};
use crate::fluctuation::{asymptotic_pvalue, AsymptoticKind, Ordering, SubjectBlocks, Trim};
use crate::glm::FittedHazardModel;
use crate::survival::{AugmentedDataset, Dataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Asymptotic,
    Permutation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityResult {
    pub variable: String,
    pub statistic: f64,
    pub p_value: f64,
    /// `min(1, q p)`.
    pub adjusted_p_value: f64,
    pub method: PValueMethod,
    /// Limiting law of the statistic (df for categorical, d and trim for supLM).
    pub reference: AsymptoticKind,
    /// `false` when the statistic could not be evaluated (no evaluation point
    /// inside the trimming window, or a single category at this node); such
    /// variables get p = 1.
    pub testable: bool,
}

/// Precomputed inputs for evaluating every variable's statistic at a node,
/// for the observed pairing of outcomes and `z` and for any permutation of it.
#[derive(Clone, Debug)]
pub struct NodeTests {
    blocks: SubjectBlocks,
    orderings: Vec<Ordering>,
    names: Vec<String>,
    trim: Trim,
}

impl NodeTests {
    pub fn new(
        model: &FittedHazardModel,
        aug: &AugmentedDataset,
        dataset: &Dataset,
        trim: Trim,
    ) -> Result<Self, FitError> {
        let inv = model.covariance.inverse_sqrt()?;
        Ok(Self::from_parts(
            SubjectBlocks::from_scores(&model.scores, inv, &aug.subject_offsets),
            dataset,
            trim,
        ))
    }

    pub(crate) fn from_parts(blocks: SubjectBlocks, dataset: &Dataset, trim: Trim) -> Self {
        let orderings = dataset
            .z_vars()
            .iter()
            .enumerate()
            .map(|(l, var)| {
                let values: Vec<f64> = dataset.subjects().iter().map(|s| s.z[l]).collect();
                match var.levels() {
                    Some(levels) => Ordering::categorical(&values, levels.len()),
                    None => Ordering::numeric(&values),
                }
            })
            .collect();
        Self {
            blocks,
            orderings,
            names: dataset.z_vars().iter().map(|v| v.name.clone()).collect(),
            trim,
        }
    }

    pub fn q(&self) -> usize {
        self.orderings.len()
    }

    pub fn d(&self) -> usize {
        self.blocks.d()
    }

    pub fn n_subjects(&self) -> usize {
        self.blocks.n_subjects()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn trim(&self) -> Trim {
        self.trim
    }

    pub(crate) fn with_blocks(&self, blocks: SubjectBlocks) -> Self {
        Self { blocks, ..self.clone() }
    }

    /// Statistics when subject `i` carries the outcome of subject `assign[i]`;
    /// `None` for variables that cannot be evaluated.
    pub fn statistics(&self, assign: &[usize]) -> Result<Vec<Option<f64>>, TestError> {
        self.orderings
            .iter()
            .map(|o| Ok(self.blocks.statistic(o, assign, self.trim)?.map(|(s, _)| s)))
            .collect()
    }

    pub fn observed(&self) -> Result<Vec<Option<f64>>, TestError> {
        let identity: Vec<usize> = (0..self.n_subjects()).collect();
        self.statistics(&identity)
    }

    /// Limiting law for variable `l`.
    pub fn reference(&self, l: usize) -> AsymptoticKind {
        let d = self.d();
        match &self.orderings[l] {
            Ordering::Numeric { .. } => AsymptoticKind::SupLm { d, trim: self.trim },
            Ordering::Categorical { codes, .. } => {
                let mut seen: Vec<u32> = codes.clone();
                seen.sort_unstable();
                seen.dedup();
                AsymptoticKind::ChiSquare {
                    df: d * seen.len().saturating_sub(1),
                }
            }
        }
    }

    /// Assembles results from observed statistics and raw p-values.
    pub fn results(&self, observed: &[Option<f64>], p_values: &[f64], method: PValueMethod) -> Vec<InstabilityResult> {
        let q = self.q();
        observed
            .iter()
            .zip(p_values)
            .enumerate()
            .map(|(l, (obs, &p))| InstabilityResult {
                variable: self.names[l].clone(),
                statistic: obs.unwrap_or(0.0),
                p_value: p,
                adjusted_p_value: bonferroni(p, q),
                method,
                reference: self.reference(l),
                testable: obs.is_some(),
            })
            .collect()
    }

    pub fn asymptotic(&self) -> Result<Vec<InstabilityResult>, TestError> {
        let observed = self.observed()?;
        let p: Vec<f64> = observed
            .iter()
            .enumerate()
            .map(|(l, obs)| match obs {
                Some(s) => asymptotic_pvalue(*s, self.reference(l)),
                None => Ok(1.0),
            })
            .collect::<Result<_, _>>()?;
        Ok(self.results(&observed, &p, PValueMethod::Asymptotic))
    }
}

pub fn bonferroni(p: f64, q: usize) -> f64 {
    (p * q as f64).min(1.0)
}

/// Index of the variable with the smallest raw p-value if its adjusted
/// p-value is below `alpha`; ties go to the first variable.
pub fn select_variable(results: &[InstabilityResult], alpha: f64) -> Option<usize> {
    let q = results.len();
    let mut best: Option<usize> = None;
    for (l, r) in results.iter().enumerate() {
        if !r.testable {
            continue;
        }
        if best.is_none_or(|b| r.p_value < results[b].p_value) {
            best = Some(l);
        }
    }
    best.filter(|&l| bonferroni(results[l].p_value, q) < alpha)
}
