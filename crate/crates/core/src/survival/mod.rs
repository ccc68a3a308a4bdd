//! Subject-level discrete survival data, person-period augmentation and the
//! nonparametric life table.

mod augment;
pub mod io;
mod life_table;

pub use augment::{augment, AugmentedDataset, AugmentedRow};
pub use life_table::{life_table, LifeTable, LifeTableRow};

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Kind of a partitioning variable. Categorical values are stored as level
/// codes `0..levels.len()` in input order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZKind {
    Numeric,
    Categorical { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZVariable {
    pub name: String,
    #[serde(flatten)]
    pub kind: ZKind,
}

impl ZVariable {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ZKind::Numeric,
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: ZKind::Categorical { levels },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, ZKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.kind {
            ZKind::Categorical { levels } => Some(levels),
            ZKind::Numeric => None,
        }
    }
}

/// One subject: observed discrete time `min(T, C)`, event indicator, model
/// covariates `x` and partitioning covariates `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectRecord {
    pub id: i64,
    pub obs_time: i64,
    pub status: i64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(id: i64, obs_time: i64, status: i64, x: Vec<f64>, z: Vec<f64>) -> Self {
        Self {
            id,
            obs_time,
            status,
            x,
            z,
        }
    }

    /// Observed time as an index; valid after validation.
    #[inline]
    pub fn time(&self) -> u32 {
        self.obs_time as u32
    }

    #[inline]
    pub fn event(&self) -> bool {
        self.status == 1
    }
}

/// A validated collection of subjects on the grid `1..=k_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    subjects: Vec<SubjectRecord>,
    k_max: u32,
    x_names: Vec<String>,
    z_vars: Vec<ZVariable>,
}

impl Dataset {
    /// Validates the subjects; `k_max` defaults to the largest observed time.
    pub fn new(
        subjects: Vec<SubjectRecord>,
        x_names: Vec<String>,
        z_vars: Vec<ZVariable>,
        k_max: Option<u32>,
    ) -> Result<Self, DataError> {
        validate(subjects, x_names, z_vars, k_max)
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn k_max(&self) -> u32 {
        self.k_max
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_vars(&self) -> &[ZVariable] {
        &self.z_vars
    }

    pub fn p(&self) -> usize {
        self.x_names.len()
    }

    pub fn q(&self) -> usize {
        self.z_vars.len()
    }

    pub fn events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event()).count()
    }

    /// Number of person-period rows the dataset augments to.
    pub fn augmented_len(&self) -> usize {
        self.subjects.iter().map(|s| s.time() as usize).sum()
    }

    /// Subset by subject index, keeping `k_max` and the schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            k_max: self.k_max,
            x_names: self.x_names.clone(),
            z_vars: self.z_vars.clone(),
        }
    }

    /// Replaces the subjects without re-validating; callers guarantee the
    /// records came from a validated dataset with the same schema.
    pub(crate) fn with_subjects(&self, subjects: Vec<SubjectRecord>) -> Dataset {
        Dataset {
            subjects,
            k_max: self.k_max,
            x_names: self.x_names.clone(),
            z_vars: self.z_vars.clone(),
        }
    }

    /// Caps every observed time at `from_time`, merging the tail intervals
    /// into one category. Status is preserved.
    pub fn collapse_tail(&self, from_time: u32) -> Result<Dataset, DataError> {
        collapse_tail(self, from_time)
    }
}

/// Checks the dataset invariants and infers `k_max` when it is not given.
pub fn validate(
    subjects: Vec<SubjectRecord>,
    x_names: Vec<String>,
    z_vars: Vec<ZVariable>,
    k_max: Option<u32>,
) -> Result<Dataset, DataError> {
    if subjects.is_empty() {
        return Err(DataError::Empty);
    }
    let (p, q) = (x_names.len(), z_vars.len());
    let mut max_time = 0i64;
    for s in &subjects {
        if s.obs_time < 1 {
            return Err(DataError::NonPositiveTime {
                id: s.id,
                time: s.obs_time,
            });
        }
        if s.status != 0 && s.status != 1 {
            return Err(DataError::InvalidStatus {
                id: s.id,
                status: s.status,
            });
        }
        if s.x.len() != p {
            return Err(DataError::RaggedCovariates {
                id: s.id,
                what: "x",
                expected: p,
                found: s.x.len(),
            });
        }
        if s.z.len() != q {
            return Err(DataError::RaggedCovariates {
                id: s.id,
                what: "z",
                expected: q,
                found: s.z.len(),
            });
        }
        for (v, name) in s.x.iter().zip(&x_names) {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    id: s.id,
                    column: name.clone(),
                });
            }
        }
        for (v, var) in s.z.iter().zip(&z_vars) {
            if !v.is_finite() {
                return Err(DataError::NonFinite {
                    id: s.id,
                    column: var.name.clone(),
                });
            }
            if let Some(levels) = var.levels() {
                if v.fract() != 0.0 || *v < 0.0 || *v >= levels.len() as f64 {
                    return Err(DataError::UnknownLevel {
                        id: s.id,
                        column: var.name.clone(),
                        value: *v,
                    });
                }
            }
        }
        max_time = max_time.max(s.obs_time);
    }
    let k_max = match k_max {
        Some(k) => {
            if let Some(s) = subjects.iter().find(|s| s.obs_time > k as i64) {
                return Err(DataError::TimeBeyondKmax {
                    id: s.id,
                    time: s.obs_time,
                    k_max: k,
                });
            }
            k
        }
        None => max_time as u32,
    };
    Ok(Dataset {
        subjects,
        k_max,
        x_names,
        z_vars,
    })
}

pub fn collapse_tail(dataset: &Dataset, from_time: u32) -> Result<Dataset, DataError> {
    if from_time <= 1 || from_time > dataset.k_max {
        return Err(DataError::CollapseOutOfRange {
            from: from_time,
            k_max: dataset.k_max,
        });
    }
    let subjects = dataset
        .subjects
        .iter()
        .map(|s| SubjectRecord {
            obs_time: s.obs_time.min(from_time as i64),
            ..s.clone()
        })
        .collect();
    Ok(Dataset {
        subjects,
        k_max: from_time,
        x_names: dataset.x_names.clone(),
        z_vars: dataset.z_vars.clone(),
    })
}
