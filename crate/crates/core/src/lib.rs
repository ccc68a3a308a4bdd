//! Model-based recursive partitioning for discrete time-to-event data.
//!
//! The crate covers the whole pipeline: person-period augmentation of
//! subject-level survival data ([`survival`]), discrete hazard models fitted
//! as binary GLMs ([`glm`]), score-based M-fluctuation instability tests
//! ([`fluctuation`]), their permutation-calibrated counterpart
//! ([`permutation`]), tree growth ([`tree`]) and the null-data simulation
//! harness used to measure the type I error of the splitting test
//! ([`simulation`]).
//!
//! Two flavours of the splitting test are available through
//! [`tree::Method`]: `Mob` uses asymptotic p-values for the fluctuation
//! statistics computed on the augmented rows, `MobDs` obtains the null
//! distribution by permuting subject-level outcomes against the
//! partitioning covariates and re-augmenting.

// `!(x > floor)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fluctuation;
pub mod glm;
pub mod instability;
pub mod linalg;
pub mod permutation;
pub mod rng;
pub mod simulation;
pub mod survival;
pub mod tree;

pub use error::{Error, Result};
pub use glm::{CovarianceEstimator, FittedHazardModel, Link, ModelSpec};
pub use survival::{AugmentedDataset, Dataset, LifeTable, SubjectRecord, ZKind, ZVariable};
pub use tree::{Method, MobConfig, MobTree};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
