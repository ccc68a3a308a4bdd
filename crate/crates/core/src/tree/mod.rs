//! Recursive partitioning: fit a discrete hazard model at a node, test every
//! partitioning variable for parameter instability, split on the most
//! significant one (Bonferroni-adjusted) and recurse.

mod output;
mod split;

pub use output::Prediction;
pub use split::{best_split, SplitKind, SplitLimits, SplitRule, MAX_CATEGORIES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FitError};
use crate::fluctuation::Trim;
use crate::glm::{
    fit, CovarianceEstimator, FitOptions, FittedHazardModel, HazardDesign, Link, ModelSpec, ModelSummary,
};
use crate::instability::{select_variable, InstabilityResult, NodeTests};
use crate::permutation::{null_distribution, permutation_results, NullStrategy, PermPValue, PermutationPlan};
use crate::survival::{augment, life_table, AugmentedDataset, Dataset, LifeTableRow, ZVariable};

/// Source of the instability p-values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Asymptotic p-values.
    Mob,
    /// Permutation p-values from permuting subject-level outcomes.
    #[default]
    MobDs,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mob => "mob",
            Method::MobDs => "mob-ds",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mob" => Ok(Method::Mob),
            "mob-ds" | "mob_ds" | "mobds" => Ok(Method::MobDs),
            _ => Err(format!("unknown method '{s}' (mob, mob-ds)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MobConfig {
    pub alpha: f64,
    pub method: Method,
    pub n_perms: usize,
    /// Root has depth 1, so `max_depth = 1` never splits.
    pub max_depth: usize,
    pub min_subjects: usize,
    /// Defaults to `2 (K − 1) + 2 p`.
    pub min_events: Option<usize>,
    pub link: Link,
    pub trim: Trim,
    pub covariance: CovarianceEstimator,
    pub null_strategy: NullStrategy,
    pub perm_pvalue: PermPValue,
    /// Coarse-grid split search for models with x covariates.
    pub fast_split: bool,
    pub seed: u64,
}

impl Default for MobConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            method: Method::MobDs,
            n_perms: 1000,
            max_depth: 4,
            min_subjects: 20,
            min_events: None,
            link: Link::Logit,
            trim: Trim::default(),
            covariance: CovarianceEstimator::Sandwich,
            null_strategy: NullStrategy::Reuse,
            perm_pvalue: PermPValue::AddOne,
            fast_split: false,
            seed: 0,
        }
    }
}

impl MobConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        if self.method == Method::MobDs && self.n_perms < 1 {
            return Err(Error::Config("n_perms must be at least 1".into()));
        }
        Trim::new(self.trim.low, self.trim.high)?;
        Ok(())
    }

    pub fn resolved_min_events(&self, k_max: u32, p: usize) -> usize {
        self.min_events
            .unwrap_or(2 * (k_max as usize).saturating_sub(1) + 2 * p)
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            covariance: self.covariance,
            ..FitOptions::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// No adjusted p-value below alpha.
    Significance,
    Depth,
    /// Too few subjects or events to split, or no admissible split.
    Size,
    FitFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobNode {
    pub id: usize,
    pub depth: usize,
    pub n_subjects: usize,
    pub n_events: usize,
    pub n_rows: usize,
    pub subjects: Vec<i64>,
    pub tests: Vec<InstabilityResult>,
    pub selected: Option<String>,
    pub split: Option<SplitRule>,
    /// Node ids of the left and right child.
    pub children: Option<[usize; 2]>,
    pub model: ModelSummary,
    pub design: HazardDesign,
    pub life_table: Vec<LifeTableRow>,
    pub stop_reason: Option<StopReason>,
}

impl MobNode {
    pub fn is_terminal(&self) -> bool {
        self.split.is_none()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.model.coefficients.iter().map(|(_, v)| *v).collect()
    }
}

/// A grown tree; nodes are stored in preorder and the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobTree {
    pub version: String,
    pub config: MobConfig,
    pub min_events: usize,
    pub k_max: u32,
    pub x_names: Vec<String>,
    pub z_vars: Vec<ZVariable>,
    pub spec: ModelSpec,
    pub nodes: Vec<MobNode>,
}

impl MobTree {
    pub fn root(&self) -> &MobNode {
        &self.nodes[0]
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn terminals(&self) -> impl Iterator<Item = &MobNode> {
        self.nodes.iter().filter(|n| n.is_terminal())
    }

    pub fn num_terminals(&self) -> usize {
        self.terminals().count()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

/// Instability tests at one node with the configured p-value method.
pub fn node_tests(
    dataset: &Dataset,
    aug: &AugmentedDataset,
    model: &FittedHazardModel,
    config: &MobConfig,
    node_id: usize,
) -> Result<Vec<InstabilityResult>, Error> {
    let tests = NodeTests::new(model, aug, dataset, config.trim)?;
    match config.method {
        Method::Mob => Ok(tests.asymptotic()?),
        Method::MobDs => {
            let plan = PermutationPlan {
                n_perms: config.n_perms,
                base_seed: config.seed,
                node_id: node_id as u64,
                strategy: config.null_strategy,
            };
            let observed = tests.observed()?;
            let null = null_distribution(dataset, model, &tests, &plan, &config.fit_options())?;
            Ok(permutation_results(&tests, &observed, &null, config.perm_pvalue, &plan))
        }
    }
}

struct Grower<'a> {
    spec: &'a ModelSpec,
    config: &'a MobConfig,
    limits: SplitLimits,
    opts: FitOptions,
    nodes: Vec<MobNode>,
}

fn fit_node(
    dataset: &Dataset,
    spec: &ModelSpec,
    opts: &FitOptions,
) -> Result<(AugmentedDataset, FittedHazardModel), FitError> {
    let aug = augment(dataset);
    let model = fit(&aug, spec, opts)?;
    if !model.converged {
        return Err(FitError::NotConverged {
            iterations: model.iterations,
            last_change: f64::NAN,
        });
    }
    Ok((aug, model))
}

impl Grower<'_> {
    fn grow(
        &mut self,
        dataset: Dataset,
        aug: AugmentedDataset,
        model: FittedHazardModel,
        depth: usize,
    ) -> Result<usize, Error> {
        let id = self.nodes.len();
        let config = self.config;
        let (tests, mut stop) = if model.dim() == 0 {
            // Every hazard pinned: no parameter whose stability could be tested.
            (Vec::new(), Some(StopReason::Size))
        } else {
            match node_tests(&dataset, &aug, &model, config, id) {
                Ok(t) => (t, None),
                Err(e) if id == 0 => return Err(e),
                Err(e) => {
                    log::warn!("node {id}: instability tests failed: {e}");
                    (Vec::new(), Some(StopReason::FitFailure))
                }
            }
        };
        let selected = if stop.is_none() {
            select_variable(&tests, config.alpha)
        } else {
            None
        };
        let events = dataset.events();
        let mut split = None;
        let mut children_data = None;
        if stop.is_none() {
            stop = if depth >= config.max_depth {
                Some(StopReason::Depth)
            } else if dataset.len() < 2 * self.limits.min_subjects || events < 2 * self.limits.min_events {
                Some(StopReason::Size)
            } else if selected.is_none() {
                Some(StopReason::Significance)
            } else {
                None
            };
        }
        if stop.is_none() {
            let l = selected.unwrap();
            match best_split(&dataset, l, self.spec, &self.opts, self.limits, config.fast_split)? {
                None => stop = Some(StopReason::Size),
                Some(rule) => {
                    let var = &dataset.z_vars()[l];
                    let (left, right): (Vec<usize>, Vec<usize>) = (0..dataset.len())
                        .partition(|&i| rule.goes_left(var, dataset.subjects()[i].z[l]) == Some(true));
                    let fitted = [left, right].map(|idx| {
                        let part = dataset.subset(&idx);
                        fit_node(&part, self.spec, &self.opts).map(|(a, m)| (part, a, m))
                    });
                    match fitted {
                        [Ok(a), Ok(b)] => {
                            split = Some(rule);
                            children_data = Some((a, b));
                        }
                        [a, b] => {
                            let e = a.err().or(b.err()).unwrap();
                            log::warn!("node {id}: child fit failed: {e}");
                            stop = Some(StopReason::FitFailure);
                        }
                    }
                }
            }
        }
        self.nodes.push(MobNode {
            id,
            depth,
            n_subjects: dataset.len(),
            n_events: events,
            n_rows: aug.n(),
            subjects: dataset.subjects().iter().map(|s| s.id).collect(),
            tests,
            selected: selected.map(|l| dataset.z_vars()[l].name.clone()),
            split,
            children: None,
            model: model.summary(),
            design: model.design.clone(),
            life_table: life_table(&dataset).rows,
            stop_reason: stop,
        });
        if let Some(((ld, la, lm), (rd, ra, rm))) = children_data {
            drop((dataset, aug, model));
            let left = self.grow(ld, la, lm, depth + 1)?;
            let right = self.grow(rd, ra, rm, depth + 1)?;
            self.nodes[id].children = Some([left, right]);
        }
        Ok(id)
    }
}

/// Grows a tree. A root fit failure is an error; a failing child fit makes
/// its parent terminal.
pub fn grow(dataset: &Dataset, spec: &ModelSpec, config: &MobConfig) -> Result<MobTree, Error> {
    config.validate()?;
    let spec = ModelSpec {
        link: config.link,
        ..spec.clone()
    };
    let min_events = config.resolved_min_events(dataset.k_max(), spec.p());
    let mut grower = Grower {
        spec: &spec,
        config,
        limits: SplitLimits {
            min_subjects: config.min_subjects,
            min_events,
        },
        opts: config.fit_options(),
        nodes: Vec::new(),
    };
    let (aug, model) = fit_node(dataset, &spec, &grower.opts)?;
    grower.grow(dataset.clone(), aug, model, 1)?;
    let nodes = grower.nodes;
    Ok(MobTree {
        version: crate::VERSION.to_string(),
        config: config.clone(),
        min_events,
        k_max: dataset.k_max(),
        x_names: dataset.x_names().to_vec(),
        z_vars: dataset.z_vars().to_vec(),
        spec,
        nodes,
    })
}
