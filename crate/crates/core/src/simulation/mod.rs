//! Monte Carlo type I error study on null discrete-survival data: baseline
//! hazards independent of all partitioning covariates, so any root split is
//! a false positive.

mod generate;

pub use generate::{
    calibrate_censoring, censoring_fraction, gen_censoring, gen_covariates, gen_survival, shape_to_gamma,
    BaselineSchedule, Shape,
};

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fluctuation::{ReferenceStore, Trim};
use crate::glm::{fit, FitOptions, Link, ModelSpec};
use crate::instability::{select_variable, NodeTests};
use crate::permutation::{null_distribution, permutation_results, PermPValue, PermutationPlan};
use crate::rng;
use crate::survival::{augment, Dataset, SubjectRecord, ZVariable};
use crate::tree::Method;

/// Largest tolerated fraction of failed replications.
pub const MAX_REPLICATION_FAILURES: f64 = 0.01;
/// Variables whose statistic distributions are reported as tail curves.
pub const TAIL_VARIABLES: usize = 3;
const TAIL_POINTS: usize = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k: u32,
    pub shape: Shape,
    pub event_rate: f64,
    /// Target fraction of censored subjects.
    pub censoring: f64,
    pub rho: f64,
    pub q: usize,
    /// Subjects per data set; defaults to `100 (K − 1)`.
    pub n: Option<usize>,
    pub reps: usize,
    pub perms: usize,
    pub alpha: f64,
    pub seed: u64,
    pub link: Link,
    pub trim: Trim,
    pub perm_pvalue: PermPValue,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            k: 4,
            shape: Shape::A,
            event_rate: 0.6,
            censoring: 0.2,
            rho: 0.1,
            q: 13,
            n: None,
            reps: 500,
            perms: 200,
            alpha: 0.05,
            seed: 1,
            link: Link::Logit,
            trim: Trim::default(),
            perm_pvalue: PermPValue::Randomized,
        }
    }
}

impl Scenario {
    pub fn n_subjects(&self) -> usize {
        self.n.unwrap_or(100 * (self.k as usize - 1))
    }

    pub fn label(&self) -> String {
        format!(
            "K{}-{}-e{}-c{}-r{}",
            self.k, self.shape, self.event_rate, self.censoring, self.rho
        )
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(2..=64).contains(&self.k) {
            return Err(Error::Config(format!("K = {} outside 2..=64", self.k)));
        }
        if self.reps == 0 || self.q == 0 {
            return Err(Error::Config("reps and q must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.censoring) {
            return Err(Error::Config(format!(
                "censoring target must lie in [0, 1), got {}",
                self.censoring
            )));
        }
        Trim::new(self.trim.low, self.trim.high)?;
        Ok(())
    }

    /// One simulated null data set.
    pub fn generate(&self, schedule: &BaselineSchedule, censor_rate: f64, seed: u64) -> Result<Dataset, Error> {
        let n = self.n_subjects();
        let z = gen_covariates(n, self.q, self.rho, rng::derive_seed(seed, &[1]))?;
        let t = gen_survival(n, schedule, rng::derive_seed(seed, &[2]));
        let c = gen_censoring(n, censor_rate, self.k, rng::derive_seed(seed, &[3]));
        let subjects = (0..n)
            .map(|i| {
                let time = t[i].min(c[i]);
                SubjectRecord::new(
                    i as i64 + 1,
                    time as i64,
                    (t[i] <= c[i]) as i64,
                    Vec::new(),
                    z[i].clone(),
                )
            })
            .collect();
        let z_vars = (1..=self.q).map(|l| ZVariable::numeric(format!("z{l}"))).collect();
        Ok(Dataset::new(subjects, Vec::new(), z_vars, Some(self.k))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub rejections: usize,
    /// Successful replications.
    pub replications: usize,
    pub rate: f64,
    /// `sqrt(rate (1 − rate) / replications)`.
    pub se: f64,
}

/// Empirical right-tail probabilities `P(stat ≥ threshold)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub variable: String,
    pub threshold: f64,
    /// Limiting supLM law.
    pub asymptotic: f64,
    /// Pooled permutation statistics (when permutation tests ran).
    pub permutation: Option<f64>,
    /// Observed statistics across replications.
    pub observed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub censor_rate: f64,
    pub failures: usize,
    pub realized_censoring: f64,
    pub realized_event_rate: f64,
    pub results: Vec<MethodResult>,
    pub tails: Vec<TailRow>,
}

impl ScenarioReport {
    pub fn rate(&self, method: Method) -> Option<f64> {
        self.results.iter().find(|r| r.method == method).map(|r| r.rate)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub scenarios: Vec<ScenarioReport>,
}

struct Replication {
    rejects: Vec<bool>,
    censored: usize,
    events: usize,
    observed: Vec<Option<f64>>,
    nulls: Vec<Vec<f64>>,
}

fn replicate(
    scenario: &Scenario,
    schedule: &BaselineSchedule,
    censor_rate: f64,
    methods: &[Method],
    r: usize,
) -> Result<Replication, Error> {
    let seed = rng::derive_seed(scenario.seed, &[r as u64]);
    let data = scenario.generate(schedule, censor_rate, seed)?;
    let aug = augment(&data);
    let spec = ModelSpec::intercept_only(scenario.link);
    let model = fit(&aug, &spec, &FitOptions::default())?;
    let tests = NodeTests::new(&model, &aug, &data, scenario.trim)?;
    let observed = tests.observed()?;
    let tail_vars = TAIL_VARIABLES.min(scenario.q);
    let mut rejects = Vec::with_capacity(methods.len());
    let mut nulls = Vec::new();
    for &m in methods {
        let results = match m {
            Method::Mob => tests.asymptotic()?,
            Method::MobDs => {
                let plan = PermutationPlan::new(scenario.perms, rng::derive_seed(seed, &[4]));
                let null = null_distribution(&data, &model, &tests, &plan, &FitOptions::default())?;
                nulls = null.statistics[..tail_vars].to_vec();
                permutation_results(&tests, &observed, &null, scenario.perm_pvalue, &plan)
            }
        };
        rejects.push(select_variable(&results, scenario.alpha).is_some());
    }
    let censored = data.subjects().iter().filter(|s| !s.event()).count();
    let events = data
        .subjects()
        .iter()
        .filter(|s| s.event() && s.time() < scenario.k)
        .count();
    Ok(Replication {
        rejects,
        censored,
        events,
        observed: observed[..tail_vars].to_vec(),
        nulls,
    })
}

fn tail(sorted: &[f64], c: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    (sorted.len() - sorted.partition_point(|&v| v < c)) as f64 / sorted.len() as f64
}

/// Runs every replication of a scenario for the given methods. Results do
/// not depend on the number of worker threads.
pub fn run_scenario(scenario: &Scenario, methods: &[Method]) -> Result<ScenarioReport, Error> {
    scenario.validate()?;
    let schedule = shape_to_gamma(scenario.k, scenario.event_rate, scenario.shape)?;
    let censor_rate = calibrate_censoring(scenario.censoring, &schedule)?;
    // Load the limiting-law table before the parallel loop.
    let reference = ReferenceStore::global().get(scenario.k as usize - 1, scenario.trim)?;

    let reps: Vec<Result<Replication, Error>> = (0..scenario.reps)
        .into_par_iter()
        .map(|r| replicate(scenario, &schedule, censor_rate, methods, r))
        .collect();
    let mut ok = Vec::with_capacity(reps.len());
    let mut failures = 0;
    for (r, rep) in reps.into_iter().enumerate() {
        match rep {
            Ok(rep) => ok.push(rep),
            Err(e) => {
                log::warn!("{} replication {r} failed: {e}", scenario.label());
                failures += 1;
            }
        }
    }
    if failures as f64 > MAX_REPLICATION_FAILURES * scenario.reps as f64 || ok.is_empty() {
        return Err(Error::Config(format!(
            "{}: {failures} of {} replications failed",
            scenario.label(),
            scenario.reps
        )));
    }

    let results = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let rejections = ok.iter().filter(|r| r.rejects[i]).count();
            let replications = ok.len();
            let rate = rejections as f64 / replications as f64;
            MethodResult {
                method,
                rejections,
                replications,
                rate,
                se: (rate * (1.0 - rate) / replications as f64).sqrt(),
            }
        })
        .collect();

    let subjects = (ok.len() * scenario.n_subjects()) as f64;
    let realized_censoring = ok.iter().map(|r| r.censored).sum::<usize>() as f64 / subjects;
    let realized_event_rate = ok.iter().map(|r| r.events).sum::<usize>() as f64 / subjects;

    let top = reference.quantile(0.999);
    let has_perm = methods.contains(&Method::MobDs);
    let mut tails = Vec::new();
    for l in 0..TAIL_VARIABLES.min(scenario.q) {
        let mut obs: Vec<f64> = ok.iter().filter_map(|r| r.observed[l]).collect();
        obs.sort_by(f64::total_cmp);
        let mut pooled: Vec<f64> = ok
            .iter()
            .flat_map(|r| r.nulls.get(l).into_iter().flatten().copied())
            .collect();
        pooled.sort_by(f64::total_cmp);
        for i in 0..=TAIL_POINTS {
            let c = top * i as f64 / TAIL_POINTS as f64;
            tails.push(TailRow {
                variable: format!("z{}", l + 1),
                threshold: c,
                asymptotic: tail(reference.values(), c),
                permutation: has_perm.then(|| tail(&pooled, c)),
                observed: tail(&obs, c),
            });
        }
    }

    Ok(ScenarioReport {
        scenario: scenario.clone(),
        censor_rate,
        failures,
        realized_censoring,
        realized_event_rate,
        results,
        tails,
    })
}

/// A scalar or a list in a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// Scenario grid file. Every key may be a scalar or a list; the grid is the
/// Cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub k: OneOrMany<u32>,
    pub shape: OneOrMany<Shape>,
    pub event_rate: OneOrMany<f64>,
    #[serde(default = "default_censoring")]
    pub censoring: OneOrMany<f64>,
    #[serde(default = "default_rho")]
    pub rho: OneOrMany<f64>,
    #[serde(default)]
    pub reps: Option<usize>,
    #[serde(default)]
    pub perms: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub methods: Option<Vec<Method>>,
    #[serde(default)]
    pub perm_pvalue: Option<PermPValue>,
    #[serde(default)]
    pub trim: Option<[f64; 2]>,
}

fn default_censoring() -> OneOrMany<f64> {
    OneOrMany::One(0.2)
}

fn default_rho() -> OneOrMany<f64> {
    OneOrMany::One(0.1)
}

impl GridConfig {
    pub fn from_toml(s: &str) -> Result<Self, Error> {
        toml::from_str(s).map_err(|e| Error::Config(format!("scenario grid: {e}")))
    }

    pub fn methods(&self) -> Vec<Method> {
        self.methods.clone().unwrap_or_else(|| vec![Method::Mob, Method::MobDs])
    }

    /// Expands the grid. Each cell's seed is derived from the grid seed and
    /// the cell label, so adding cells does not change existing ones.
    pub fn scenarios(&self) -> Result<Vec<Scenario>, Error> {
        let base = Scenario::default();
        let trim = match self.trim {
            Some([lo, hi]) => Trim::new(lo, hi)?,
            None => base.trim,
        };
        let grid_seed = self.seed.unwrap_or(base.seed);
        let mut out = Vec::new();
        for k in self.k.values() {
            for shape in self.shape.values() {
                for event_rate in self.event_rate.values() {
                    for censoring in self.censoring.values() {
                        for rho in self.rho.values() {
                            let mut s = Scenario {
                                k,
                                shape,
                                event_rate,
                                censoring,
                                rho,
                                q: self.q.unwrap_or(base.q),
                                n: self.n,
                                reps: self.reps.unwrap_or(base.reps),
                                perms: self.perms.unwrap_or(base.perms),
                                alpha: self.alpha.unwrap_or(base.alpha),
                                seed: 0,
                                link: base.link,
                                trim,
                                perm_pvalue: self.perm_pvalue.unwrap_or(base.perm_pvalue),
                            };
                            s.seed = rng::derive_seed(grid_seed, &[rng::label_seed(&s.label())]);
                            s.validate()?;
                            out.push(s);
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Named grids shipped with the crate.
pub fn presets() -> BTreeMap<&'static str, GridConfig> {
    let many = |v: &[f64]| OneOrMany::Many(v.to_vec());
    let grid = |k: Vec<u32>, rates: &[f64], cens: &[f64], reps, perms, pv| GridConfig {
        k: OneOrMany::Many(k),
        shape: OneOrMany::Many(Shape::ALL.to_vec()),
        event_rate: many(rates),
        censoring: many(cens),
        rho: OneOrMany::One(0.1),
        reps: Some(reps),
        perms: Some(perms),
        alpha: Some(0.05),
        seed: None,
        q: Some(13),
        n: None,
        methods: Some(vec![Method::Mob, Method::MobDs]),
        perm_pvalue: Some(pv),
        trim: None,
    };
    let mut m = BTreeMap::new();
    m.insert(
        "desk-typeI",
        grid(vec![4, 8, 11], &[0.4, 0.2], &[0.2], 500, 200, PermPValue::Randomized),
    );
    m.insert(
        "desk-inflation",
        grid(vec![11], &[0.2], &[0.0], 500, 200, PermPValue::Randomized),
    );
    m.insert(
        "desk-tails",
        grid(vec![8], &[0.2], &[0.2], 500, 200, PermPValue::Randomized),
    );
    m.insert(
        "full-typeI",
        grid(
            (4..=11).collect(),
            &[0.8, 0.6, 0.4],
            &[0.2],
            2000,
            1000,
            PermPValue::AddOne,
        ),
    );
    m.insert(
        "full-low-events",
        grid(
            (4..=11).collect(),
            &[0.2],
            &[0.0, 0.2, 0.5],
            2000,
            1000,
            PermPValue::AddOne,
        ),
    );
    m.insert("smoke", grid(vec![4], &[0.6], &[0.2], 20, 50, PermPValue::Randomized));
    m
}

/// Runs every scenario of a grid in order.
pub fn run_grid(scenarios: &[Scenario], methods: &[Method]) -> Result<SimulationReport, Error> {
    let mut report = SimulationReport::default();
    for s in scenarios {
        log::info!("running {} ({} replications)", s.label(), s.reps);
        report.scenarios.push(run_scenario(s, methods)?);
    }
    Ok(report)
}

impl SimulationReport {
    /// One row per scenario and method.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), Error> {
        writeln!(
            w,
            "scenario,k,shape,event_rate,censoring,rho,n,q,reps,perms,alpha,method,rejections,replications,failures,rate,se,realized_censoring,realized_event_rate"
        )?;
        for r in &self.scenarios {
            let s = &r.scenario;
            for m in &r.results {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    s.label(),
                    s.k,
                    s.shape,
                    s.event_rate,
                    s.censoring,
                    s.rho,
                    s.n_subjects(),
                    s.q,
                    s.reps,
                    s.perms,
                    s.alpha,
                    m.method,
                    m.rejections,
                    m.replications,
                    r.failures,
                    m.rate,
                    m.se,
                    r.realized_censoring,
                    r.realized_event_rate
                )?;
            }
        }
        Ok(())
    }

    pub fn write_tails_csv<W: Write>(&self, mut w: W) -> Result<(), Error> {
        writeln!(w, "scenario,variable,threshold,asymptotic,permutation,observed")?;
        for r in &self.scenarios {
            for t in &r.tails {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.scenario.label(),
                    t.variable,
                    t.threshold,
                    t.asymptotic,
                    t.permutation.map_or(String::new(), |v| v.to_string()),
                    t.observed
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_and_rejects_unknown_keys() {
        let g = GridConfig::from_toml(
            r#"
            k = [4, 8]
            shape = ["A", "C"]
            event_rate = 0.4
            reps = 10
            "#,
        )
        .unwrap();
        let s = g.scenarios().unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0].censoring, 0.2);
        assert_ne!(s[0].seed, s[1].seed);
        assert!(GridConfig::from_toml("k = 4\nshape = \"A\"\nevent_rate = 0.4\nbogus = 1").is_err());
    }

    #[test]
    fn presets_are_valid() {
        for (name, g) in presets() {
            assert!(!g.scenarios().unwrap().is_empty(), "{name}");
        }
    }

    #[test]
    fn generated_data_follow_the_conventions() {
        let s = Scenario {
            k: 5,
            censoring: 0.0,
            ..Scenario::default()
        };
        let sched = shape_to_gamma(5, 0.6, Shape::A).unwrap();
        let d = s.generate(&sched, 0.0, 3).unwrap();
        assert_eq!(d.len(), 400);
        assert_eq!(d.q(), 13);
        assert!(d.subjects().iter().all(|r| r.event()));
    }
}
