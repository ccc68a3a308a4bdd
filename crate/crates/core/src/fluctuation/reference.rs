//! Asymptotic p-values. The supLM law (sup of a squared, tied-down Bessel
//! process over a trimmed window) has no closed form, so it is tabulated by
//! simulating `d`-dimensional Brownian bridges on a grid. Tables are cached
//! on disk as text:
//!
//! ```text
//! mobds-suplm-reference v1 d=3 trim_low=0.1 trim_high=0.9 grid=1000 reps=50000 seed=...
//! <sorted statistic values, one per line>
//! ```
//!
//! A cached file whose header does not match the requested parameters is
//! regenerated.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::Trim;
use crate::error::TestError;
use crate::rng;

pub const DEFAULT_GRID: usize = 1000;
pub const DEFAULT_REPS: usize = 50_000;
pub const MAX_D: usize = 50;
const HEADER_TAG: &str = "mobds-suplm-reference v1";

/// Which limiting law to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymptoticKind {
    SupLm { d: usize, trim: Trim },
    ChiSquare { df: usize },
}

/// Simulated null distribution of the supLM functional.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceDistribution {
    pub d: usize,
    pub trim: Trim,
    pub grid: usize,
    pub reps: usize,
    pub seed: u64,
    values: Vec<f64>,
}

fn check_supported(d: usize, trim: Trim) -> Result<(), TestError> {
    if d == 0 || d > MAX_D || !(trim.low > 0.0 && trim.low < 0.5 && trim.high > 0.5 && trim.high < 1.0) {
        return Err(TestError::UnsupportedReference {
            d,
            low: trim.low,
            high: trim.high,
            max_d: MAX_D,
        });
    }
    Ok(())
}

fn table_seed(d: usize, trim: Trim, grid: usize) -> u64 {
    rng::derive_seed(
        rng::label_seed("suplm-reference"),
        &[d as u64, trim.low.to_bits(), trim.high.to_bits(), grid as u64],
    )
}

fn one_bridge(d: usize, trim: Trim, grid: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, &[]);
    let sd = (1.0 / grid as f64).sqrt();
    // Random walks, then tie down: W(m) = B(m) - m B(1).
    let mut walk = vec![0.0; d * grid];
    let mut end = vec![0.0; d];
    for j in 0..d {
        let mut acc = 0.0;
        for i in 0..grid {
            let e: f64 = StandardNormal.sample(&mut rng);
            acc += sd * e;
            walk[j * grid + i] = acc;
        }
        end[j] = acc;
    }
    let mut best = 0.0f64;
    for i in 1..grid {
        let m = i as f64 / grid as f64;
        if !trim.contains(m) {
            continue;
        }
        let norm2: f64 = (0..d)
            .map(|j| {
                let w = walk[j * grid + i - 1] - m * end[j];
                w * w
            })
            .sum();
        best = best.max(norm2 / (m * (1.0 - m)));
    }
    best
}

impl ReferenceDistribution {
    pub fn generate(d: usize, trim: Trim, grid: usize, reps: usize) -> Result<Self, TestError> {
        check_supported(d, trim)?;
        if grid < 2 || reps == 0 {
            return Err(TestError::Cache(format!("grid {grid} / reps {reps} too small")));
        }
        let seed = table_seed(d, trim, grid);
        let mut values: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|r| one_bridge(d, trim, grid, rng::derive_seed(seed, &[r as u64])))
            .collect();
        values.sort_by(f64::total_cmp);
        Ok(Self {
            d,
            trim,
            grid,
            reps,
            seed,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(#{ref ≥ statistic} + 1) / (R + 1)`.
    pub fn pvalue(&self, statistic: f64) -> f64 {
        let below = self.values.partition_point(|&v| v < statistic);
        (self.values.len() - below + 1) as f64 / (self.values.len() + 1) as f64
    }

    /// Empirical quantile (`ceil(prob R)`-th order statistic).
    pub fn quantile(&self, prob: f64) -> f64 {
        let r = self.values.len();
        let k = ((prob * r as f64).ceil() as usize).clamp(1, r);
        self.values[k - 1]
    }

    fn header(&self) -> String {
        format!(
            "{HEADER_TAG} d={} trim_low={} trim_high={} grid={} reps={} seed={}",
            self.d, self.trim.low, self.trim.high, self.grid, self.reps, self.seed
        )
    }

    pub fn write_to<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{}", self.header())?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        w.flush()
    }

    /// Reads a table; `Ok(None)` if the header names other parameters.
    pub fn read_from<R: Read>(r: R, d: usize, trim: Trim, grid: usize, reps: usize) -> Result<Option<Self>, TestError> {
        let mut lines = BufReader::new(r).lines();
        let header = match lines.next() {
            Some(Ok(h)) => h,
            _ => return Ok(None),
        };
        let expected = Self {
            d,
            trim,
            grid,
            reps,
            seed: table_seed(d, trim, grid),
            values: Vec::new(),
        };
        if header.trim() != expected.header() {
            return Ok(None);
        }
        let mut values = Vec::with_capacity(reps);
        for line in lines {
            let line = line.map_err(|e| TestError::Cache(e.to_string()))?;
            let v: f64 = line
                .trim()
                .parse()
                .map_err(|_| TestError::Cache(format!("bad value '{line}'")))?;
            values.push(v);
        }
        if values.len() != reps || values.windows(2).any(|w| w[0] > w[1]) {
            return Ok(None);
        }
        Ok(Some(Self { values, ..expected }))
    }
}

type Key = (usize, u64, u64);

/// Process-wide memo of reference tables backed by an on-disk cache.
pub struct ReferenceStore {
    dir: Option<PathBuf>,
    grid: usize,
    reps: usize,
    tables: Mutex<HashMap<Key, Arc<ReferenceDistribution>>>,
}

static GLOBAL: OnceLock<ReferenceStore> = OnceLock::new();
static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ReferenceStore {
    pub fn new(dir: Option<PathBuf>, grid: usize, reps: usize) -> Self {
        Self {
            dir,
            grid,
            reps,
            tables: Mutex::new(HashMap::new()),
        }
    }

    /// Cache directory from `MOBDS_REFERENCE_DIR`, else `<tmp>/mobds-reference`.
    pub fn default_dir() -> PathBuf {
        std::env::var_os("MOBDS_REFERENCE_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("mobds-reference"))
    }

    pub fn global() -> &'static ReferenceStore {
        GLOBAL.get_or_init(|| Self::new(Some(Self::default_dir()), DEFAULT_GRID, DEFAULT_REPS))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn file_name(&self, d: usize, trim: Trim) -> String {
        format!(
            "suplm-d{d}-{}-{}-g{}-r{}.txt",
            trim.low, trim.high, self.grid, self.reps
        )
    }

    pub fn path_for(&self, d: usize, trim: Trim) -> Option<PathBuf> {
        self.dir.as_ref().map(|dir| dir.join(self.file_name(d, trim)))
    }

    pub fn get(&self, d: usize, trim: Trim) -> Result<Arc<ReferenceDistribution>, TestError> {
        check_supported(d, trim)?;
        let key = (d, trim.low.to_bits(), trim.high.to_bits());
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        // Generated without holding the lock: generation itself uses rayon.
        let table = Arc::new(match self.load(d, trim) {
            Some(t) => t,
            None => {
                log::info!(
                    "simulating supLM reference for d = {d}, trim = [{}, {}]",
                    trim.low,
                    trim.high
                );
                let t = ReferenceDistribution::generate(d, trim, self.grid, self.reps)?;
                if let Err(e) = self.save(&t) {
                    log::warn!("could not cache reference table: {e}");
                }
                t
            }
        });
        Ok(self.tables.lock().unwrap().entry(key).or_insert(table).clone())
    }

    fn load(&self, d: usize, trim: Trim) -> Option<ReferenceDistribution> {
        let path = self.path_for(d, trim)?;
        let file = fs::File::open(path).ok()?;
        ReferenceDistribution::read_from(file, d, trim, self.grid, self.reps)
            .ok()
            .flatten()
    }

    fn save(&self, table: &ReferenceDistribution) -> std::io::Result<()> {
        let Some(path) = self.path_for(table.d, table.trim) else {
            return Ok(());
        };
        let dir = path.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.{}.{}",
            self.file_name(table.d, table.trim),
            std::process::id(),
            TMP_COUNTER.fetch_add(1, AtomicOrdering::Relaxed)
        ));
        table.write_to(fs::File::create(&tmp)?)?;
        fs::rename(&tmp, &path)
    }
}

/// Upper-tail asymptotic p-value.
pub fn asymptotic_pvalue(statistic: f64, kind: AsymptoticKind) -> Result<f64, TestError> {
    if !(statistic >= 0.0) || !statistic.is_finite() {
        return Err(TestError::InvalidStatistic(statistic));
    }
    match kind {
        AsymptoticKind::ChiSquare { df } => {
            if df == 0 {
                return Err(TestError::InvalidStatistic(statistic));
            }
            if statistic == 0.0 {
                return Ok(1.0);
            }
            let chi = ChiSquared::new(df as f64).map_err(|_| TestError::InvalidStatistic(statistic))?;
            Ok(chi.sf(statistic).clamp(0.0, 1.0))
        }
        AsymptoticKind::SupLm { d, trim } => Ok(ReferenceStore::global().get(d, trim)?.pvalue(statistic)),
    }
}
