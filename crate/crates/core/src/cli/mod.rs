//! The `mobds` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data error,
//! 4 numerical failure.

mod manifest;

pub use manifest::{RunManifest, CSV_MANIFEST_LINE, MANIFEST_FILE};

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use crate::error::Error;
use crate::fluctuation::{ReferenceStore, Trim};
use crate::glm::{CovarianceEstimator, Link, ModelSpec};
use crate::permutation::{NullStrategy, PermPValue};
use crate::simulation::{presets, run_grid, GridConfig};
use crate::survival::io::{read_covariates, read_dataset, write_augmented, CsvSchema};
use crate::survival::{augment, Dataset};
use crate::tree::{grow, Method, MobConfig, MobTree};
use manifest::{digest, write_csv, write_json, InputDigest};

#[derive(Parser, Debug)]
#[command(
    name = "mobds",
    version,
    about = "Model-based recursive partitioning for discrete time-to-event data"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Grow a tree on a subject-level CSV file.
    Fit(FitArgs),
    /// Run a null-data simulation grid.
    Simulate(SimulateArgs),
    /// Route covariate rows through a fitted tree.
    Predict(PredictArgs),
    /// Write the person-period (augmented) form of a dataset.
    Augment(AugmentArgs),
    /// Build or inspect a cached supLM reference table.
    Reference(ReferenceArgs),
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    /// Model covariates (comma separated).
    #[arg(long, value_delimiter = ',')]
    x_cols: Vec<String>,
    /// Partitioning covariates (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    z_cols: Vec<String>,
    /// Partitioning covariates to treat as categorical.
    #[arg(long, value_delimiter = ',')]
    categorical: Vec<String>,
    #[arg(long)]
    id_col: Option<String>,
    /// Merge all times from this point on into one final interval.
    #[arg(long)]
    collapse_from: Option<u32>,
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            time_col: self.time_col.clone(),
            status_col: self.status_col.clone(),
            x_cols: self.x_cols.clone(),
            z_cols: self.z_cols.clone(),
            categorical: self.categorical.clone(),
            id_col: self.id_col.clone(),
        }
    }

    fn load(&self) -> Result<(Dataset, InputDigest), Error> {
        for c in &self.categorical {
            if !self.z_cols.contains(c) {
                return Err(Error::Config(format!("categorical column '{c}' is not among --z-cols")));
            }
        }
        let file = fs::File::open(&self.data)?;
        let mut ds = read_dataset(file, &self.schema(), None)?;
        if let Some(from) = self.collapse_from {
            ds = ds.collapse_tail(from)?;
        }
        Ok((ds, digest(&self.data)?))
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "logit")]
    link: Link,
    #[arg(long, default_value = "mob-ds")]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    perms: usize,
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    /// Minimum subjects per node.
    #[arg(long, default_value_t = 20)]
    min_node: usize,
    /// Minimum events per node (default 2(K−1) + 2p).
    #[arg(long)]
    min_events: Option<usize>,
    /// Symmetric supLM trimming fraction.
    #[arg(long, default_value_t = 0.1)]
    trim: f64,
    #[arg(long, default_value = "add-one")]
    perm_pvalue: PermPValue,
    #[arg(long, default_value = "reuse")]
    null_strategy: NullStrategy,
    #[arg(long, default_value = "sandwich")]
    covariance: CovarianceEstimator,
    /// Coarse-grid split search for models with x covariates.
    #[arg(long)]
    fast_split: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "mobds-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("grid").required(true).args(["preset", "config", "list_presets"])))]
struct SimulateArgs {
    /// Named grid (see --list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// TOML grid file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    list_presets: bool,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    perms: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    perm_pvalue: Option<PermPValue>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "mobds-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Tree JSON written by `fit`.
    #[arg(long)]
    tree: PathBuf,
    /// Covariate CSV with the tree's z (and x) columns.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mobds-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "mobds-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ReferenceArgs {
    /// Parameter dimension.
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    trim_low: f64,
    #[arg(long, default_value_t = 0.9)]
    trim_high: f64,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 2;
        }
    };
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match pool.install(|| run(cli.command, threads, argv)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(command: Command, threads: usize, arguments: Vec<String>) -> Result<(), Error> {
    let start = Instant::now();
    let manifest =
        |command: &str, config: serde_json::Value, seed: Option<u64>, entropy: bool, inputs, outputs: &[&str]| {
            RunManifest {
                command: command.to_string(),
                arguments: arguments.clone(),
                config,
                seed,
                seed_from_entropy: entropy,
                version: crate::VERSION.to_string(),
                inputs,
                outputs: outputs.iter().map(|s| s.to_string()).collect(),
                threads,
                wall_time_seconds: start.elapsed().as_secs_f64(),
            }
        };
    match command {
        Command::Fit(a) => {
            let (seed, entropy) = resolve_seed(a.seed);
            let (ds, input) = a.data.load()?;
            let config = MobConfig {
                alpha: a.alpha,
                method: a.method,
                n_perms: a.perms,
                max_depth: a.max_depth,
                min_subjects: a.min_node,
                min_events: a.min_events,
                link: a.link,
                trim: Trim::symmetric(a.trim)?,
                covariance: a.covariance,
                null_strategy: a.null_strategy,
                perm_pvalue: a.perm_pvalue,
                fast_split: a.fast_split,
                seed,
            };
            let spec = ModelSpec::for_dataset(a.link, &ds);
            let tree = grow(&ds, &spec, &config)?;
            let out = prepare_dir(&a.out_dir)?;
            write_json(&out.join("tree.json"), "tree", &tree)?;
            fs::write(out.join("tree.txt"), format!("{CSV_MANIFEST_LINE}\n{}", tree.render()))?;
            write_csv(&out.join("pvalues.csv"), |w| tree.write_pvalue_csv(w))?;
            write_csv(&out.join("survival.csv"), |w| tree.write_survival_csv(w))?;
            let cfg = serde_json::json!({ "tree": config, "min_events": tree.min_events, "data": data_json(&a.data) });
            manifest(
                "fit",
                cfg,
                Some(seed),
                entropy,
                vec![input],
                &["tree.json", "tree.txt", "pvalues.csv", "survival.csv"],
            )
            .write(&out)?;
            print!("{}", tree.render());
        }
        Command::Simulate(a) => {
            if a.list_presets {
                for (name, g) in presets() {
                    let n = g.scenarios().map(|s| s.len()).unwrap_or(0);
                    println!("{name}\t{n} scenarios");
                }
                return Ok(());
            }
            let (mut grid, inputs) = match (&a.preset, &a.config) {
                (Some(name), _) => (
                    presets()
                        .remove(name.as_str())
                        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?,
                    Vec::new(),
                ),
                (None, Some(path)) => {
                    let text =
                        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                    (GridConfig::from_toml(&text)?, vec![digest(path)?])
                }
                (None, None) => unreachable!("clap enforces the group"),
            };
            if a.reps.is_some() {
                grid.reps = a.reps;
            }
            if a.perms.is_some() {
                grid.perms = a.perms;
            }
            if a.perm_pvalue.is_some() {
                grid.perm_pvalue = a.perm_pvalue;
            }
            if !a.methods.is_empty() {
                grid.methods = Some(a.methods.clone());
            }
            let (seed, entropy) = resolve_seed(a.seed.or(grid.seed));
            grid.seed = Some(seed);
            let scenarios = grid.scenarios()?;
            let report = run_grid(&scenarios, &grid.methods())?;
            let out = prepare_dir(&a.out_dir)?;
            write_csv(&out.join("report.csv"), |w| report.write_csv(w))?;
            write_csv(&out.join("tails.csv"), |w| report.write_tails_csv(w))?;
            let cfg = serde_json::json!({ "grid": grid, "scenarios": scenarios });
            manifest(
                "simulate",
                cfg,
                Some(seed),
                entropy,
                inputs,
                &["report.csv", "tails.csv"],
            )
            .write(&out)?;
            let mut stdout = std::io::stdout().lock();
            report.write_csv(&mut stdout)?;
        }
        Command::Predict(a) => {
            let text = fs::read_to_string(&a.tree)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let tree: MobTree = match value.get("tree") {
                Some(t) => serde_json::from_value(t.clone())?,
                None => serde_json::from_value(value)?,
            };
            let rows = read_covariates(fs::File::open(&a.data)?, &tree.z_vars, &tree.x_names)?;
            let mut preds = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let p = tree.predict(&row.z, &row.x).map_err(|e| match e {
                    Error::UnseenLevel { variable, level } => Error::UnseenLevel {
                        variable: format!("{variable} (row {})", i + 1),
                        level,
                    },
                    e => e,
                })?;
                preds.push(p);
            }
            let out = prepare_dir(&a.out_dir)?;
            let k = tree.k_max as usize;
            write_csv(&out.join("predictions.csv"), |w| {
                let header: Vec<String> = (1..=k).map(|t| format!("surv_{t}")).collect();
                writeln!(w, "row,node,{}", header.join(","))?;
                for (i, p) in preds.iter().enumerate() {
                    let cells: Vec<String> = (0..k)
                        .map(|t| p.survival.get(t).map_or(String::new(), |v| v.to_string()))
                        .collect();
                    writeln!(w, "{},{},{}", i + 1, p.node, cells.join(","))?;
                }
                Ok(())
            })?;
            let inputs = vec![digest(&a.tree)?, digest(&a.data)?];
            manifest(
                "predict",
                serde_json::json!({}),
                None,
                false,
                inputs,
                &["predictions.csv"],
            )
            .write(&out)?;
        }
        Command::Augment(a) => {
            let (ds, input) = a.data.load()?;
            let aug = augment(&ds);
            let out = prepare_dir(&a.out_dir)?;
            write_csv(&out.join("augmented.csv"), |w| Ok(write_augmented(&aug, &ds, w)?))?;
            let cfg = serde_json::json!({ "data": data_json(&a.data) });
            manifest("augment", cfg, None, false, vec![input], &["augmented.csv"]).write(&out)?;
        }
        Command::Reference(a) => {
            let trim = Trim::new(a.trim_low, a.trim_high)?;
            let store = ReferenceStore::global();
            let table = store.get(a.d, trim)?;
            println!("d,trim_low,trim_high,grid,reps,q90,q95,q99,path");
            println!(
                "{},{},{},{},{},{},{},{},{}",
                table.d,
                trim.low,
                trim.high,
                table.grid,
                table.reps,
                table.quantile(0.90),
                table.quantile(0.95),
                table.quantile(0.99),
                store
                    .path_for(a.d, trim)
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            );
        }
    }
    Ok(())
}

fn resolve_seed(seed: Option<u64>) -> (u64, bool) {
    match seed {
        Some(s) => (s, false),
        None => (rand::rng().random(), true),
    }
}

fn prepare_dir(dir: &Path) -> Result<PathBuf, Error> {
    fs::create_dir_all(dir)?;
    Ok(dir.to_path_buf())
}

fn data_json(d: &DataArgs) -> serde_json::Value {
    serde_json::json!({
        "path": d.data.display().to_string(),
        "time_col": d.time_col,
        "status_col": d.status_col,
        "x_cols": d.x_cols,
        "z_cols": d.z_cols,
        "categorical": d.categorical,
        "id_col": d.id_col,
        "collapse_from": d.collapse_from,
    })
}
