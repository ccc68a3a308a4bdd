//! C ABI for `mobds`.
//!
//! Objects are opaque handles created by the `*_from_*` and `*_grow`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`MobdsStatus`]; on failure a description is available from
//! [`mobds_last_error_message`] on the same thread. Strings returned by the
//! library must be released with [`mobds_string_free`].

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mobds::fluctuation::Trim;
use mobds::permutation::PermPValue;
use mobds::survival::io::{read_dataset, CsvSchema};
use mobds::survival::life_table;
use mobds::tree::grow;
use mobds::{Dataset, Error, Link, Method, MobConfig, MobTree, ModelSpec, SubjectRecord, ZVariable};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MobdsStatus {
    Ok = 0,
    /// A required pointer argument was null.
    ErrNull = 1,
    /// Invalid argument or configuration.
    ErrUsage = 2,
    /// Invalid or unreadable data.
    ErrData = 3,
    /// Model fitting or testing failed numerically.
    ErrNumerical = 4,
    ErrIo = 5,
    /// An internal panic was caught at the boundary.
    ErrPanic = 6,
}

pub const MOBDS_METHOD_MOB: i32 = 0;
pub const MOBDS_METHOD_MOB_DS: i32 = 1;
pub const MOBDS_LINK_LOGIT: i32 = 0;
pub const MOBDS_LINK_GOMPERTZ: i32 = 1;

/// Opaque subject-level dataset.
pub struct MobdsDataset {
    inner: Dataset,
}

/// Opaque fitted tree.
pub struct MobdsTree {
    inner: MobTree,
}

/// Tree growing options; obtain defaults from [`mobds_config_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct MobdsConfig {
    pub alpha: f64,
    /// `MOBDS_METHOD_MOB` or `MOBDS_METHOD_MOB_DS`.
    pub method: i32,
    pub n_perms: usize,
    pub max_depth: usize,
    pub min_subjects: usize,
    /// 0 selects the default `2 (K - 1) + 2 p`.
    pub min_events: usize,
    /// `MOBDS_LINK_LOGIT` or `MOBDS_LINK_GOMPERTZ`.
    pub link: i32,
    /// Symmetric supLM trimming fraction.
    pub trim: f64,
    pub seed: u64,
    /// Non-zero for randomized instead of add-one permutation p-values.
    pub randomized_pvalue: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: MobdsStatus, msg: impl Into<String>) -> MobdsStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> MobdsStatus {
    let status = match &e {
        Error::Io(_) => MobdsStatus::ErrIo,
        _ => match e.exit_code() {
            2 => MobdsStatus::ErrUsage,
            3 => MobdsStatus::ErrData,
            _ => MobdsStatus::ErrNumerical,
        },
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> MobdsStatus) -> MobdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(MobdsStatus::ErrPanic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, MobdsStatus> {
    if p.is_null() {
        return Err(fail(MobdsStatus::ErrNull, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MobdsStatus::ErrUsage, format!("{name} is not valid UTF-8")))
}

unsafe fn list_arg(p: *const c_char, name: &str) -> Result<Vec<String>, MobdsStatus> {
    if p.is_null() {
        return Ok(Vec::new());
    }
    Ok(str_arg(p, name)?
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mobds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn mobds_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}

/// Builds a dataset from arrays of length `n` (times, statuses) and
/// row-major `n x p` / `n x q` covariate matrices. `x` may be null when
/// `p = 0`. `k_max = 0` infers the largest time. Subject ids are `1..=n`.
#[no_mangle]
pub unsafe extern "C" fn mobds_dataset_from_arrays(
    obs_time: *const i64,
    status: *const i64,
    n: usize,
    x: *const f64,
    p: usize,
    z: *const f64,
    q: usize,
    k_max: u32,
    out: *mut *mut MobdsDataset,
) -> MobdsStatus {
    guard(|| {
        if out.is_null() || obs_time.is_null() || status.is_null() || (z.is_null() && q > 0) || (x.is_null() && p > 0) {
            return fail(MobdsStatus::ErrNull, "null argument");
        }
        let times = std::slice::from_raw_parts(obs_time, n);
        let stats = std::slice::from_raw_parts(status, n);
        let xs = if p > 0 {
            std::slice::from_raw_parts(x, n * p)
        } else {
            &[]
        };
        let zs = if q > 0 {
            std::slice::from_raw_parts(z, n * q)
        } else {
            &[]
        };
        let subjects = (0..n)
            .map(|i| {
                SubjectRecord::new(
                    i as i64 + 1,
                    times[i],
                    stats[i],
                    xs[i * p..(i + 1) * p].to_vec(),
                    zs[i * q..(i + 1) * q].to_vec(),
                )
            })
            .collect();
        let x_names = (1..=p).map(|j| format!("x{j}")).collect();
        let z_vars = (1..=q).map(|l| ZVariable::numeric(format!("z{l}"))).collect();
        match Dataset::new(subjects, x_names, z_vars, (k_max > 0).then_some(k_max)) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(MobdsDataset { inner: ds }));
                MobdsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

/// Reads a dataset from a CSV file. Column lists are comma separated;
/// `x_cols` and `categorical` may be null.
#[no_mangle]
pub unsafe extern "C" fn mobds_dataset_from_csv(
    path: *const c_char,
    time_col: *const c_char,
    status_col: *const c_char,
    x_cols: *const c_char,
    z_cols: *const c_char,
    categorical: *const c_char,
    out: *mut *mut MobdsDataset,
) -> MobdsStatus {
    guard(|| {
        if out.is_null() {
            return fail(MobdsStatus::ErrNull, "out is null");
        }
        let parsed = (|| {
            Ok::<_, MobdsStatus>((
                str_arg(path, "path")?,
                CsvSchema {
                    time_col: str_arg(time_col, "time_col")?.to_string(),
                    status_col: str_arg(status_col, "status_col")?.to_string(),
                    x_cols: list_arg(x_cols, "x_cols")?,
                    z_cols: list_arg(z_cols, "z_cols")?,
                    categorical: list_arg(categorical, "categorical")?,
                    id_col: None,
                },
            ))
        })();
        let (path, schema) = match parsed {
            Ok(v) => v,
            Err(s) => return s,
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => return fail(MobdsStatus::ErrIo, format!("{path}: {e}")),
        };
        match read_dataset(file, &schema, None) {
            Ok(ds) => {
                *out = Box::into_raw(Box::new(MobdsDataset { inner: ds }));
                MobdsStatus::Ok
            }
            Err(e) => from_error(e.into()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobds_dataset_len(ds: *const MobdsDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.len())
}

#[no_mangle]
pub unsafe extern "C" fn mobds_dataset_k_max(ds: *const MobdsDataset) -> u32 {
    ds.as_ref().map_or(0, |d| d.inner.k_max())
}

#[no_mangle]
pub unsafe extern "C" fn mobds_dataset_free(ds: *mut MobdsDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Life-table hazards and survival into caller buffers of length `len`;
/// `written` receives the number of time points (at most `len`).
#[no_mangle]
pub unsafe extern "C" fn mobds_life_table(
    ds: *const MobdsDataset,
    hazards: *mut f64,
    survival: *mut f64,
    len: usize,
    written: *mut usize,
) -> MobdsStatus {
    guard(|| {
        let Some(ds) = ds.as_ref() else {
            return fail(MobdsStatus::ErrNull, "dataset is null");
        };
        if written.is_null() || (len > 0 && (hazards.is_null() || survival.is_null())) {
            return fail(MobdsStatus::ErrNull, "null output buffer");
        }
        let table = life_table(&ds.inner);
        let m = table.rows.len().min(len);
        for (i, row) in table.rows.iter().take(m).enumerate() {
            *hazards.add(i) = row.hazard;
            *survival.add(i) = row.survival;
        }
        *written = m;
        MobdsStatus::Ok
    })
}

#[no_mangle]
pub extern "C" fn mobds_config_default() -> MobdsConfig {
    let d = MobConfig::default();
    MobdsConfig {
        alpha: d.alpha,
        method: MOBDS_METHOD_MOB_DS,
        n_perms: d.n_perms,
        max_depth: d.max_depth,
        min_subjects: d.min_subjects,
        min_events: 0,
        link: MOBDS_LINK_LOGIT,
        trim: d.trim.low,
        seed: d.seed,
        randomized_pvalue: 0,
    }
}

fn to_config(c: &MobdsConfig) -> Result<MobConfig, MobdsStatus> {
    let method = match c.method {
        MOBDS_METHOD_MOB => Method::Mob,
        MOBDS_METHOD_MOB_DS => Method::MobDs,
        m => return Err(fail(MobdsStatus::ErrUsage, format!("unknown method {m}"))),
    };
    let link = match c.link {
        MOBDS_LINK_LOGIT => Link::Logit,
        MOBDS_LINK_GOMPERTZ => Link::Gompertz,
        l => return Err(fail(MobdsStatus::ErrUsage, format!("unknown link {l}"))),
    };
    let trim = Trim::symmetric(c.trim).map_err(|e| fail(MobdsStatus::ErrUsage, e.to_string()))?;
    Ok(MobConfig {
        alpha: c.alpha,
        method,
        n_perms: c.n_perms,
        max_depth: c.max_depth,
        min_subjects: c.min_subjects,
        min_events: (c.min_events > 0).then_some(c.min_events),
        link,
        trim,
        perm_pvalue: if c.randomized_pvalue != 0 {
            PermPValue::Randomized
        } else {
            PermPValue::AddOne
        },
        seed: c.seed,
        ..MobConfig::default()
    })
}

/// Grows a tree using every x column of the dataset as a model covariate.
#[no_mangle]
pub unsafe extern "C" fn mobds_tree_grow(
    ds: *const MobdsDataset,
    config: *const MobdsConfig,
    out: *mut *mut MobdsTree,
) -> MobdsStatus {
    guard(|| {
        let (Some(ds), Some(cfg)) = (ds.as_ref(), config.as_ref()) else {
            return fail(MobdsStatus::ErrNull, "null argument");
        };
        if out.is_null() {
            return fail(MobdsStatus::ErrNull, "out is null");
        }
        let cfg = match to_config(cfg) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let spec = ModelSpec::for_dataset(cfg.link, &ds.inner);
        match grow(&ds.inner, &spec, &cfg) {
            Ok(tree) => {
                *out = Box::into_raw(Box::new(MobdsTree { inner: tree }));
                MobdsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobds_tree_num_nodes(tree: *const MobdsTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.num_nodes())
}

#[no_mangle]
pub unsafe extern "C" fn mobds_tree_num_terminals(tree: *const MobdsTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.num_terminals())
}

/// Serializes the tree; release the string with [`mobds_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mobds_tree_to_json(tree: *const MobdsTree, out: *mut *mut c_char) -> MobdsStatus {
    guard(|| {
        let Some(tree) = tree.as_ref() else {
            return fail(MobdsStatus::ErrNull, "tree is null");
        };
        if out.is_null() {
            return fail(MobdsStatus::ErrNull, "out is null");
        }
        match tree.inner.to_json() {
            Ok(s) => match CString::new(s) {
                Ok(c) => {
                    *out = c.into_raw();
                    MobdsStatus::Ok
                }
                Err(_) => fail(MobdsStatus::ErrData, "tree JSON contains a NUL byte"),
            },
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobds_tree_from_json(json: *const c_char, out: *mut *mut MobdsTree) -> MobdsStatus {
    guard(|| {
        let s = match str_arg(json, "json") {
            Ok(s) => s,
            Err(st) => return st,
        };
        if out.is_null() {
            return fail(MobdsStatus::ErrNull, "out is null");
        }
        match MobTree::from_json(s) {
            Ok(t) => {
                *out = Box::into_raw(Box::new(MobdsTree { inner: t }));
                MobdsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Routes one subject (`q` partitioning values, categorical ones as level
/// codes, and `p` model covariates) and writes its terminal node id and
/// survival curve `S(1), S(2), ...` (at most `len` values).
#[no_mangle]
pub unsafe extern "C" fn mobds_tree_predict(
    tree: *const MobdsTree,
    z: *const f64,
    q: usize,
    x: *const f64,
    p: usize,
    node: *mut usize,
    survival: *mut f64,
    len: usize,
    written: *mut usize,
) -> MobdsStatus {
    guard(|| {
        let Some(tree) = tree.as_ref() else {
            return fail(MobdsStatus::ErrNull, "tree is null");
        };
        if node.is_null()
            || written.is_null()
            || (q > 0 && z.is_null())
            || (p > 0 && x.is_null())
            || (len > 0 && survival.is_null())
        {
            return fail(MobdsStatus::ErrNull, "null argument");
        }
        if p != tree.inner.x_names.len() {
            return fail(
                MobdsStatus::ErrUsage,
                format!("expected {} model covariates, got {p}", tree.inner.x_names.len()),
            );
        }
        let zs = if q > 0 { std::slice::from_raw_parts(z, q) } else { &[] };
        let xs = if p > 0 { std::slice::from_raw_parts(x, p) } else { &[] };
        match tree.inner.predict(zs, xs) {
            Ok(pred) => {
                *node = pred.node;
                let m = pred.survival.len().min(len);
                ptr::copy_nonoverlapping(pred.survival.as_ptr(), survival, m);
                *written = m;
                MobdsStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn mobds_tree_free(tree: *mut MobdsTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mobds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
