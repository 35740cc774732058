//! C ABI over the joinsample core.
//!
//! Handles are opaque and owned by the caller once returned; every handle
//! and every string handed out has a matching `*_free`. Fallible calls
//! return a [`JsStatus`] and, on failure, leave a message readable through
//! [`js_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use joinsample::cli::load_database;
use joinsample::pipeline::{plan_for, Method, PipelineError, Prepared, SampleConfig};
use joinsample::planner::parse_query;
use joinsample::sampling::{rng_from_seed, UniformMethod, DEFAULT_THRESHOLD};
use joinsample::storage::to_csv_string;
use joinsample::{IndexKind, PhysicalRelation, ProbeStats};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Query text or file could not be read or parsed, or is not acyclic.
    Query = 4,
    /// A relation file could not be read or does not fit the query.
    Data = 5,
    /// Index construction or a probe failed (bad positions, overflow).
    Index = 6,
    /// Sampling rejected its input (e.g. a probability outside [0, 1]).
    Sampling = 7,
    OutOfRange = 8,
    Panic = 99,
}

/// Values of `JsOptions::index`.
#[repr(u32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsIndexKind {
    Csr = 0,
    Usr = 1,
}

/// Values of `JsOptions::method`.
#[repr(u32)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsMethod {
    Naive = 0,
    Geo = 1,
    Binom = 2,
    Hybrid = 3,
}

/// Sampler settings. Start from `js_options_default()`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JsOptions {
    /// A `JsIndexKind`.
    pub index: u32,
    /// 1 = probe with the cursor cache, 0 = without, negative = index default.
    pub caching: i32,
    /// A `JsMethod`; for per-tuple sampling it draws each root row's positions.
    pub method: u32,
    /// Hybrid switch-over probability.
    pub threshold: f64,
    /// Nonzero: every tuple is kept with probability `p`. Zero: per-tuple
    /// probabilities come from the query's bern attribute.
    pub uniform: u8,
    pub p: f64,
}

/// An index built over a query and its data, ready to sample.
pub struct JsSampler {
    prepared: Prepared,
    caching: bool,
}

/// A sampled or probed relation.
pub struct JsRelation {
    rel: PhysicalRelation,
    attrs: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', "?");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(JsStatus, String);

impl From<PipelineError> for Fail {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Plan(_) => JsStatus::Query,
            PipelineError::Index(_) => JsStatus::Index,
            PipelineError::Sampling(_) => JsStatus::Sampling,
            PipelineError::Storage(_) => JsStatus::Data,
            PipelineError::NoProbability | PipelineError::NotNumeric(_) | PipelineError::Config(_) => {
                JsStatus::InvalidArgument
            }
        };
        Fail(status, e.to_string())
    }
}

fn fail(status: JsStatus, msg: impl Into<String>) -> Fail {
    Fail(status, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> JsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            JsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            JsStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(JsStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(JsStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| fail(JsStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| fail(JsStatus::NullArgument, format!("{what} is null")))
}

fn uniform_method(code: u32, threshold: f64) -> Result<UniformMethod, Fail> {
    Ok(match code {
        0 => UniformMethod::Naive,
        1 => UniformMethod::Geo,
        2 => UniformMethod::Binom,
        3 => UniformMethod::Hybrid { threshold },
        other => return Err(fail(JsStatus::InvalidArgument, format!("unknown method {other}"))),
    })
}

fn config(opts: &JsOptions) -> Result<SampleConfig, Fail> {
    let index = match opts.index {
        0 => IndexKind::Csr,
        1 => IndexKind::Usr,
        other => return Err(fail(JsStatus::InvalidArgument, format!("unknown index kind {other}"))),
    };
    if !(0.0..=1.0).contains(&opts.threshold) {
        return Err(fail(JsStatus::InvalidArgument, format!("threshold {} is outside [0, 1]", opts.threshold)));
    }
    let inner = uniform_method(opts.method, opts.threshold)?;
    let method = if opts.uniform != 0 {
        if !(0.0..=1.0).contains(&opts.p) {
            return Err(fail(JsStatus::InvalidArgument, format!("p {} is outside [0, 1]", opts.p)));
        }
        Method::Uniform { method: inner, p: opts.p }
    } else {
        Method::PerTuple(inner)
    };
    Ok(SampleConfig {
        caching: (opts.caching >= 0).then_some(opts.caching > 0),
        ..SampleConfig::new(index, method)
    })
}

fn open(query: &str, data_dir: &Path, opts: &JsOptions) -> Result<Box<JsSampler>, Fail> {
    let cfg = config(opts)?;
    let q = parse_query(query).map_err(|e| fail(JsStatus::Query, e.to_string()))?;
    // Reject unplannable queries before touching any file.
    plan_for(&q, &cfg)?;
    let db = load_database(&q, data_dir).map_err(|e| fail(JsStatus::Data, e.to_string()))?;
    let prepared = Prepared::new(&q, &db, &cfg)?;
    Ok(Box::new(JsSampler {
        prepared,
        caching: cfg.caching(),
    }))
}

fn relation(rel: PhysicalRelation) -> *mut JsRelation {
    let attrs = rel
        .attrs()
        .iter()
        .map(|a| CString::new(a.as_str()).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(JsRelation { rel, attrs }))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', "?")).unwrap_or_default().into_raw()
}

/// Defaults: chained index, index-default caching, per-tuple hybrid sampling.
#[no_mangle]
pub extern "C" fn js_options_default() -> JsOptions {
    JsOptions {
        index: JsIndexKind::Csr as u32,
        caching: -1,
        method: JsMethod::Hybrid as u32,
        threshold: DEFAULT_THRESHOLD,
        uniform: 0,
        p: 0.0,
    }
}

/// Reads a query file, loads its relations and builds the index.
///
/// `data_dir` may be null, in which case relation files are resolved
/// against the query file's directory. `options` may be null for defaults.
///
/// # Safety
/// String arguments must be null or valid NUL-terminated strings; `options`
/// must be null or point to a `JsOptions`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_open(
    query_path: *const c_char,
    data_dir: *const c_char,
    options: *const JsOptions,
    out: *mut *mut JsSampler,
) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(text(query_path, "query_path")?);
        let dir = if data_dir.is_null() {
            path.parent().map(Path::to_path_buf).unwrap_or_default()
        } else {
            PathBuf::from(text(data_dir, "data_dir")?)
        };
        let query = std::fs::read_to_string(&path).map_err(|e| fail(JsStatus::Query, format!("{}: {e}", path.display())))?;
        let opts = options.as_ref().copied().unwrap_or_else(|| js_options_default());
        *out = Box::into_raw(open(&query, &dir, &opts)?);
        Ok(())
    })
}

/// Like `js_sampler_open`, but with the query given as text. `data_dir`
/// is required.
///
/// # Safety
/// As for `js_sampler_open`.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_open_text(
    query: *const c_char,
    data_dir: *const c_char,
    options: *const JsOptions,
    out: *mut *mut JsSampler,
) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let query = text(query, "query")?;
        let dir = text(data_dir, "data_dir")?;
        let opts = options.as_ref().copied().unwrap_or_else(|| js_options_default());
        *out = Box::into_raw(open(query, Path::new(dir), &opts)?);
        Ok(())
    })
}

/// Number of join tuples the index represents.
///
/// # Safety
/// `sampler` must come from `js_sampler_open*`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_total(sampler: *const JsSampler, out: *mut u64) -> JsStatus {
    guard(|| {
        let s = handle(sampler, "sampler")?;
        *out_ptr(out, "out")? = s.prepared.index.as_dyn().total();
        Ok(())
    })
}

/// Draws one Poisson sample. The same seed gives the same sample.
///
/// # Safety
/// `sampler` must come from `js_sampler_open*`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_sample(sampler: *const JsSampler, seed: u64, out: *mut *mut JsRelation) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = handle(sampler, "sampler")?;
        let result = s.prepared.sample(&mut rng_from_seed(seed))?;
        *out = relation(result.rows);
        Ok(())
    })
}

/// Fetches the join tuples at strictly increasing `positions`.
///
/// # Safety
/// `positions` must point to `len` values (or be null when `len` is 0);
/// `sampler` must come from `js_sampler_open*`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_get(
    sampler: *const JsSampler,
    positions: *const u64,
    len: usize,
    out: *mut *mut JsRelation,
) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let s = handle(sampler, "sampler")?;
        let pos: &[u64] = if len == 0 {
            &[]
        } else if positions.is_null() {
            return Err(fail(JsStatus::NullArgument, "positions is null"));
        } else {
            std::slice::from_raw_parts(positions, len)
        };
        let rows = s
            .prepared
            .index
            .as_dyn()
            .get_with(pos, s.caching, &mut ProbeStats::default())
            .map_err(|e| fail(JsStatus::Index, e.to_string()))?;
        *out = relation(rows);
        Ok(())
    })
}

/// # Safety
/// `sampler` must be null or come from `js_sampler_open*`, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_sampler_free(sampler: *mut JsSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `rel` must be null or a live relation handle.
#[no_mangle]
pub unsafe extern "C" fn js_relation_len(rel: *const JsRelation) -> usize {
    rel.as_ref().map_or(0, |r| r.rel.len())
}

/// Number of attributes; 0 for a null handle.
///
/// # Safety
/// `rel` must be null or a live relation handle.
#[no_mangle]
pub unsafe extern "C" fn js_relation_width(rel: *const JsRelation) -> usize {
    rel.as_ref().map_or(0, |r| r.attrs.len())
}

/// Name of attribute `col`, borrowed from the handle; null when out of range.
///
/// # Safety
/// `rel` must be null or a live relation handle.
#[no_mangle]
pub unsafe extern "C" fn js_relation_attr(rel: *const JsRelation, col: usize) -> *const c_char {
    rel.as_ref()
        .and_then(|r| r.attrs.get(col))
        .map_or(ptr::null(), |a| a.as_ptr())
}

/// Value at (`row`, `col`) rendered as text; free with `js_string_free`.
///
/// # Safety
/// `rel` must be a live relation handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_relation_value(
    rel: *const JsRelation,
    row: usize,
    col: usize,
    out: *mut *mut c_char,
) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let r = handle(rel, "rel")?;
        if row >= r.rel.len() || col >= r.attrs.len() {
            return Err(fail(
                JsStatus::OutOfRange,
                format!("cell ({row}, {col}) outside {}x{}", r.rel.len(), r.attrs.len()),
            ));
        }
        *out = owned_string(r.rel.columns()[col].value(row).to_string());
        Ok(())
    })
}

/// The relation as CSV with a header line; free with `js_string_free`.
///
/// # Safety
/// `rel` must be a live relation handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn js_relation_to_csv(rel: *const JsRelation, out: *mut *mut c_char) -> JsStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        *out = owned_string(to_csv_string(&handle(rel, "rel")?.rel));
        Ok(())
    })
}

/// # Safety
/// `rel` must be null or a relation handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_relation_free(rel: *mut JsRelation) {
    if !rel.is_null() {
        drop(Box::from_raw(rel));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn js_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or null after a
/// success. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn js_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Static name of a status code; "unknown status" for other values.
#[no_mangle]
pub extern "C" fn js_status_name(status: i32) -> *const c_char {
    let name: &'static CStr = match status {
        0 => c"ok",
        1 => c"null argument",
        2 => c"invalid utf-8",
        3 => c"invalid argument",
        4 => c"query error",
        5 => c"data error",
        6 => c"index error",
        7 => c"sampling error",
        8 => c"out of range",
        99 => c"panic",
        _ => c"unknown status",
    };
    name.as_ptr()
}
