//! C ABI over the privrewrite engine.
//!
//! Every function returns a [`PrwStatus`]; on failure a message is available
//! from [`prw_last_error_message`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and must be released with
//! [`prw_string_free`]. An engine handle may be shared between threads:
//! reads run concurrently and pool writes are serialised.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::RwLock;

use privrewrite::pipeline::{Engine, PipelineConfig};
use privrewrite::policy::dpo_loss;
use privrewrite::prompting::{build_prompt, extract_context, parse_generation};
use privrewrite::reward::{length_reward, Scorer};
use privrewrite::style_pool::{load_state, save_state, InsertOutcome, StylePoolState};
use privrewrite::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    EmptyPool = 4,
    Io = 5,
    CorruptSnapshot = 6,
    VersionMismatch = 7,
    RemoteUnavailable = 8,
    Config = 9,
    Panic = 10,
    Other = 11,
}

/// Opaque engine handle: configuration, embedder, detector and style pool.
pub struct PrwEngine {
    engine: Engine,
    pool: RwLock<StylePoolState>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PrwStatus {
    match e {
        Error::EmptyPool => PrwStatus::EmptyPool,
        Error::Io(_) => PrwStatus::Io,
        Error::CorruptSnapshot(_) => PrwStatus::CorruptSnapshot,
        Error::VersionMismatch { .. } => PrwStatus::VersionMismatch,
        Error::RemoteUnavailable(_) => PrwStatus::RemoteUnavailable,
        Error::Config(_) | Error::WeightsNotNormalized(_) => PrwStatus::Config,
        Error::EmptyText
        | Error::EmptySource
        | Error::InvalidParam(_)
        | Error::InvalidInput(_)
        | Error::DimensionMismatch { .. }
        | Error::NonFinite
        | Error::ZeroNorm => PrwStatus::InvalidArgument,
        _ => PrwStatus::Other,
    }
}

struct Fail(PrwStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(PrwStatus::Other, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PrwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PrwStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PrwStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(PrwStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(PrwStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn engine_arg<'a>(p: *const PrwEngine) -> Result<&'a PrwEngine, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(PrwStatus::NullPointer, "engine handle is null".into()))
}

unsafe fn write_out<T>(out: *mut T, v: T, name: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(PrwStatus::NullPointer, format!("`{name}` is null")));
    }
    out.write(v);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(PrwStatus::Other, "output contains NUL".into()))?;
    write_out(out, c.into_raw(), "out")
}

fn read_lock(e: &PrwEngine) -> std::sync::RwLockReadGuard<'_, StylePoolState> {
    e.pool.read().unwrap_or_else(|p| p.into_inner())
}

fn write_lock(e: &PrwEngine) -> std::sync::RwLockWriteGuard<'_, StylePoolState> {
    e.pool.write().unwrap_or_else(|p| p.into_inner())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn prw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Creates an engine from a TOML config (null for defaults) with an empty pool.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prw_engine_new(config_toml: *const c_char, out: *mut *mut PrwEngine) -> PrwStatus {
    guard(|| {
        let cfg = if config_toml.is_null() {
            PipelineConfig::default()
        } else {
            PipelineConfig::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let engine = Engine::new(cfg)?;
        let pool = RwLock::new(engine.new_pool()?);
        write_out(out, Box::into_raw(Box::new(PrwEngine { engine, pool })), "out")
    })
}

/// # Safety
/// `engine` must be null or a handle from [`prw_engine_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prw_engine_free(engine: *mut PrwEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Replaces the engine's pool with a snapshot file.
///
/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_pool_load(engine: *mut PrwEngine, path: *const c_char) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let state = load_state(Path::new(str_arg(path, "path")?))?;
        if state.dim() != e.engine.embedder().style_dim() {
            return Err(Error::DimensionMismatch {
                expected: e.engine.embedder().style_dim(),
                actual: state.dim(),
            }
            .into());
        }
        *write_lock(e) = state;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_pool_save(engine: *const PrwEngine, path: *const c_char) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        save_state(&read_lock(e), Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Inserts `text` into the pool. `out_node` receives the new or merged-into
/// node id and `out_merged` whether it was a merge. Either may be null.
///
/// # Safety
/// Pointers must be valid or null where allowed; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_pool_insert(
    engine: *mut PrwEngine,
    text: *const c_char,
    out_node: *mut usize,
    out_merged: *mut bool,
) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let text = str_arg(text, "text")?;
        let emb = e.engine.embedder().embed_style(text)?;
        let mut pool = write_lock(e);
        let outcome = pool.mst_insert(text, emb.clone())?;
        pool.remember(text, emb)?;
        if pool.pending_refresh() >= e.engine.config().refresh_batch {
            pool.refresh_stats()?;
        }
        let (id, merged) = match outcome {
            InsertOutcome::NewBranch { id, .. } => (id, false),
            InsertOutcome::Merged { into } => (into, true),
        };
        if !out_node.is_null() {
            out_node.write(id);
        }
        if !out_merged.is_null() {
            out_merged.write(merged);
        }
        Ok(())
    })
}

/// Recomputes the pool's outlier statistics now.
///
/// # Safety
/// `engine` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn prw_pool_refresh_stats(engine: *mut PrwEngine) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        write_lock(e).refresh_stats()?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn prw_pool_len(engine: *const PrwEngine, out: *mut usize) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        write_out(out, read_lock(e).len(), "out")
    })
}

/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_is_outlier(
    engine: *const PrwEngine,
    text: *const c_char,
    out_flag: *mut bool,
    out_avg_distance: *mut f64,
    out_tau: *mut f64,
) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let emb = e.engine.embedder().embed_style(str_arg(text, "text")?)?;
        let v = read_lock(e).is_outlier(&emb)?;
        write_out(out_flag, v.is_outlier, "out_flag")?;
        if !out_avg_distance.is_null() {
            out_avg_distance.write(v.avg_distance);
        }
        if !out_tau.is_null() {
            out_tau.write(v.tau);
        }
        Ok(())
    })
}

/// Detected entities as a JSON array of `{category, surface, start, end}`
/// (character offsets).
///
/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_detect_entities_json(
    engine: *const PrwEngine,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let spans = e.engine.detector().detect_entities(str_arg(text, "text")?);
        write_string(out_json, serde_json::to_string(&spans)?)
    })
}

/// Full prompt for `text` given the current pool.
///
/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_build_prompt(
    engine: *const PrwEngine,
    text: *const c_char,
    out_prompt: *mut *mut c_char,
) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let text = str_arg(text, "text")?;
        let pool = read_lock(e);
        let signals = extract_context(text, &pool, e.engine.detector(), e.engine.embedder())?;
        write_string(out_prompt, build_prompt(&e.engine.config().prompts, &signals, text).full)
    })
}

/// Reward breakdown (JSON) of a raw generation for `source` against the
/// current pool.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_score(
    engine: *const PrwEngine,
    source: *const c_char,
    raw_generation: *const c_char,
    out_json: *mut *mut c_char,
) -> PrwStatus {
    guard(|| {
        let e = engine_arg(engine)?;
        let x = str_arg(source, "source")?;
        let raw = str_arg(raw_generation, "raw_generation")?;
        let pool = read_lock(e);
        let signals = extract_context(x, &pool, e.engine.detector(), e.engine.embedder())?;
        let scorer = Scorer {
            embedder: e.engine.embedder(),
            detector: e.engine.detector(),
            params: e.engine.config().reward,
        };
        let b = scorer.score(x, raw, &signals, &pool)?;
        write_string(out_json, serde_json::to_string(&b)?)
    })
}

/// `{reasoning, rewrite, well_formed}` as JSON.
///
/// # Safety
/// Pointers must be valid; `raw` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_parse_generation(raw: *const c_char, out_json: *mut *mut c_char) -> PrwStatus {
    guard(|| {
        let p = parse_generation(str_arg(raw, "raw")?);
        write_string(out_json, serde_json::to_string(&p)?)
    })
}

/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn prw_length_reward(
    x: *const c_char,
    y: *const c_char,
    alpha: f64,
    out: *mut f64,
) -> PrwStatus {
    guard(|| {
        let r = length_reward(str_arg(x, "x")?, str_arg(y, "y")?, alpha)?;
        write_out(out, r, "out")
    })
}

/// `-ln sigma(beta * delta)`; pass zeros for the reference log-probs to use
/// the policy-only margin.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn prw_dpo_loss(
    logp_chosen: f64,
    logp_rejected: f64,
    ref_logp_chosen: f64,
    ref_logp_rejected: f64,
    beta: f64,
    out: *mut f64,
) -> PrwStatus {
    guard(|| {
        let v = dpo_loss(logp_chosen, logp_rejected, ref_logp_chosen, ref_logp_rejected, beta)?;
        write_out(out, v, "out")
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a pointer returned through an out-parameter of this
/// library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn prw_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
