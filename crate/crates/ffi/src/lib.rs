//! C ABI over `dam-core`.
//!
//! Every function returns a [`DamStatus`]; results come back through out
//! pointers. Stores and engines are opaque handles owned by the caller and
//! released with their `_free` function. Strings returned by the library are
//! NUL-terminated UTF-8 and must be released with [`dam_string_free`]. After a
//! failed call, [`dam_last_error_message`] describes the error on the calling
//! thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dam_core::agents::{Engine, Pipeline};
use dam_core::belief::{bayes_update, belief_entropy, SentimentProfile};
use dam_core::config::Config;
use dam_core::error::Error;
use dam_core::store::MemoryStore;

/// Result codes shared by every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    NotFound = 4,
    Io = 5,
    Corrupt = 6,
    Provider = 7,
    Panic = 8,
}

/// A memory store.
pub struct DamStore {
    inner: MemoryStore,
}

/// A conversation pipeline: providers, configuration and its own store.
pub struct DamEngine {
    inner: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(DamStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        let status = if e.is_store_corruption() {
            DamStatus::Corrupt
        } else if e.is_provider() {
            DamStatus::Provider
        } else {
            match e {
                Error::Io(_) => DamStatus::Io,
                Error::NotFound(_) => DamStatus::NotFound,
                _ => DamStatus::InvalidArgument,
            }
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DamStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_error();
            DamStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dam-ffi");
            DamStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(DamStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_json<T: serde::Serialize + ?Sized>(out: *mut *mut c_char, value: &T) -> Result<(), Fail> {
    let text = serde_json::to_string(value).map_err(|e| Fail(DamStatus::InvalidArgument, e.to_string()))?;
    let c = CString::new(text).map_err(|e| Fail(DamStatus::InvalidArgument, e.to_string()))?;
    write_out(out, c.into_raw(), "out")
}

unsafe fn handle<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static string. Never free it.
#[no_mangle]
pub extern "C" fn dam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn dam_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Release a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn dam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Shannon entropy in bits of a profile given as three confidences, which
/// are normalized first.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn dam_belief_entropy(positive: f64, negative: f64, neutral: f64, out: *mut f64) -> DamStatus {
    guard(|| {
        let h = belief_entropy(&SentimentProfile::new(positive, negative, neutral))?;
        write_out(out, h, "out")
    })
}

/// Strength-weighted update of `prior` (weight `prior_weight`) with
/// `evidence` (strength `strength`). Profiles are arrays of three doubles in
/// positive, negative, neutral order.
///
/// # Safety
/// `prior`, `evidence` and `out_profile` must point to three doubles;
/// `out_weight` to one.
#[no_mangle]
pub unsafe extern "C" fn dam_bayes_update(
    prior: *const f64,
    prior_weight: f64,
    evidence: *const f64,
    strength: f64,
    out_profile: *mut f64,
    out_weight: *mut f64,
) -> DamStatus {
    guard(|| {
        if prior.is_null() || evidence.is_null() {
            return Err(null("profile"));
        }
        if out_profile.is_null() || out_weight.is_null() {
            return Err(null("out"));
        }
        let p = SentimentProfile::from_array(*prior.cast::<[f64; 3]>());
        let e = SentimentProfile::from_array(*evidence.cast::<[f64; 3]>());
        let (post, w) = bayes_update(&p, prior_weight, &e, strength)?;
        out_profile.cast::<[f64; 3]>().write(post.to_array());
        out_weight.write(w);
        Ok(())
    })
}

/// An empty store for embeddings of dimension `dim`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_store_new(dim: usize, out: *mut *mut DamStore) -> DamStatus {
    guard(|| {
        if dim == 0 {
            return Err(Fail(DamStatus::InvalidArgument, "dimension must be positive".into()));
        }
        let s = Box::new(DamStore { inner: MemoryStore::new(dim, Config::default().fingerprint()) });
        write_out(out, Box::into_raw(s), "out")
    })
}

/// Load a store file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_store_load(path: *const c_char, out: *mut *mut DamStore) -> DamStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let inner = MemoryStore::load(Path::new(path))?;
        write_out(out, Box::into_raw(Box::new(DamStore { inner })), "out")
    })
}

/// Write a store file atomically.
///
/// # Safety
/// `store` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dam_store_save(store: *mut DamStore, path: *const c_char) -> DamStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let path = str_arg(path, "path")?;
        s.inner.save(Path::new(path))?;
        Ok(())
    })
}

/// # Safety
/// `store` must be a live handle or NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dam_store_free(store: *mut DamStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_store_len(store: *mut DamStore, out: *mut usize) -> DamStatus {
    guard(|| {
        let s = handle(store, "store")?;
        write_out(out, s.inner.len(), "out")
    })
}

/// Sum of belief entropy over the units of the store.
///
/// # Safety
/// `store` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_store_global_entropy(store: *mut DamStore, out: *mut f64) -> DamStatus {
    guard(|| {
        let s = handle(store, "store")?;
        write_out(out, s.inner.global_entropy(), "out")
    })
}

/// All units as a JSON array, in key order.
///
/// # Safety
/// `store` must be a live handle and `out` a valid pointer. Free the result
/// with `dam_string_free`.
#[no_mangle]
pub unsafe extern "C" fn dam_store_units_json(store: *mut DamStore, out: *mut *mut c_char) -> DamStatus {
    guard(|| {
        let s = handle(store, "store")?;
        let units: Vec<_> = s.inner.units().collect();
        write_json(out, &units)
    })
}

/// An engine with an empty store. `config_toml` may be NULL for the default
/// (mock) configuration. `DAM_*` environment variables are not consulted.
///
/// # Safety
/// `config_toml` must be NULL or a NUL-terminated string; `out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_new(config_toml: *const c_char, out: *mut *mut DamEngine) -> DamStatus {
    guard(|| {
        let config = if config_toml.is_null() {
            Config::default()
        } else {
            Config::from_toml(str_arg(config_toml, "config_toml")?)?
        };
        let engine = Engine::from_config(config)?;
        let store = engine.new_store();
        let inner = Pipeline::new(engine, store)?;
        write_out(out, Box::into_raw(Box::new(DamEngine { inner })), "out")
    })
}

/// # Safety
/// `engine` must be a live handle or NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_free(engine: *mut DamEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Run one conversation turn. The outcome (response, routing, actions,
/// warnings, objective) is returned as a JSON object.
///
/// # Safety
/// `engine` must be a live handle, `text` a NUL-terminated string and `out`
/// a valid pointer. Free the result with `dam_string_free`.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_turn(
    engine: *mut DamEngine,
    text: *const c_char,
    out: *mut *mut c_char,
) -> DamStatus {
    guard(|| {
        let e = handle(engine, "engine")?;
        let text = str_arg(text, "text")?;
        if text.trim().is_empty() {
            return Err(Fail(DamStatus::InvalidArgument, "text is empty".into()));
        }
        let outcome = e.inner.turn(text)?;
        write_json(out, &outcome)
    })
}

/// Compression pass over the engine's whole store; the actions are returned
/// as a JSON array.
///
/// # Safety
/// `engine` must be a live handle and `out` a valid pointer. Free the result
/// with `dam_string_free`.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_compact(engine: *mut DamEngine, out: *mut *mut c_char) -> DamStatus {
    guard(|| {
        let e = handle(engine, "engine")?;
        let actions = e.inner.compact()?;
        write_json(out, &actions)
    })
}

/// A copy of the engine's current store as a new handle.
///
/// # Safety
/// `engine` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_store(engine: *mut DamEngine, out: *mut *mut DamStore) -> DamStatus {
    guard(|| {
        let e = handle(engine, "engine")?;
        let s = Box::new(DamStore { inner: e.inner.store().clone() });
        write_out(out, Box::into_raw(s), "out")
    })
}

/// Replace the engine's store with a copy of `store`.
///
/// # Safety
/// `engine` and `store` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn dam_engine_set_store(engine: *mut DamEngine, store: *mut DamStore) -> DamStatus {
    guard(|| {
        let e = handle(engine, "engine")?;
        let s = handle(store, "store")?;
        let dim = e.inner.engine().embedder.dimension();
        if s.inner.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.inner.dim() }.into());
        }
        let p = e.inner.clone().with_store(s.inner.clone());
        e.inner = p;
        Ok(())
    })
}
