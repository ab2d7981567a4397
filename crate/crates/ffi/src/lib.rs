//! C ABI over `stqa-core`.
//!
//! Every fallible function returns an [`StqaStatus`]; on failure the message
//! is available from [`stqa_last_error`] on the same thread until the next
//! call. Strings handed out by the library are owned by the caller and must be
//! released with [`stqa_string_free`]. Model handles are opaque and released
//! with [`stqa_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use stqa::checkpoint::Checkpoint;
use stqa::config::RunConfig;
use stqa::corpus::{parse_record, Split};
use stqa::metrics::{anls_score, levenshtein, normalized_levenshtein, MetricsConfig};
use stqa::model::{prepare_sample, Model};
use stqa::retrieval::{build_index, load_qa_pairs, RetrievalIndex};
use stqa::train::additional_texts;
use stqa::Error;

/// Status codes. `Ok` is zero; everything else is an error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StqaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    MalformedRecord = 4,
    InvalidArgument = 5,
    Checkpoint = 6,
    ConfigMismatch = 7,
    Config = 8,
    Json = 9,
    Internal = 10,
    Panic = 11,
}

/// Opaque model handle.
pub struct StqaModel {
    model: Model,
    config: RunConfig,
    index: Option<RetrievalIndex>,
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

fn status_of(err: &Error) -> StqaStatus {
    match err {
        Error::Io { .. } => StqaStatus::Io,
        Error::Record { .. } | Error::DuplicateSampleId { .. } => StqaStatus::MalformedRecord,
        Error::Invalid { .. } | Error::Empty(_) | Error::Shape(_) => StqaStatus::InvalidArgument,
        Error::Checkpoint(_) => StqaStatus::Checkpoint,
        Error::ConfigMismatch { .. } => StqaStatus::ConfigMismatch,
        Error::Config(_) => StqaStatus::Config,
        Error::Json(_) => StqaStatus::Json,
        _ => StqaStatus::Internal,
    }
}

struct Failure(StqaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, records any error or panic, and converts the result to a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> StqaStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => StqaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            StqaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(StqaStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(StqaStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(StqaStatus::NullArgument, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|_| Failure(StqaStatus::Internal, "string contains a NUL byte".into()))
}

/// Loads a checkpoint. On success `*out` receives a handle to free with `stqa_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_model_load(path: *const c_char, out: *mut *mut StqaModel) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let ck = Checkpoint::load(path)?;
        let config = ck.config.clone();
        let model = ck.to_model_with(&config)?;
        let index = match (&config.retrieval_corpus, config.dictionary_mode) {
            (Some(p), false) => Some(build_index(&load_qa_pairs(p)?)?),
            _ => None,
        };
        *out = Box::into_raw(Box::new(StqaModel { model, config, index }));
        Ok(())
    })
}

/// Releases a handle from `stqa_model_load`. Null is ignored.
///
/// # Safety
/// `model` must come from `stqa_model_load` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn stqa_model_free(model: *mut StqaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hex SHA-256 of the model-relevant config keys.
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_model_config_hash(model: *const StqaModel, out: *mut *mut c_char) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let m = model.as_ref().ok_or_else(|| Failure(StqaStatus::NullArgument, "`model` is null".into()))?;
        *out = to_c_string(m.config.model_hash())?;
        Ok(())
    })
}

/// Predicts one sample given as a single JSON record; `*out` receives the
/// prediction as a JSON object (sample_id, answer, score, pool, probabilities).
///
/// # Safety
/// `model` must be a live handle; `sample_json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_predict(model: *const StqaModel, sample_json: *const c_char, out: *mut *mut c_char) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ptr::null_mut();
        let m = model.as_ref().ok_or_else(|| Failure(StqaStatus::NullArgument, "`model` is null".into()))?;
        let line = str_arg(sample_json, "sample_json")?;
        let (sample, _) = parse_record(line, 1, Split::Test)?;
        let extra = additional_texts(&sample, &m.config, m.index.as_ref());
        let prep = prepare_sample(&sample, m.config.dictionary_mode, &extra)?;
        let pred = m.model.predict(&prep)?;
        *out = to_c_string(pred.to_json_line())?;
        Ok(())
    })
}

/// ANLS of one prediction against a JSON array of gold answers (tau 0.5, lowercased).
///
/// # Safety
/// Both strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_anls(prediction: *const c_char, gold_json: *const c_char, out: *mut f64) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        let pred = str_arg(prediction, "prediction")?;
        let gold: Vec<String> = serde_json::from_str(str_arg(gold_json, "gold_json")?).map_err(Error::from)?;
        if gold.is_empty() {
            return Err(Failure(StqaStatus::InvalidArgument, "gold answer list is empty".into()));
        }
        *out = anls_score(pred, &gold, &MetricsConfig::default());
        Ok(())
    })
}

/// Unit-cost edit distance in Unicode scalar values.
///
/// # Safety
/// Both strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_levenshtein(a: *const c_char, b: *const c_char, out: *mut usize) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = levenshtein(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

/// Edit distance divided by the longer length; 0 for two empty strings.
///
/// # Safety
/// Both strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn stqa_normalized_levenshtein(a: *const c_char, b: *const c_char, out: *mut f64) -> StqaStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = normalized_levenshtein(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

/// Message of the last failed call on this thread, or null. Owned by the
/// library; valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn stqa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned through an `out` parameter. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn stqa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn stqa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
