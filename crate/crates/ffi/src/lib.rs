//! C ABI for trilingua.
//!
//! Conventions:
//! - Every fallible function returns a [`TrlStatus`]; results go through out
//!   pointers. On failure [`trl_last_error`] describes the problem.
//! - Strings are NUL-terminated UTF-8. Strings returned through `char **`
//!   out pointers are owned by the caller and released with
//!   [`trl_string_free`]. Strings returned directly as `const char *` are
//!   borrowed from a handle and live as long as it does.
//! - Handles are opaque and released with their `_free` function. Passing
//!   NULL to a `_free` function is a no-op.
//! - Panics never cross the boundary; they surface as `TRL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use trilingua::corpus::{load_corpus, CorpusError, DialogueRecord};
use trilingua::metrics::{greedy_embed_f1, metric_tokenize, token_f1, win_rate};
use trilingua::mockserve::{serve_mock, MockServer};
use trilingua::pipeline::{Pipeline, PipelineConfig, RunError, RunOptions};
use trilingua::postprocess::{parse_knv, serialize_knv, KnvDoc};
use trilingua::preprocess::normalize_text;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    InvalidCorpus = 5,
    InvalidConfig = 6,
    Backend = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(TrlStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn guard(body: impl FnOnce() -> FfiResult<()>) -> TrlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TrlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TrlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure(TrlStatus::NullArgument, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TrlStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    // SAFETY: the caller promises a valid, writable pointer when non-NULL.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(TrlStatus::NullArgument, format!("{name} is NULL")))
}

fn to_c(s: &str) -> CString {
    CString::new(s.replace('\0', " ")).expect("NULs removed")
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next trilingua call on the same thread.
#[no_mangle]
pub extern "C" fn trl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned through a `char **` out pointer.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn trl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Unicode-normalizes `input` the way the pipeline does before rendering.
///
/// # Safety
/// `input` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn trl_normalize_text(input: *const c_char, out: *mut *mut c_char) -> TrlStatus {
    guard(|| {
        let text = str_arg(input, "input")?;
        *out_arg(out, "out")? = to_c(&normalize_text(text)).into_raw();
        Ok(())
    })
}

/// Token F1 between a prediction and a reference. `english` selects
/// lowercasing and article removal.
///
/// # Safety
/// `pred` and `gold` must be NUL-terminated strings; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_token_f1(pred: *const c_char, gold: *const c_char, english: bool, out: *mut f64) -> TrlStatus {
    guard(|| {
        let p = metric_tokenize(str_arg(pred, "pred")?, english);
        let g = metric_tokenize(str_arg(gold, "gold")?, english);
        *out_arg(out, "out")? = token_f1(&p, &g);
        Ok(())
    })
}

/// Greedy cosine-matching F1 over row-major `n x dim` matrices.
///
/// # Safety
/// `cand` must hold `n_cand * dim` doubles and `refs` `n_ref * dim`.
#[no_mangle]
pub unsafe extern "C" fn trl_greedy_embed_f1(
    cand: *const f64,
    n_cand: usize,
    refs: *const f64,
    n_ref: usize,
    dim: usize,
    out_precision: *mut f64,
    out_recall: *mut f64,
    out_f1: *mut f64,
) -> TrlStatus {
    guard(|| {
        if cand.is_null() || refs.is_null() {
            return Err(Failure(TrlStatus::NullArgument, "vector buffer is NULL".into()));
        }
        if dim == 0 {
            return Err(Failure(TrlStatus::InvalidArgument, "dim must be positive".into()));
        }
        let rows = |p: *const f64, n: usize| -> Vec<Vec<f64>> {
            std::slice::from_raw_parts(p, n * dim).chunks(dim).map(<[f64]>::to_vec).collect()
        };
        let prf = greedy_embed_f1(&rows(cand, n_cand), &rows(refs, n_ref))
            .map_err(|e| Failure(TrlStatus::InvalidArgument, e.to_string()))?;
        *out_arg(out_precision, "out_precision")? = prf.precision;
        *out_arg(out_recall, "out_recall")? = prf.recall;
        *out_arg(out_f1, "out_f1")? = prf.f1;
        Ok(())
    })
}

/// Win percentage in tenths (867 means 86.7%), rounded half-up.
///
/// # Safety
/// `out_tenths` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trl_win_rate(wins: u64, total: u64, out_tenths: *mut u64) -> TrlStatus {
    guard(|| {
        let rate = win_rate(wins, total).map_err(|e| Failure(TrlStatus::InvalidArgument, e.to_string()))?;
        *out_arg(out_tenths, "out_tenths")? = rate.tenths();
        Ok(())
    })
}

/// Parsed key-value document.
pub struct TrlKnvDoc {
    doc: KnvDoc,
    keys: Vec<CString>,
    values: Vec<CString>,
    codes: Vec<CString>,
    raw_lines: Vec<CString>,
}

/// Parses key-value text. Malformed lines become diagnostics, never errors.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_parse(text: *const c_char, out: *mut *mut TrlKnvDoc) -> TrlStatus {
    guard(|| {
        let doc = parse_knv(str_arg(text, "text")?);
        let handle = TrlKnvDoc {
            keys: doc.pairs.iter().map(|p| to_c(p.key())).collect(),
            values: doc.pairs.iter().map(|p| to_c(p.value())).collect(),
            codes: doc.diagnostics.iter().map(|d| to_c(d.code.as_str())).collect(),
            raw_lines: doc.diagnostics.iter().map(|d| to_c(&d.raw_line)).collect(),
            doc,
        };
        *out_arg(out, "out")? = Box::into_raw(Box::new(handle));
        Ok(())
    })
}

/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_pair_count(doc: *const TrlKnvDoc) -> usize {
    doc.as_ref().map_or(0, |d| d.keys.len())
}

fn borrowed(list: Option<&Vec<CString>>, index: usize) -> *const c_char {
    list.and_then(|l| l.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// Key of pair `index`, or NULL when out of range.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_pair_key(doc: *const TrlKnvDoc, index: usize) -> *const c_char {
    borrowed(doc.as_ref().map(|d| &d.keys), index)
}

/// Value of pair `index`, or NULL when out of range.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_pair_value(doc: *const TrlKnvDoc, index: usize) -> *const c_char {
    borrowed(doc.as_ref().map(|d| &d.values), index)
}

/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_diagnostic_count(doc: *const TrlKnvDoc) -> usize {
    doc.as_ref().map_or(0, |d| d.codes.len())
}

/// Code of diagnostic `index` (`preamble`, `orphan_line`, `dup_key`,
/// `empty_key`), or NULL when out of range.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_diagnostic_code(doc: *const TrlKnvDoc, index: usize) -> *const c_char {
    borrowed(doc.as_ref().map(|d| &d.codes), index)
}

/// Raw input line of diagnostic `index`, or NULL when out of range.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_diagnostic_line(doc: *const TrlKnvDoc, index: usize) -> *const c_char {
    borrowed(doc.as_ref().map(|d| &d.raw_lines), index)
}

/// 1-based input line number of diagnostic `index`, or 0 when out of range.
///
/// # Safety
/// `doc` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_diagnostic_line_no(doc: *const TrlKnvDoc, index: usize) -> usize {
    doc.as_ref()
        .and_then(|d| d.doc.diagnostics.get(index))
        .map_or(0, |d| d.line_no)
}

/// Serializes the parsed pairs, one `key: value` line each.
///
/// # Safety
/// `doc` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_serialize(doc: *const TrlKnvDoc, out: *mut *mut c_char) -> TrlStatus {
    guard(|| {
        let doc = doc
            .as_ref()
            .ok_or_else(|| Failure(TrlStatus::NullArgument, "doc is NULL".into()))?;
        *out_arg(out, "out")? = to_c(&serialize_knv(&doc.doc)).into_raw();
        Ok(())
    })
}

/// # Safety
/// `doc` must be NULL or a handle from [`trl_knv_parse`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn trl_knv_free(doc: *mut TrlKnvDoc) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::Io { .. } => Failure(TrlStatus::Io, e.to_string()),
        other => Failure(TrlStatus::InvalidCorpus, other.to_string()),
    }
}

/// Validates a corpus file and reports its record count.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_records` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_validate_corpus(path: *const c_char, out_records: *mut usize) -> TrlStatus {
    guard(|| {
        let records = load_corpus(str_arg(path, "path")?).map_err(corpus_failure)?;
        *out_arg(out_records, "out_records")? = records.len();
        Ok(())
    })
}

/// Configured pipeline, plus the in-process mock when the config asks for one.
pub struct TrlPipeline {
    pipeline: Pipeline,
    _mock: Option<MockServer>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrlRunSummary {
    pub total: usize,
    pub processed: usize,
    pub skipped: usize,
    pub failed: usize,
    pub interrupted: bool,
}

/// Builds a pipeline from a TOML or JSON config file.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_pipeline_new(config_path: *const c_char, out: *mut *mut TrlPipeline) -> TrlStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let invalid = |e: &dyn std::fmt::Display| Failure(TrlStatus::InvalidConfig, e.to_string());
        let mut config = PipelineConfig::from_file(path).map_err(|e| invalid(&e))?;
        let mock = if config.uses_mock() {
            let server = serve_mock(config.mock.clone().unwrap_or_default(), 0)
                .map_err(|e| Failure(TrlStatus::Backend, e.to_string()))?;
            config.bind_mock(&server.base_url());
            Some(server)
        } else {
            None
        };
        let pipeline = Pipeline::new(config).map_err(|e| invalid(&e))?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(TrlPipeline { pipeline, _mock: mock }));
        Ok(())
    })
}

/// Runs a corpus file, checkpointing and writing ordered results to
/// `out_path`. `out_summary` may be NULL.
///
/// # Safety
/// `pipeline` must be a live handle; paths NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn trl_pipeline_run(
    pipeline: *const TrlPipeline,
    corpus_path: *const c_char,
    out_path: *const c_char,
    out_summary: *mut TrlRunSummary,
) -> TrlStatus {
    guard(|| {
        let handle = pipeline
            .as_ref()
            .ok_or_else(|| Failure(TrlStatus::NullArgument, "pipeline is NULL".into()))?;
        let records = load_corpus(str_arg(corpus_path, "corpus_path")?).map_err(corpus_failure)?;
        let out = PathBuf::from(str_arg(out_path, "out_path")?);
        let summary = handle
            .pipeline
            .run_records(&records, &out, RunOptions::default())
            .map_err(|e| match e {
                RunError::Corpus(c) => corpus_failure(c),
                other => Failure(TrlStatus::Io, other.to_string()),
            })?;
        if let Some(s) = out_summary.as_mut() {
            *s = TrlRunSummary {
                total: summary.total,
                processed: summary.processed,
                skipped: summary.skipped,
                failed: summary.failed,
                interrupted: summary.interrupted,
            };
        }
        Ok(())
    })
}

/// Runs one record given as a JSON object and returns the result as JSON.
/// Backend failures are reported inside the result, not as a status.
///
/// # Safety
/// `pipeline` must be a live handle; `record_json` a NUL-terminated string;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trl_pipeline_run_record(
    pipeline: *const TrlPipeline,
    record_json: *const c_char,
    out: *mut *mut c_char,
) -> TrlStatus {
    guard(|| {
        let handle = pipeline
            .as_ref()
            .ok_or_else(|| Failure(TrlStatus::NullArgument, "pipeline is NULL".into()))?;
        let record: DialogueRecord = serde_json::from_str(str_arg(record_json, "record_json")?)
            .map_err(|e| Failure(TrlStatus::InvalidCorpus, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Failure(TrlStatus::InvalidCorpus, e.to_string()))?;
        let result = handle.pipeline.run_record(&record);
        let json = serde_json::to_string(&result).map_err(|e| Failure(TrlStatus::Io, e.to_string()))?;
        *out_arg(out, "out")? = to_c(&json).into_raw();
        Ok(())
    })
}

/// # Safety
/// `pipeline` must be NULL or a handle from [`trl_pipeline_new`] not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn trl_pipeline_free(pipeline: *mut TrlPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
