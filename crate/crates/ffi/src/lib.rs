//! C interface to the chat backend.
//!
//! Every call returns an [`OdaStatus`]. Strings handed out by the library are
//! NUL-terminated UTF-8 owned by the caller and must be released with
//! [`oda_string_free`]. The message for the most recent failure on a handle
//! is available from [`oda_last_error`].

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use oda_core::config::AppConfig;
use oda_core::datalake::DatalakeConfig;
use oda_core::ontology::Vocabulary;
use oda_core::orchestrator::{Backend, ChatError, ChatRequest};
use oda_core::query_pipeline::{QueryError, Refiner};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NoDataset = 4,
    /// The question cannot be answered; see the error message.
    Rejected = 5,
    /// The datalake, graph store or LLM endpoint failed.
    Unavailable = 6,
    NotFound = 7,
    Internal = 8,
}

/// Opaque backend handle.
pub struct OdaBackend {
    rt: tokio::runtime::Runtime,
    backend: Backend,
    last_error: CString,
}

impl OdaBackend {
    fn fail(&mut self, status: OdaStatus, message: impl Into<String>) -> OdaStatus {
        let msg = message.into().replace('\0', " ");
        self.last_error = CString::new(msg).unwrap_or_default();
        status
    }
}

fn chat_status(e: &ChatError) -> OdaStatus {
    match e {
        ChatError::NoDatasetSelected => OdaStatus::NoDataset,
        ChatError::InvalidRequest(_) => OdaStatus::InvalidArgument,
        ChatError::ResultExpired(_) => OdaStatus::NotFound,
        e if e.is_rejection() => OdaStatus::Rejected,
        ChatError::DatalakeUnavailable(_) | ChatError::Store(_) | ChatError::Generation(_) | ChatError::Query(_) => {
            OdaStatus::Unavailable
        }
        _ => OdaStatus::Internal,
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, OdaStatus> {
    if p.is_null() {
        return Err(OdaStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| OdaStatus::InvalidUtf8)
}

unsafe fn hand_out(out: *mut *mut c_char, s: String) -> OdaStatus {
    match CString::new(s) {
        Ok(c) => {
            *out = c.into_raw();
            OdaStatus::Ok
        }
        Err(_) => OdaStatus::Internal,
    }
}

fn guarded(f: impl FnOnce() -> OdaStatus) -> OdaStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(OdaStatus::Internal)
}

/// Creates a backend from TOML config text (NULL for defaults).
///
/// # Safety
/// `config_toml` is NULL or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oda_backend_new(config_toml: *const c_char, out: *mut *mut OdaBackend) -> OdaStatus {
    if out.is_null() {
        return OdaStatus::NullArgument;
    }
    *out = ptr::null_mut();
    guarded(|| {
        let text = if config_toml.is_null() {
            ""
        } else {
            match read_str(config_toml) {
                Ok(s) => s,
                Err(s) => return s,
            }
        };
        let Ok(config) = AppConfig::from_parts(text, std::iter::empty()) else {
            return OdaStatus::InvalidArgument;
        };
        let Ok(rt) = tokio::runtime::Builder::new_multi_thread().enable_all().build() else {
            return OdaStatus::Internal;
        };
        let backend = match rt.block_on(async { Backend::new(config) }) {
            Ok(b) => b,
            Err(e) => return chat_status(&e),
        };
        *out = Box::into_raw(Box::new(OdaBackend { rt, backend, last_error: CString::default() }));
        OdaStatus::Ok
    })
}

/// # Safety
/// `backend` is NULL or a handle from [`oda_backend_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oda_backend_free(backend: *mut OdaBackend) {
    if !backend.is_null() {
        drop(Box::from_raw(backend));
    }
}

/// Message of the last failed call on `backend`; empty when none. Valid
/// until the next call on the same handle.
///
/// # Safety
/// `backend` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn oda_last_error(backend: *const OdaBackend) -> *const c_char {
    match backend.as_ref() {
        Some(b) => b.last_error.as_ptr(),
        None => c"".as_ptr(),
    }
}

/// Selects a local columnar dataset: `root` holds the topology and
/// metadata, `root/subset` the telemetry.
///
/// # Safety
/// `backend` is a live handle; `root` and `subset` are valid C strings.
#[no_mangle]
pub unsafe extern "C" fn oda_select_dataset(backend: *mut OdaBackend, root: *const c_char, subset: *const c_char) -> OdaStatus {
    let Some(b) = backend.as_mut() else {
        return OdaStatus::NullArgument;
    };
    let (root, subset) = match (read_str(root), read_str(subset)) {
        (Ok(r), Ok(s)) => (PathBuf::from(r), s.to_owned()),
        (Err(e), _) | (_, Err(e)) => return b.fail(e, "root and subset must be UTF-8 strings"),
    };
    guarded(|| {
        let ds = DatalakeConfig::columnar(root, subset);
        match b.rt.block_on(b.backend.select_dataset(ds)) {
            Ok(_) => OdaStatus::Ok,
            Err(e) => b.fail(chat_status(&e), e.to_string()),
        }
    })
}

/// Answers `question`; on success `*out_json` receives the response as JSON.
///
/// # Safety
/// `backend` is a live handle; `question` is a valid C string; `out_json`
/// is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oda_ask(backend: *mut OdaBackend, question: *const c_char, out_json: *mut *mut c_char) -> OdaStatus {
    let Some(b) = backend.as_mut() else {
        return OdaStatus::NullArgument;
    };
    if out_json.is_null() {
        return b.fail(OdaStatus::NullArgument, "out_json is NULL");
    }
    *out_json = ptr::null_mut();
    let question = match read_str(question) {
        Ok(q) => q.to_owned(),
        Err(e) => return b.fail(e, "question must be a UTF-8 string"),
    };
    guarded(|| match b.rt.block_on(b.backend.chat(ChatRequest::new(question))) {
        Ok(resp) => hand_out(out_json, serde_json::to_string(&resp).expect("response serializes")),
        Err(e) => b.fail(chat_status(&e), e.to_string()),
    })
}

/// Full CSV of an earlier answer, by its response id.
///
/// # Safety
/// `backend` is a live handle; `id` is a valid C string; `out_csv` is a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oda_result_csv(backend: *mut OdaBackend, id: *const c_char, out_csv: *mut *mut c_char) -> OdaStatus {
    let Some(b) = backend.as_mut() else {
        return OdaStatus::NullArgument;
    };
    if out_csv.is_null() {
        return b.fail(OdaStatus::NullArgument, "out_csv is NULL");
    }
    *out_csv = ptr::null_mut();
    let id = match read_str(id) {
        Ok(s) => s,
        Err(e) => return b.fail(e, "id must be a UTF-8 string"),
    };
    match b.backend.export_csv(id) {
        Ok(bytes) => match String::from_utf8(bytes) {
            Ok(s) => hand_out(out_csv, s),
            Err(_) => b.fail(OdaStatus::Internal, "csv is not UTF-8"),
        },
        Err(e) => b.fail(chat_status(&e), e.to_string()),
    }
}

/// Runs the query refinement rules over raw generator output. The report
/// (refined text, applied rules, unresolved issues) is written as JSON.
///
/// # Safety
/// `raw` is a valid C string; `out_json` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn oda_refine(raw: *const c_char, out_json: *mut *mut c_char) -> OdaStatus {
    if out_json.is_null() {
        return OdaStatus::NullArgument;
    }
    *out_json = ptr::null_mut();
    let raw = match read_str(raw) {
        Ok(s) => s,
        Err(e) => return e,
    };
    guarded(|| match Refiner::all_rules(Vocabulary::oda()).refine(raw) {
        Ok(report) => hand_out(out_json, serde_json::to_string(&report).expect("report serializes")),
        Err(QueryError::Unrefinable) => OdaStatus::Rejected,
        Err(_) => OdaStatus::Internal,
    })
}

/// # Safety
/// `s` is NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn oda_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn oda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
