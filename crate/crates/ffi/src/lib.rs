//! C ABI over the `lemmata` library.
//!
//! Prover factories and sessions are opaque handles created and released by
//! the functions below. Every fallible call returns a [`LemmataStatus`]; the
//! message for the most recent failure on the calling thread is available
//! from [`lemmata_last_error`]. Strings handed out by the library are
//! NUL-terminated UTF-8 and must be released with [`lemmata_string_free`].
//! Structured results (goal lists, sentence lists, certification reports)
//! are returned as JSON.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lemmata::bench::analytics::{self, PropertyType, UtilityCategory};
use lemmata::model::sentence::split_sentences;
use lemmata::model::terms::count_terms;
use lemmata::prover::coqtop::CoqtopFactory;
use lemmata::prover::mock::{MockFactory, MockScript};
use lemmata::prover::{certify_file, certify_with_trusted_prefix, ProverFactory, Session, SessionError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmataStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    ProverUnavailable = 4,
    ProverFailure = 5,
    ParseError = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmataPropertyType {
    Loop = 0,
    Rte = 1,
    Assertion = 2,
    Contract = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmataUtilityCategory {
    Memory = 0,
    Simplification = 1,
    Typing = 2,
    Arithmetic = 3,
    DataStructure = 4,
    String = 5,
    Others = 6,
}

impl From<PropertyType> for LemmataPropertyType {
    fn from(p: PropertyType) -> Self {
        match p {
            PropertyType::Loop => LemmataPropertyType::Loop,
            PropertyType::Rte => LemmataPropertyType::Rte,
            PropertyType::Assertion => LemmataPropertyType::Assertion,
            PropertyType::Contract => LemmataPropertyType::Contract,
        }
    }
}

impl From<UtilityCategory> for LemmataUtilityCategory {
    fn from(c: UtilityCategory) -> Self {
        match c {
            UtilityCategory::Memory => LemmataUtilityCategory::Memory,
            UtilityCategory::Simplification => LemmataUtilityCategory::Simplification,
            UtilityCategory::Typing => LemmataUtilityCategory::Typing,
            UtilityCategory::Arithmetic => LemmataUtilityCategory::Arithmetic,
            UtilityCategory::DataStructure => LemmataUtilityCategory::DataStructure,
            UtilityCategory::String => LemmataUtilityCategory::String,
            UtilityCategory::Others => LemmataUtilityCategory::Others,
        }
    }
}

/// Opaque prover factory.
pub struct LemmataProver {
    factory: Box<dyn ProverFactory>,
}

/// Opaque prover session. Borrows nothing from the factory that started it.
pub struct LemmataSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LemmataStatus, String);

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let status = match e {
            SessionError::BackendUnavailable(_) => LemmataStatus::ProverUnavailable,
            SessionError::Parse(_) => LemmataStatus::ParseError,
            _ => LemmataStatus::ProverFailure,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, recording failures and panics for [`lemmata_last_error`].
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LemmataStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LemmataStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LemmataStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(LemmataStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LemmataStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure(LemmataStatus::NullPointer, format!("{what} is null")))
}

fn owned(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(LemmataStatus::InvalidArgument, "result contains a NUL byte".into()))
}

fn json(value: &impl serde::Serialize) -> Result<*mut c_char, Failure> {
    owned(serde_json::to_string(value).map_err(|e| Failure(LemmataStatus::InvalidArgument, e.to_string()))?)
}

/// Message of the most recent failure on this thread, or null after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lemmata_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and must not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lemmata_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version, statically allocated.
#[no_mangle]
pub extern "C" fn lemmata_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version"),
    };
    VERSION.as_ptr()
}

/// Factory replaying a mock script given as JSON text.
///
/// # Safety
/// `script_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_prover_new_mock(
    script_json: *const c_char,
    out: *mut *mut LemmataProver,
) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let script = MockScript::from_json(text(script_json, "script_json")?)?;
        *slot = Box::into_raw(Box::new(LemmataProver { factory: Box::new(MockFactory::new(script)) }));
        Ok(())
    })
}

/// Factory for an interactive prover process. A null `program` means
/// `$LEMMATA_COQTOP` or `coqtop` from `PATH`. Nothing is started until a
/// session is.
///
/// # Safety
/// `program` must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_prover_new_coqtop(
    program: *const c_char,
    out: *mut *mut LemmataProver,
) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let factory =
            if program.is_null() { CoqtopFactory::from_env() } else { CoqtopFactory::new(text(program, "program")?) };
        *slot = Box::into_raw(Box::new(LemmataProver { factory: Box::new(factory) }));
        Ok(())
    })
}

/// # Safety
/// `prover` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lemmata_prover_free(prover: *mut LemmataProver) {
    if !prover.is_null() {
        drop(Box::from_raw(prover));
    }
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Failure> {
    let slot = out(p, "out")?;
    *slot = ptr::null_mut();
    Ok(slot)
}

unsafe fn prover<'a>(p: *const LemmataProver) -> Result<&'a LemmataProver, Failure> {
    p.as_ref().ok_or_else(|| Failure(LemmataStatus::NullPointer, "prover is null".into()))
}

unsafe fn session<'a>(p: *mut LemmataSession) -> Result<&'a mut LemmataSession, Failure> {
    p.as_mut().ok_or_else(|| Failure(LemmataStatus::NullPointer, "session is null".into()))
}

/// Starts a session and runs `preamble` (may be null).
///
/// # Safety
/// `prover` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_start(
    prover_handle: *const LemmataProver,
    preamble: *const c_char,
    out: *mut *mut LemmataSession,
) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let p = prover(prover_handle)?;
        let preamble = if preamble.is_null() { "" } else { text(preamble, "preamble")? };
        let session = Session::start(p.factory.as_ref(), preamble)?;
        *slot = Box::into_raw(Box::new(LemmataSession { session }));
        Ok(())
    })
}

/// # Safety
/// `session` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_free(session: *mut LemmataSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Executes one sentence. A rejection is not an error: `accepted` is set to
/// false and the session state is unchanged. `message` (may be null)
/// receives the prover's message.
///
/// # Safety
/// `session` must be a live handle; `sentence` NUL-terminated; `accepted`
/// writable; `message` null or writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_exec(
    handle: *mut LemmataSession,
    sentence: *const c_char,
    accepted: *mut bool,
    message: *mut *mut c_char,
) -> LemmataStatus {
    guard(|| {
        let accepted = out(accepted, "accepted")?;
        if !message.is_null() {
            *message = ptr::null_mut();
        }
        let s = session(handle)?;
        let result = s.session.exec(text(sentence, "sentence")?)?;
        *accepted = result.is_accepted();
        if !message.is_null() {
            *message = owned(result.message)?;
        }
        Ok(())
    })
}

/// Number of accepted sentences since the preamble. Depth 0 is the state
/// right after the preamble.
///
/// # Safety
/// `session` must be a live handle; `depth` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_depth(handle: *mut LemmataSession, depth: *mut usize) -> LemmataStatus {
    guard(|| {
        *out(depth, "depth")? = session(handle)?.session.depth();
        Ok(())
    })
}

/// Returns to the state reached after `depth` accepted sentences.
///
/// # Safety
/// `session` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_rollback(handle: *mut LemmataSession, depth: usize) -> LemmataStatus {
    guard(|| {
        let s = session(handle)?;
        let token = *s.session.history().get(depth).ok_or_else(|| {
            Failure(LemmataStatus::InvalidArgument, format!("depth {depth} exceeds {}", s.session.depth()))
        })?;
        s.session.rollback(token)?;
        Ok(())
    })
}

/// Current goals as a JSON array of strings.
///
/// # Safety
/// `session` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_session_goals(handle: *mut LemmataSession, out: *mut *mut c_char) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        *slot = json(&session(handle)?.session.goals())?;
        Ok(())
    })
}

/// Certifies a whole file in a fresh session. `trusted_prefix` (may be null)
/// is the goal preamble whose assumptions are not counted. The report is a
/// JSON object with `accepted`, `admitted_count`, `axiom_count_added` and
/// `first_error`.
///
/// # Safety
/// `prover` must be a live handle; strings NUL-terminated; `report` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_certify(
    prover_handle: *const LemmataProver,
    file_text: *const c_char,
    trusted_prefix: *const c_char,
    report: *mut *mut c_char,
) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(report)?;
        let p = prover(prover_handle)?;
        let file = text(file_text, "file_text")?;
        let r = if trusted_prefix.is_null() {
            certify_file(p.factory.as_ref(), file)?
        } else {
            certify_with_trusted_prefix(p.factory.as_ref(), text(trusted_prefix, "trusted_prefix")?, file)?
        };
        *slot = json(&r)?;
        Ok(())
    })
}

/// Splits prover source into sentences, as a JSON array of objects with
/// `text`, `start` and `terminated`.
///
/// # Safety
/// `src` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_split_sentences(src: *const c_char, out: *mut *mut c_char) -> LemmataStatus {
    guard(|| {
        let slot = out_ptr(out)?;
        let sentences =
            split_sentences(text(src, "src")?).map_err(|e| Failure(LemmataStatus::ParseError, e.to_string()))?;
        *slot = json(&sentences)?;
        Ok(())
    })
}

/// Number of terms in a lemma statement.
///
/// # Safety
/// `statement` NUL-terminated; `count` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_count_terms(statement: *const c_char, count: *mut u64) -> LemmataStatus {
    guard(|| {
        let slot = out(count, "count")?;
        *slot = count_terms(text(statement, "statement")?);
        Ok(())
    })
}

/// Utility category of a helper lemma, from its name.
///
/// # Safety
/// `name` NUL-terminated; `category` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_categorize_lemma(
    name: *const c_char,
    category: *mut LemmataUtilityCategory,
) -> LemmataStatus {
    guard(|| {
        let slot = out(category, "category")?;
        *slot = analytics::categorize_lemma(text(name, "name")?).into();
        Ok(())
    })
}

/// Property type of an annotation. Unrecognised annotations count as
/// contracts.
///
/// # Safety
/// `annotation` NUL-terminated; `kind` writable.
#[no_mangle]
pub unsafe extern "C" fn lemmata_classify_property(
    annotation: *const c_char,
    kind: *mut LemmataPropertyType,
) -> LemmataStatus {
    guard(|| {
        let slot = out(kind, "kind")?;
        *slot = analytics::classify_property(text(annotation, "annotation")?).into();
        Ok(())
    })
}

/// Report label of a utility category, statically allocated.
#[no_mangle]
pub extern "C" fn lemmata_utility_category_label(category: LemmataUtilityCategory) -> *const c_char {
    match category {
        LemmataUtilityCategory::Memory => c"Memory",
        LemmataUtilityCategory::Simplification => c"Simplification",
        LemmataUtilityCategory::Typing => c"Typing",
        LemmataUtilityCategory::Arithmetic => c"Arithmetic",
        LemmataUtilityCategory::DataStructure => c"Data Structure",
        LemmataUtilityCategory::String => c"String",
        LemmataUtilityCategory::Others => c"Others",
    }
    .as_ptr()
}

/// Report label of a property type, statically allocated.
#[no_mangle]
pub extern "C" fn lemmata_property_type_label(kind: LemmataPropertyType) -> *const c_char {
    match kind {
        LemmataPropertyType::Loop => c"loop",
        LemmataPropertyType::Rte => c"rte",
        LemmataPropertyType::Assertion => c"assertion",
        LemmataPropertyType::Contract => c"contract",
    }
    .as_ptr()
}

/// Description of a status code, statically allocated.
#[no_mangle]
pub extern "C" fn lemmata_status_message(status: LemmataStatus) -> *const c_char {
    match status {
        LemmataStatus::Ok => c"ok",
        LemmataStatus::NullPointer => c"null pointer argument",
        LemmataStatus::InvalidUtf8 => c"argument is not valid UTF-8",
        LemmataStatus::InvalidArgument => c"invalid argument",
        LemmataStatus::ProverUnavailable => c"prover unavailable",
        LemmataStatus::ProverFailure => c"prover failure",
        LemmataStatus::ParseError => c"malformed prover source",
        LemmataStatus::Panic => c"internal panic",
    }
    .as_ptr()
}
