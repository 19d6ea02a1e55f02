//! C ABI bindings.
//!
//! Every fallible function returns an [`IncparseStatus`]; on failure a
//! message is kept per thread and can be read with [`incparse_last_error`].
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free` function. Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use incparse::conditioning::CondConfig;
use incparse::langmodel::DEFAULT_PARSER_WEIGHT;
use incparse::model_file::{load_model, save_model};
use incparse::parser::{ParserConfig, DEFAULT_MAX_QUEUE};
use incparse::pipeline::{train, Model, TrainConfig};
use incparse::treebank::{read_corpus, sentence_tree, Role};
use incparse::Error;

/// Base beam factor used by the command-line tools.
pub const INCPARSE_DEFAULT_BASE_BEAM: f64 = 1e-11;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncparseStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Syntax = 4,
    Config = 5,
    ZeroProbability = 6,
    ModelFormat = 7,
    OutOfVocabulary = 8,
    IndexOutOfRange = 9,
    Internal = 10,
}

/// A trained model bundle.
pub struct IncparseModel {
    model: Model,
}

/// The result of parsing one sentence.
pub struct IncparseParse {
    tree: CString,
    log_prob: f64,
    failed: bool,
    words: Vec<CString>,
    word_probs: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(IncparseStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => IncparseStatus::Io,
            Error::Syntax { .. } | Error::InvalidTree(_) | Error::Factoring(_) => IncparseStatus::Syntax,
            Error::Config(_) | Error::Empty(_) | Error::Alignment(_) | Error::YieldMismatch(_) => {
                IncparseStatus::Config
            }
            Error::ZeroProbability(_) | Error::OracleBudget { .. } => IncparseStatus::ZeroProbability,
            Error::ModelFormat { .. } | Error::ModelVersion { .. } => IncparseStatus::ModelFormat,
            Error::OutOfVocabulary(_) => IncparseStatus::OutOfVocabulary,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(IncparseStatus::NullArgument, format!("{what} is null"))
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IncparseStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IncparseStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            IncparseStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(IncparseStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn model_ref<'a>(m: *const IncparseModel) -> Result<&'a Model, Failure> {
    m.as_ref().map(|m| &m.model).ok_or_else(|| null("model"))
}

unsafe fn parse_ref<'a>(p: *const IncparseParse) -> Result<&'a IncparseParse, Failure> {
    p.as_ref().ok_or_else(|| null("parse"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn incparse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn incparse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn incparse_model_load(path: *const c_char, out: *mut *mut IncparseModel) -> IncparseStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let model = load_model(path)?;
        put(out, IncparseModel { model })
    })
}

/// Trains a model from two bracketed treebanks. `conditioning` is a preset
/// name or an `a,b,c` triple; NULL selects "all".
///
/// # Safety
/// String arguments must be valid C strings or NULL where allowed, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn incparse_model_train(
    train_path: *const c_char,
    heldout_path: *const c_char,
    conditioning: *const c_char,
    out: *mut *mut IncparseModel,
) -> IncparseStatus {
    guard(|| {
        let tr = read_corpus(str_arg(train_path, "train path")?, Role::Train)?;
        let he = read_corpus(str_arg(heldout_path, "heldout path")?, Role::Heldout)?;
        let conditioning = if conditioning.is_null() {
            CondConfig::all()
        } else {
            str_arg(conditioning, "conditioning")?.parse::<CondConfig>()?
        };
        let cfg = TrainConfig {
            conditioning,
            ..Default::default()
        };
        let (model, _) = train(&tr, &he, &cfg)?;
        put(out, IncparseModel { model })
    })
}

/// Writes the model file.
///
/// # Safety
/// `model` must come from this library and `path` be a valid C string.
#[no_mangle]
pub unsafe extern "C" fn incparse_model_save(model: *const IncparseModel, path: *const c_char) -> IncparseStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_model(str_arg(path, "path")?, m)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn incparse_model_free(model: *mut IncparseModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses one whitespace-tokenized sentence. `base_beam` of 0 disables
/// pruning; `max_queue` of 0 selects the default. Unknown words map to the
/// unknown token. A garden path is not an error: the result reports it.
///
/// # Safety
/// `model` must come from this library, `sentence` be a valid C string and
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse(
    model: *const IncparseModel,
    sentence: *const c_char,
    base_beam: f64,
    max_queue: usize,
    out: *mut *mut IncparseParse,
) -> IncparseStatus {
    guard(|| {
        let m = model_ref(model)?;
        let tokens: Vec<String> = str_arg(sentence, "sentence")?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        if tokens.is_empty() {
            return Err(Failure(IncparseStatus::Config, "sentence has no tokens".into()));
        }
        let cfg = ParserConfig {
            base_beam,
            max_queue: if max_queue == 0 { DEFAULT_MAX_QUEUE } else { max_queue },
        };
        let words = m.prepare_sentence(&tokens, false)?;
        let po = m.parse(&words, cfg)?;
        let trace = m.trace(&po, DEFAULT_PARSER_WEIGHT)?;
        let cstr = |s: String| CString::new(s).map_err(|_| Failure(IncparseStatus::Syntax, "token contains NUL".into()));
        let result = IncparseParse {
            tree: cstr(sentence_tree(&po.best, m.end_token()).to_string())?,
            log_prob: po.log_string_prob(),
            failed: po.failed,
            words: words.into_iter().map(cstr).collect::<Result<_, _>>()?,
            word_probs: trace.final_probs,
        };
        put(out, result)
    })
}

/// Best tree in bracketed form, owned by the parse handle.
///
/// # Safety
/// `parse` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_tree(parse: *const IncparseParse) -> *const c_char {
    parse.as_ref().map_or(ptr::null(), |p| p.tree.as_ptr())
}

/// True when no complete parse was found.
///
/// # Safety
/// `parse` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_failed(parse: *const IncparseParse) -> bool {
    parse.as_ref().is_none_or(|p| p.failed)
}

/// Natural log of the summed probability of the complete parses found;
/// negative infinity after a garden path.
///
/// # Safety
/// `parse` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_log_prob(parse: *const IncparseParse) -> f64 {
    parse.as_ref().map_or(f64::NEG_INFINITY, |p| p.log_prob)
}

/// Number of tokens scored, the end marker included.
///
/// # Safety
/// `parse` must come from this library or be NULL.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_num_words(parse: *const IncparseParse) -> usize {
    parse.as_ref().map_or(0, |p| p.words.len())
}

/// Token `index` after normalization, owned by the parse handle.
///
/// # Safety
/// `parse` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_word(
    parse: *const IncparseParse,
    index: usize,
    out: *mut *const c_char,
) -> IncparseStatus {
    guard(|| {
        let p = parse_ref(parse)?;
        let w = p.words.get(index).ok_or_else(|| out_of_range(index, p.words.len()))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = w.as_ptr();
        Ok(())
    })
}

/// Conditional probability of token `index` given the ones before it,
/// smoothed with the unigram.
///
/// # Safety
/// `parse` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_word_prob(
    parse: *const IncparseParse,
    index: usize,
    out: *mut f64,
) -> IncparseStatus {
    guard(|| {
        let p = parse_ref(parse)?;
        let v = p.word_probs.get(index).ok_or_else(|| out_of_range(index, p.word_probs.len()))?;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = *v;
        Ok(())
    })
}

fn out_of_range(index: usize, len: usize) -> Failure {
    Failure(
        IncparseStatus::IndexOutOfRange,
        format!("index {index} out of range for {len} tokens"),
    )
}

/// # Safety
/// `parse` must come from this library and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn incparse_parse_free(parse: *mut IncparseParse) {
    if !parse.is_null() {
        drop(Box::from_raw(parse));
    }
}
