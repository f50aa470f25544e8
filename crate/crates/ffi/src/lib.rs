//! C ABI over the `d2t` toolkit.
//!
//! Objects are opaque handles created by `*_new`/`*_load`/`*_parse` and
//! released by the matching `*_free`. Every fallible call returns a
//! [`D2tStatus`]; on failure [`d2t_last_error`] describes the cause.
//! Strings returned to the caller are freed with [`d2t_string_free`], id
//! buffers with [`d2t_ids_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use d2t::metrics::{compute_ser, EvalCorpus, Metric};
use d2t::mr::{linearize, parse_mr, LinearizationConfig, MeaningRepresentation, SlotSchema, SurfaceFormTable};
use d2t::subword::SubwordModel;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum D2tStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Io = 4,
    InvalidArgument = 5,
    Panic = 6,
}

pub struct D2tSchema(SlotSchema);
pub struct D2tMr(MeaningRepresentation);
pub struct D2tTokenizer(SubwordModel);
pub struct D2tSurfaceForms(SurfaceFormTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(D2tStatus, String);

impl Fail {
    fn parse(e: impl std::fmt::Display) -> Self {
        Fail(D2tStatus::Parse, e.to_string())
    }
}

/// Run `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> D2tStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            D2tStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            D2tStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(D2tStatus::NullPointer, format!("{what} is null")));
    }
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(D2tStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| Fail(D2tStatus::NullPointer, format!("{what} is null")))
}

unsafe fn str_array<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, Fail> {
    if p.is_null() && n > 0 {
        return Err(Fail(D2tStatus::NullPointer, format!("{what} is null")));
    }
    (0..n).map(|i| unsafe { str_arg(*p.add(i), what) }).collect()
}

fn out_check<T>(out: *mut T) -> Result<(), Fail> {
    if out.is_null() {
        Err(Fail(D2tStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn give_string(s: String, out: *mut *mut c_char) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(D2tStatus::InvalidArgument, "string contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[unsafe(no_mangle)]
pub extern "C" fn d2t_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// The built-in restaurant slot schema.
#[unsafe(no_mangle)]
pub extern "C" fn d2t_schema_restaurant() -> *mut D2tSchema {
    Box::into_raw(Box::new(D2tSchema(SlotSchema::restaurant())))
}

/// # Safety
/// `schema` must come from this library or be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_schema_free(schema: *mut D2tSchema) {
    if !schema.is_null() {
        drop(unsafe { Box::from_raw(schema) });
    }
}

/// Parse `act(key=value,...)`.
///
/// # Safety
/// Pointers must be valid; `text` NUL-terminated.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_mr_parse(schema: *const D2tSchema, text: *const c_char, out: *mut *mut D2tMr) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        let schema = unsafe { ref_arg(schema, "schema") }?;
        let text = unsafe { str_arg(text, "text") }?;
        let mr = parse_mr(text, &schema.0).map_err(Fail::parse)?;
        unsafe { *out = Box::into_raw(Box::new(D2tMr(mr))) };
        Ok(())
    })
}

/// Canonical text form of the MR.
///
/// # Safety
/// Pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_mr_to_string(mr: *const D2tMr, out: *mut *mut c_char) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        give_string(unsafe { ref_arg(mr, "mr") }?.0.to_string(), out)
    })
}

/// Flatten the MR into the `[GENERATE] <2cs>` model input.
///
/// # Safety
/// Pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_mr_linearize(mr: *const D2tMr, out: *mut *mut c_char) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        let mr = unsafe { ref_arg(mr, "mr") }?;
        give_string(linearize(&mr.0, &LinearizationConfig::generate_cs()), out)
    })
}

/// # Safety
/// `mr` must come from this library or be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_mr_free(mr: *mut D2tMr) {
    if !mr.is_null() {
        drop(unsafe { Box::from_raw(mr) });
    }
}

/// Load a surface-form table (TSV).
///
/// # Safety
/// Pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_surface_forms_load(path: *const c_char, out: *mut *mut D2tSurfaceForms) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        let path = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(path).map_err(|e| Fail(D2tStatus::Io, e.to_string()))?;
        let table = SurfaceFormTable::parse(&text).map_err(Fail::parse)?;
        unsafe { *out = Box::into_raw(Box::new(D2tSurfaceForms(table))) };
        Ok(())
    })
}

/// An empty table: every value is its only surface form.
#[unsafe(no_mangle)]
pub extern "C" fn d2t_surface_forms_empty() -> *mut D2tSurfaceForms {
    Box::into_raw(Box::new(D2tSurfaceForms(SurfaceFormTable::new())))
}

/// # Safety
/// `table` must come from this library or be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_surface_forms_free(table: *mut D2tSurfaceForms) {
    if !table.is_null() {
        drop(unsafe { Box::from_raw(table) });
    }
}

/// Slot error rate of `n` predictions for `n` MR strings, as a fraction
/// of examples with a missing slot.
///
/// # Safety
/// Arrays must hold `n` valid NUL-terminated strings.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_ser(
    schema: *const D2tSchema,
    table: *const D2tSurfaceForms,
    mrs: *const *const c_char,
    predictions: *const *const c_char,
    n: usize,
    out_rate: *mut f64,
) -> D2tStatus {
    guard(|| {
        out_check(out_rate)?;
        let schema = unsafe { ref_arg(schema, "schema") }?;
        let table = unsafe { ref_arg(table, "table") }?;
        let mrs = unsafe { str_array(mrs, n, "mrs") }?;
        let preds = unsafe { str_array(predictions, n, "predictions") }?;
        let parsed = mrs
            .iter()
            .map(|m| parse_mr(m, &schema.0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(Fail::parse)?;
        let report = compute_ser(parsed.iter().zip(preds), &table.0, &schema.0);
        unsafe { *out_rate = report.example_error_rate };
        Ok(())
    })
}

/// Corpus-level metric (`bleu`, `nist`, `rouge_l`, `cider`, `meteor_lite`)
/// with one reference per hypothesis.
///
/// # Safety
/// Arrays must hold `n` valid NUL-terminated strings.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_metric(
    name: *const c_char,
    hypotheses: *const *const c_char,
    references: *const *const c_char,
    n: usize,
    out_value: *mut f64,
) -> D2tStatus {
    guard(|| {
        out_check(out_value)?;
        let metric: Metric = unsafe { str_arg(name, "name") }?
            .parse()
            .map_err(|e: d2t::metrics::MetricsError| Fail(D2tStatus::InvalidArgument, e.to_string()))?;
        let hyps = unsafe { str_array(hypotheses, n, "hypotheses") }?;
        let refs = unsafe { str_array(references, n, "references") }?;
        let corpus = EvalCorpus::new(hyps.into_iter().zip(refs).map(|(h, r)| (h, vec![r])))
            .map_err(|e| Fail(D2tStatus::InvalidArgument, e.to_string()))?;
        unsafe { *out_value = metric.compute(&corpus).value };
        Ok(())
    })
}

/// Load a tokenizer saved by `tokenizer-train`.
///
/// # Safety
/// Pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_tokenizer_load(path: *const c_char, out: *mut *mut D2tTokenizer) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        let path = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(path).map_err(|e| Fail(D2tStatus::Io, e.to_string()))?;
        let tok = SubwordModel::parse(&text).map_err(Fail::parse)?;
        unsafe { *out = Box::into_raw(Box::new(D2tTokenizer(tok))) };
        Ok(())
    })
}

/// # Safety
/// `tok` must come from this library or be null.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_tokenizer_free(tok: *mut D2tTokenizer) {
    if !tok.is_null() {
        drop(unsafe { Box::from_raw(tok) });
    }
}

/// # Safety
/// `tok` must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_tokenizer_vocab_size(tok: *const D2tTokenizer) -> usize {
    unsafe { tok.as_ref() }.map_or(0, |t| t.0.vocab_size())
}

/// Encode `text`; the ids buffer goes to `*out_ids` and its length to
/// `*out_len`. Free with [`d2t_ids_free`].
///
/// # Safety
/// Pointers must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_tokenizer_encode(
    tok: *const D2tTokenizer,
    text: *const c_char,
    out_ids: *mut *mut u32,
    out_len: *mut usize,
) -> D2tStatus {
    guard(|| {
        out_check(out_ids)?;
        out_check(out_len)?;
        let tok = unsafe { ref_arg(tok, "tokenizer") }?;
        let text = unsafe { str_arg(text, "text") }?;
        let ids = tok.0.encode(text).0.into_boxed_slice();
        unsafe {
            *out_len = ids.len();
            *out_ids = Box::into_raw(ids) as *mut u32;
        }
        Ok(())
    })
}

/// # Safety
/// `ids`/`len` must come from [`d2t_tokenizer_encode`].
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_ids_free(ids: *mut u32, len: usize) {
    if !ids.is_null() {
        drop(unsafe { Box::from_raw(ptr::slice_from_raw_parts_mut(ids, len)) });
    }
}

/// Decode `len` ids back to text.
///
/// # Safety
/// `ids` must point to `len` values.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn d2t_tokenizer_decode(
    tok: *const D2tTokenizer,
    ids: *const u32,
    len: usize,
    out: *mut *mut c_char,
) -> D2tStatus {
    guard(|| {
        out_check(out)?;
        let tok = unsafe { ref_arg(tok, "tokenizer") }?;
        if ids.is_null() && len > 0 {
            return Err(Fail(D2tStatus::NullPointer, "ids is null".into()));
        }
        let ids = if len == 0 { &[][..] } else { unsafe { std::slice::from_raw_parts(ids, len) } };
        let text = tok.0.decode_ids(ids).map_err(|e| Fail(D2tStatus::InvalidArgument, e.to_string()))?;
        give_string(text, out)
    })
}
