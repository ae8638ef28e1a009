//! C ABI over the hearcheck audio primitives, answer parser and scorer.
//!
//! Handles are opaque pointers owned by the caller and released with the
//! matching `*_free`. Every fallible call returns an [`HcStatus`]; on failure
//! `hc_last_error` gives a message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::ptr;

use hearcheck::corpus::{self, AudioClip, CorpusError};
use hearcheck::scoring::{self, MetricsReport, Parsed};
use hearcheck::{eval, protocol};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    UnsupportedEncoding = 5,
    RateMismatch = 6,
    EmptyAudio = 7,
    BadRecords = 8,
    UnsupportedTemplate = 9,
    BufferTooSmall = 10,
}

/// Parsed yes/no answer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HcAnswer {
    Yes = 0,
    No = 1,
    Unparsed = 2,
}

/// A mono audio clip.
pub struct HcClip(AudioClip);

/// Metrics rows scored from an evaluation records file.
pub struct HcReport(Vec<MetricsReport>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: HcStatus, msg: impl Into<String>) -> HcStatus {
    set_error(msg);
    status
}

fn corpus_status(e: &CorpusError) -> HcStatus {
    match e {
        CorpusError::UnsupportedEncoding { .. } => HcStatus::UnsupportedEncoding,
        CorpusError::RateMismatch { .. } => HcStatus::RateMismatch,
        CorpusError::EmptyAudio(_) => HcStatus::EmptyAudio,
        CorpusError::NonPositiveDuration(_) => HcStatus::InvalidArgument,
        _ => HcStatus::Io,
    }
}

fn corpus_fail(e: CorpusError) -> HcStatus {
    let status = corpus_status(&e);
    fail(status, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, HcStatus> {
    if p.is_null() {
        return Err(fail(HcStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HcStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn clip_arg<'a>(p: *const HcClip, name: &str) -> Result<&'a AudioClip, HcStatus> {
    p.as_ref().map(|c| &c.0).ok_or_else(|| fail(HcStatus::NullArgument, format!("{name} is null")))
}

fn store<T>(out: *mut *mut T, value: T) -> HcStatus {
    if out.is_null() {
        return fail(HcStatus::NullArgument, "output pointer is null");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    HcStatus::Ok
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message for the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Decodes a WAV file to mono at `sample_rate` Hz.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_load(path: *const c_char, sample_rate: u32, out: *mut *mut HcClip) -> HcStatus {
    let path = tri!(str_arg(path, "path"));
    if sample_rate == 0 {
        return fail(HcStatus::InvalidArgument, "sample_rate must be positive");
    }
    match corpus::load_clip(&PathBuf::from(path), sample_rate) {
        Ok(clip) => store(out, HcClip(clip)),
        Err(e) => corpus_fail(e),
    }
}

/// Builds a clip from `len` samples, clamped to [-1, 1].
///
/// # Safety
/// `samples` must point to `len` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_from_samples(samples: *const f32, len: usize, sample_rate: u32, out: *mut *mut HcClip) -> HcStatus {
    if samples.is_null() && len > 0 {
        return fail(HcStatus::NullArgument, "samples is null");
    }
    if sample_rate == 0 {
        return fail(HcStatus::InvalidArgument, "sample_rate must be positive");
    }
    let data = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(samples, len).to_vec() };
    store(out, HcClip(AudioClip::from_samples(data, sample_rate, "ffi")))
}

/// All-zero clip of `duration_s` seconds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_silence(duration_s: f64, sample_rate: u32, out: *mut *mut HcClip) -> HcStatus {
    match corpus::silence(duration_s, sample_rate) {
        Ok(clip) => store(out, HcClip(clip)),
        Err(e) => corpus_fail(e),
    }
}

/// Scales `clip` so its peak is `target_peak`, in (0, 1].
///
/// # Safety
/// `clip` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_normalize(clip: *const HcClip, target_peak: f32, out: *mut *mut HcClip) -> HcStatus {
    let clip = tri!(clip_arg(clip, "clip"));
    if !(target_peak > 0.0 && target_peak <= 1.0) {
        return fail(HcStatus::InvalidArgument, format!("target_peak must be in (0, 1], got {target_peak}"));
    }
    store(out, HcClip(corpus::normalize(clip, target_peak)))
}

/// Adds `event` onto `base` starting at `offset_s`, hard-clipping the sum.
///
/// # Safety
/// `base` and `event` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_overlay(base: *const HcClip, event: *const HcClip, offset_s: f64, out: *mut *mut HcClip) -> HcStatus {
    let base = tri!(clip_arg(base, "base"));
    let event = tri!(clip_arg(event, "event"));
    if !(offset_s >= 0.0 && offset_s.is_finite()) {
        return fail(HcStatus::InvalidArgument, format!("offset_s must be a non-negative number, got {offset_s}"));
    }
    match corpus::overlay(base, event, offset_s) {
        Ok(clip) => store(out, HcClip(clip)),
        Err(e) => corpus_fail(e),
    }
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_len(clip: *const HcClip) -> usize {
    clip.as_ref().map_or(0, |c| c.0.len())
}

/// Sample rate in Hz, or 0 for a null handle.
///
/// # Safety
/// `clip` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_sample_rate(clip: *const HcClip) -> u32 {
    clip.as_ref().map_or(0, |c| c.0.sample_rate())
}

/// Copies all samples into `buf`, which must hold at least `hc_clip_len` floats.
///
/// # Safety
/// `clip` must be a live handle; `buf` must point to `cap` writable floats.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_copy_samples(clip: *const HcClip, buf: *mut f32, cap: usize) -> HcStatus {
    let clip = tri!(clip_arg(clip, "clip"));
    let samples = clip.samples();
    if samples.is_empty() {
        return HcStatus::Ok;
    }
    if buf.is_null() {
        return fail(HcStatus::NullArgument, "buf is null");
    }
    if cap < samples.len() {
        return fail(HcStatus::BufferTooSmall, format!("need {} floats, got {cap}", samples.len()));
    }
    ptr::copy_nonoverlapping(samples.as_ptr(), buf, samples.len());
    HcStatus::Ok
}

/// Writes `clip` as 16-bit mono PCM WAV.
///
/// # Safety
/// `clip` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_write_wav(clip: *const HcClip, path: *const c_char) -> HcStatus {
    let clip = tri!(clip_arg(clip, "clip"));
    let path = tri!(str_arg(path, "path"));
    match corpus::write_wav(clip, &PathBuf::from(path)) {
        Ok(()) => HcStatus::Ok,
        Err(e) => corpus_fail(e),
    }
}

/// Releases a clip. Null is ignored.
///
/// # Safety
/// `clip` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_clip_free(clip: *mut HcClip) {
    if !clip.is_null() {
        drop(Box::from_raw(clip));
    }
}

/// Maps a free-form response to yes/no.
///
/// # Safety
/// `text` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hc_parse_answer(text: *const c_char, out: *mut HcAnswer) -> HcStatus {
    let text = tri!(str_arg(text, "text"));
    if out.is_null() {
        return fail(HcStatus::NullArgument, "output pointer is null");
    }
    *out = match scoring::parse_answer(text) {
        Parsed::Yes => HcAnswer::Yes,
        Parsed::No => HcAnswer::No,
        Parsed::Unparsed | Parsed::BackendError => HcAnswer::Unparsed,
    };
    HcStatus::Ok
}

fn out_string(out: *mut *mut c_char, s: String) -> HcStatus {
    if out.is_null() {
        return fail(HcStatus::NullArgument, "output pointer is null");
    }
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            HcStatus::Ok
        }
        Err(_) => fail(HcStatus::InvalidArgument, "result contains a NUL byte"),
    }
}

/// Negated form of a templated question. Free the result with `hc_string_free`.
///
/// # Safety
/// `question` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_negate_question(question: *const c_char, out: *mut *mut c_char) -> HcStatus {
    let question = tri!(str_arg(question, "question"));
    match protocol::negate_question(question) {
        Ok(q) => out_string(out, q),
        Err(e) => fail(HcStatus::UnsupportedTemplate, e.to_string()),
    }
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scores an evaluation records file (JSON lines).
///
/// # Safety
/// `records_path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_report_from_records(records_path: *const c_char, out: *mut *mut HcReport) -> HcStatus {
    let path = tri!(str_arg(records_path, "records_path"));
    match eval::read_records(&PathBuf::from(path)) {
        Ok(records) => store(out, HcReport(scoring::aggregate(&records))),
        Err(e) => fail(HcStatus::BadRecords, e.to_string()),
    }
}

/// Number of (model, task, setting) rows.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hc_report_rows(report: *const HcReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.len())
}

/// Report as JSON. Free the result with `hc_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_report_to_json(report: *const HcReport, out: *mut *mut c_char) -> HcStatus {
    let Some(report) = report.as_ref() else {
        return fail(HcStatus::NullArgument, "report is null");
    };
    out_string(out, scoring::render_json(&report.0))
}

/// Report as a markdown table. Free the result with `hc_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hc_report_to_markdown(report: *const HcReport, out: *mut *mut c_char) -> HcStatus {
    let Some(report) = report.as_ref() else {
        return fail(HcStatus::NullArgument, "report is null");
    };
    out_string(out, scoring::render_markdown(&report.0))
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hc_report_free(report: *mut HcReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
