//! C ABI over the `tweetcheck` classifier.
//!
//! Every fallible call returns a [`TcStatus`]; on failure a message is
//! available from [`tc_last_error`] on the same thread until the next call.
//! Handles are opaque and must be released with their `_free` function.
//! Strings returned through out-parameters are owned by the caller and
//! released with [`tc_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use tweetcheck::dataset::{krippendorff_alpha, Label, TweetRecord, UserRecord};
use tweetcheck::embedding::HashingEmbedder;
use tweetcheck::network::{Batch, Checkpoint, Network};
use tweetcheck::pipeline::{Pipeline, Resources};
use tweetcheck::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    Io = 5,
    SchemaMismatch = 6,
    Undefined = 7,
    Internal = 8,
    Panic = 9,
}

/// Predicted class.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TcLabel {
    Fake = 0,
    Genuine = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TcPrediction {
    /// A [`TcLabel`] value.
    pub label: i32,
    pub confidence: f64,
    pub prob_fake: f64,
    pub prob_genuine: f64,
}

/// A loaded checkpoint plus its feature pipeline. Classification is
/// read-only, so one handle may be shared across threads.
pub struct TcClassifier {
    network: Network<f64>,
    pipeline: Pipeline,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Failure(TcStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => TcStatus::Io,
            Error::NotFound(_) => TcStatus::NotFound,
            Error::Schema { .. } => TcStatus::SchemaMismatch,
            Error::Undefined(_) => TcStatus::Undefined,
            Error::Invalid(_) | Error::Empty(_) | Error::Json(_) | Error::Shape { .. } => TcStatus::InvalidArgument,
            _ => TcStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TcStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            TcStatus::Panic
        }
    }
}

unsafe fn text<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err(Failure(TcStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| Failure(TcStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn out_ptr<T>(ptr: *mut T, what: &str) -> Result<(), Failure> {
    if ptr.is_null() {
        Err(Failure(TcStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next `tc_` call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSON checkpoint. External knowledge uses the offline hashing
/// embedder with the checkpoint's knowledge width and no search client.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_classifier_load(path: *const c_char, out: *mut *mut TcClassifier) -> TcStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let path = text(path, "path")?;
        let ck = Checkpoint::load(Path::new(path))?;
        let network = ck.network()?;
        let resources = Resources::offline(Arc::new(HashingEmbedder::new(network.config.ek_dim)));
        let pipeline = Pipeline::from_checkpoint(&ck, resources);
        *out = Box::into_raw(Box::new(TcClassifier { network, pipeline }));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`tc_classifier_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_classifier_free(handle: *mut TcClassifier) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

fn predict(c: &TcClassifier, tweet_json: &str, user_json: Option<&str>) -> Result<TcPrediction, Failure> {
    let tweet: TweetRecord = serde_json::from_str(tweet_json).map_err(Error::from)?;
    let user: Option<UserRecord> = user_json.map(serde_json::from_str).transpose().map_err(Error::from)?;
    let example = c.pipeline.example(&tweet, user.as_ref(), &[tweet.created_at])?;
    let p = c.network.predict(&Batch::new(&[&example])?)?.remove(0);
    let label = match p.label {
        Label::Fake => TcLabel::Fake,
        Label::Genuine => TcLabel::Genuine,
    };
    Ok(TcPrediction { label: label as i32, confidence: p.confidence, prob_fake: p.probabilities[0], prob_genuine: p.probabilities[1] })
}

/// Classifies one tweet given as a JSON record; `user_json` may be null.
///
/// # Safety
/// `handle` must be live; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_classify(
    handle: *const TcClassifier,
    tweet_json: *const c_char,
    user_json: *const c_char,
    out: *mut TcPrediction,
) -> TcStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let c = handle.as_ref().ok_or_else(|| Failure(TcStatus::NullPointer, "handle is null".into()))?;
        let tweet = text(tweet_json, "tweet_json")?;
        let user = if user_json.is_null() { None } else { Some(text(user_json, "user_json")?) };
        *out = predict(c, tweet, user)?;
        Ok(())
    })
}

/// Like [`tc_classify`] but writes a JSON object
/// `{"label", "confidence", "probabilities"}` to `out_json`.
///
/// # Safety
/// As for [`tc_classify`]; free the result with [`tc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tc_classify_json(handle: *const TcClassifier, tweet_json: *const c_char, out_json: *mut *mut c_char) -> TcStatus {
    guard(|| {
        out_ptr(out_json, "out_json")?;
        let c = handle.as_ref().ok_or_else(|| Failure(TcStatus::NullPointer, "handle is null".into()))?;
        let p = predict(c, text(tweet_json, "tweet_json")?, None)?;
        let label = if p.label == TcLabel::Fake as i32 { Label::Fake } else { Label::Genuine };
        let body = serde_json::json!({
            "label": label,
            "confidence": p.confidence,
            "probabilities": [p.prob_fake, p.prob_genuine],
        });
        *out_json = CString::new(body.to_string()).map_err(|e| Failure(TcStatus::Internal, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn tc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Nominal Krippendorff's alpha over a row-major `annotators × items` matrix
/// of category codes; entries equal to `missing` are treated as absent.
///
/// # Safety
/// `codes` must point to `annotators * items` readable values.
#[no_mangle]
pub unsafe extern "C" fn tc_krippendorff_alpha(codes: *const i32, annotators: usize, items: usize, missing: i32, out: *mut f64) -> TcStatus {
    guard(|| {
        out_ptr(out, "out")?;
        if codes.is_null() {
            return Err(Failure(TcStatus::NullPointer, "codes is null".into()));
        }
        let len = annotators.checked_mul(items).ok_or_else(|| Failure(TcStatus::InvalidArgument, "matrix too large".into()))?;
        let flat = std::slice::from_raw_parts(codes, len);
        let rows: Vec<Vec<Option<i32>>> =
            flat.chunks(items.max(1)).take(annotators).map(|r| r.iter().map(|&c| (c != missing).then_some(c)).collect()).collect();
        *out = krippendorff_alpha(&rows)?;
        Ok(())
    })
}
