//! C interface to the bendr toolkit.
//!
//! Every function returns a [`BendrStatus`]; on failure the message is
//! available from [`bendr_last_error`] on the same thread until the next
//! call. Models are opaque handles created by `bendr_model_*` constructors
//! and released with [`bendr_model_free`]. Arrays are row-major `double`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use bendr::checkpoint::Checkpoint;
use bendr::cli::load_model;
use bendr::config::RunConfig;
use bendr::finetune::{auroc, balanced_accuracy};
use bendr::model::{state_dict, BendrModel as Model, ModelConfig};
use bendr::preprocess::{SequenceSource, StandardizedSequence, STANDARD_CHANNELS};
use bendr::pretrain::{evaluate_contrastive, PretrainConfig};
use bendr::rng::seeded;
use bendr::tensor::no_grad;
use bendr::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BendrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Shape = 3,
    TooShort = 4,
    Numerical = 5,
    Config = 6,
    Checkpoint = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Opaque model handle.
pub struct BendrModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> BendrStatus {
    match e {
        Error::Shape { .. } => BendrStatus::Shape,
        Error::TooShort(_) => BendrStatus::TooShort,
        Error::Config(_) => BendrStatus::Config,
        Error::Checkpoint(_) => BendrStatus::Checkpoint,
        Error::Io(_) | Error::Cache { .. } => BendrStatus::Io,
        e if e.is_numerical() => BendrStatus::Numerical,
        _ => BendrStatus::InvalidInput,
    }
}

enum Fail {
    Status(BendrStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn fail(status: BendrStatus, msg: impl Into<String>) -> Fail {
    Fail::Status(status, msg.into())
}

/// Runs `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> BendrStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BendrStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            BendrStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(fail(BendrStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    non_null(p, "path")?;
    CStr::from_ptr(p)
        .to_str()
        .map(Path::new)
        .map_err(|_| fail(BendrStatus::InvalidInput, "path is not UTF-8"))
}

unsafe fn model_ref<'a>(m: *const BendrModel) -> Result<&'a Model, Fail> {
    non_null(m, "model")?;
    Ok(&(*m).inner)
}

unsafe fn sequence(data: *const f64, len: usize) -> Result<StandardizedSequence, Fail> {
    non_null(data, "data")?;
    let n = STANDARD_CHANNELS
        .checked_mul(len)
        .ok_or_else(|| fail(BendrStatus::InvalidInput, "length overflows"))?;
    let values = std::slice::from_raw_parts(data, n).to_vec();
    Ok(StandardizedSequence::from_parts(
        values,
        STANDARD_CHANNELS,
        len,
        SequenceSource::default(),
        1.0,
    ))
}

fn boxed(model: Model, out: *mut *mut BendrModel) -> Result<(), Fail> {
    non_null(out, "out")?;
    unsafe { *out = Box::into_raw(Box::new(BendrModel { inner: model })) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn bendr_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bendr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of input channels every sequence must have.
#[no_mangle]
pub extern "C" fn bendr_input_channels() -> usize {
    STANDARD_CHANNELS
}

/// Creates a randomly initialized model. `desk` selects the small
/// configuration instead of the full-size one.
#[no_mangle]
pub extern "C" fn bendr_model_new(desk: bool, seed: u64, out: *mut *mut BendrModel) -> BendrStatus {
    guard(|| {
        let cfg = if desk {
            ModelConfig::desk()
        } else {
            ModelConfig::default()
        };
        boxed(Model::init(&cfg, &mut seeded(seed))?, out)
    })
}

/// Loads a model from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bendr_model_load(
    path: *const c_char,
    out: *mut *mut BendrModel,
) -> BendrStatus {
    guard(|| {
        let path = path_arg(path)?;
        boxed(load_model(path)?.0, out)
    })
}

/// Writes the model's parameters to a checkpoint file.
///
/// # Safety
/// `model` must come from a `bendr_model_*` constructor and `path` must be
/// a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn bendr_model_save(
    model: *const BendrModel,
    path: *const c_char,
) -> BendrStatus {
    guard(|| {
        let m = model_ref(model)?;
        let path = path_arg(path)?;
        let config = RunConfig {
            model: m.config.clone(),
            ..Default::default()
        }
        .to_toml()?;
        Checkpoint {
            step: 0,
            config,
            params: state_dict(&m.parameters()),
            adam: None,
        }
        .save(path)?;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from a `bendr_model_*` constructor and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn bendr_model_free(model: *mut BendrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Dimension of the encoder's output vectors.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bendr_model_dim(model: *const BendrModel, out: *mut usize) -> BendrStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = m.config.encoder.width;
        Ok(())
    })
}

/// Number of encoder output vectors for `samples` input samples (0 when the
/// input is too short).
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bendr_encoded_len(
    model: *const BendrModel,
    samples: usize,
    out: *mut usize,
) -> BendrStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        *out = m.config.encoder.output_len(samples).unwrap_or(0);
        Ok(())
    })
}

/// Encodes a `[20 × len]` sequence into `[dim × T]` vectors written to `out`.
/// `out_len` receives `dim · T`; if `out_capacity` is smaller the call fails
/// with `BUFFER_TOO_SMALL` and nothing is written.
///
/// # Safety
/// `data` must hold `20 · len` values, `out` must hold `out_capacity`
/// values, and `out_len` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bendr_encode(
    model: *const BendrModel,
    data: *const f64,
    len: usize,
    out: *mut f64,
    out_capacity: usize,
    out_len: *mut usize,
) -> BendrStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out_len, "out_len")?;
        let seq = sequence(data, len)?;
        let _g = no_grad();
        let v = m.encoder.encode(&seq)?.vectors.to_vec();
        *out_len = v.len();
        if out_capacity < v.len() {
            return Err(fail(
                BendrStatus::BufferTooSmall,
                format!("need {} values, buffer holds {out_capacity}", v.len()),
            ));
        }
        non_null(out, "out")?;
        std::slice::from_raw_parts_mut(out, v.len()).copy_from_slice(&v);
        Ok(())
    })
}

/// Masked contrastive accuracy of one `[20 × len]` sequence under the
/// evenly spaced evaluation mask.
///
/// # Safety
/// `data` must hold `20 · len` values and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bendr_contrastive_accuracy(
    model: *const BendrModel,
    data: *const f64,
    len: usize,
    out: *mut f64,
) -> BendrStatus {
    guard(|| {
        let m = model_ref(model)?;
        non_null(out, "out")?;
        let seq = sequence(data, len)?;
        *out = evaluate_contrastive(m, &[seq], &PretrainConfig::default())?[0];
        Ok(())
    })
}

/// AUROC of `scores` against binary `labels` (non-zero is positive).
///
/// # Safety
/// `scores` and `labels` must each hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bendr_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> BendrStatus {
    guard(|| {
        non_null(scores, "scores")?;
        non_null(labels, "labels")?;
        non_null(out, "out")?;
        let s = std::slice::from_raw_parts(scores, n);
        let l: Vec<bool> = std::slice::from_raw_parts(labels, n)
            .iter()
            .map(|&x| x != 0)
            .collect();
        *out = auroc(s, &l)?;
        Ok(())
    })
}

/// Balanced accuracy of predicted class indices against labels.
///
/// # Safety
/// `preds` and `labels` must each hold `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bendr_balanced_accuracy(
    preds: *const u32,
    labels: *const u32,
    n: usize,
    out: *mut f64,
) -> BendrStatus {
    guard(|| {
        non_null(preds, "preds")?;
        non_null(labels, "labels")?;
        non_null(out, "out")?;
        let conv = |p: *const u32| -> Vec<usize> {
            std::slice::from_raw_parts(p, n)
                .iter()
                .map(|&x| x as usize)
                .collect()
        };
        *out = balanced_accuracy(&conv(preds), &conv(labels))?;
        Ok(())
    })
}
