//! C interface. Every function returns a [`TcStatus`]; on failure the
//! message is available from [`tc_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use tweetcluster::cae::{self, CaeModel, Tensor3};
use tweetcluster::clustering::{self, Algorithm};
use tweetcluster::evaluation::{ch_score, hotelling_t2};
use tweetcluster::features::FeatureMatrix;
use tweetcluster::{corpus, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Degenerate = 6,
    Numerical = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcAlgorithm {
    Kmeans = 0,
    Ward = 1,
    Spectral = 2,
}

/// Dense row-major feature matrix.
pub struct TcFeatures(FeatureMatrix);

/// Trained autoencoder loaded from a checkpoint.
pub struct TcCae(CaeModel);

/// `f_stat` and `p_value` are NaN when `df2 <= 0`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TcHotelling {
    pub t2: f64,
    pub f_stat: f64,
    pub p_value: f64,
    pub df1: usize,
    pub df2: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TcStatus {
    match e {
        Error::Io { .. } => TcStatus::Io,
        Error::Format { .. } | Error::Json(_) => TcStatus::Format,
        Error::InvalidInput(_) => TcStatus::InvalidInput,
        Error::Shape { .. } => TcStatus::Shape,
        Error::Degenerate(_) => TcStatus::Degenerate,
        Error::Numerical(_) | Error::IsolatedPoint(_) => TcStatus::Numerical,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TcStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            TcStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TcStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn c_str(p: *const c_char, what: &'static str) -> Result<String, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Fail::Lib(Error::InvalidInput(format!("{what} is not UTF-8"))))
}

unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(p: *mut T, len: usize, what: &'static str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(p: *mut T, v: T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    p.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn tc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Cleans one raw tweet. `*out` receives a string to release with
/// [`tc_string_free`].
///
/// # Safety
/// `raw` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_clean_text(raw: *const c_char, out: *mut *mut c_char) -> TcStatus {
    guard(|| {
        let raw = c_str(raw, "raw")?;
        let cleaned = CString::new(corpus::clean(&raw)).map_err(|_| Error::InvalidInput("NUL in text".into()))?;
        write_out(out, cleaned.into_raw(), "out")
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

/// Copies `rows * cols` row-major values into a new matrix.
///
/// # Safety
/// `data` must point to `rows * cols` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_features_new(
    rows: usize,
    cols: usize,
    data: *const f64,
    out: *mut *mut TcFeatures,
) -> TcStatus {
    guard(|| {
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidInput("rows * cols overflows".into()))?;
        let values = in_slice(data, len, "data")?.to_vec();
        let m = FeatureMatrix::new(rows, cols, values, "ffi")?;
        write_out(out, Box::into_raw(Box::new(TcFeatures(m))), "out")
    })
}

/// Reads a feature CSV (header line, one row per line).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_features_read_csv(path: *const c_char, out: *mut *mut TcFeatures) -> TcStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        let m = FeatureMatrix::read_csv(&path)?;
        write_out(out, Box::into_raw(Box::new(TcFeatures(m))), "out")
    })
}

/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tc_features_rows(f: *const TcFeatures) -> usize {
    f.as_ref().map_or(0, |f| f.0.nrows())
}

/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tc_features_cols(f: *const TcFeatures) -> usize {
    f.as_ref().map_or(0, |f| f.0.ncols())
}

/// Row-major values, owned by the handle.
///
/// # Safety
/// `f` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tc_features_data(f: *const TcFeatures) -> *const f64 {
    f.as_ref().map_or(ptr::null(), |f| f.0.as_slice().as_ptr())
}

/// # Safety
/// `f` must come from this library, or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_features_free(f: *mut TcFeatures) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Calinski-Harabasz score of `labels` (values in `0..k`, one per row).
///
/// # Safety
/// `labels` must hold `n_labels` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn tc_ch_score(
    f: *const TcFeatures,
    labels: *const usize,
    n_labels: usize,
    k: usize,
    out: *mut f64,
) -> TcStatus {
    guard(|| {
        let f = non_null(f, "features")?;
        let labels = in_slice(labels, n_labels, "labels")?;
        let r = ch_score(&f.0, labels, k)?;
        write_out(out, r.score, "out")
    })
}

/// Clusters the rows into `k` groups. `labels_out` must have room for one
/// label per row. `gamma <= 0` uses the default spectral kernel width and is
/// ignored by the other algorithms. `objective_out` may be null.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tc_cluster(
    f: *const TcFeatures,
    algorithm: TcAlgorithm,
    k: usize,
    seed: u64,
    gamma: f64,
    labels_out: *mut usize,
    n_labels: usize,
    objective_out: *mut f64,
) -> TcStatus {
    guard(|| {
        let f = non_null(f, "features")?;
        let x = &f.0;
        if n_labels != x.nrows() {
            return Err(Error::Shape {
                expected: format!("{} labels", x.nrows()),
                actual: n_labels.to_string(),
            }
            .into());
        }
        let out = out_slice(labels_out, n_labels, "labels_out")?;
        let result = match algorithm {
            TcAlgorithm::Kmeans => clustering::cluster(x, Algorithm::KMeans, k, seed)?,
            TcAlgorithm::Ward => clustering::cluster(x, Algorithm::Ward, k, seed)?,
            TcAlgorithm::Spectral => clustering::spectral(x, k, (gamma > 0.0).then_some(gamma), seed)?,
        };
        out.copy_from_slice(&result.labels);
        if !objective_out.is_null() {
            objective_out.write(result.objective);
        }
        Ok(())
    })
}

/// Two-sample Hotelling T². A nonzero `pseudo_inverse` allows a singular
/// pooled covariance.
///
/// # Safety
/// `a` and `b` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_hotelling(
    a: *const TcFeatures,
    b: *const TcFeatures,
    pseudo_inverse: c_int,
    out: *mut TcHotelling,
) -> TcStatus {
    guard(|| {
        let (a, b) = (non_null(a, "a")?, non_null(b, "b")?);
        let r = hotelling_t2(&a.0, &b.0, pseudo_inverse != 0)?;
        let res = TcHotelling {
            t2: r.t2,
            f_stat: r.f_stat.unwrap_or(f64::NAN),
            p_value: r.p_value.unwrap_or(f64::NAN),
            df1: r.df1,
            df2: r.df2,
        };
        write_out(out, res, "out")
    })
}

/// Loads an autoencoder checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tc_cae_load(path: *const c_char, out: *mut *mut TcCae) -> TcStatus {
    guard(|| {
        let path = PathBuf::from(c_str(path, "path")?);
        let model = cae::read_checkpoint(&path)?;
        write_out(out, Box::into_raw(Box::new(TcCae(model))), "out")
    })
}

/// Input matrix shape (rows × embedding width) and representation length.
///
/// # Safety
/// `m` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tc_cae_shape(
    m: *const TcCae,
    input_rows: *mut usize,
    input_cols: *mut usize,
    representation_len: *mut usize,
) -> TcStatus {
    guard(|| {
        let c = &non_null(m, "model")?.0.config;
        for (p, v) in [
            (input_rows, c.input_rows),
            (input_cols, c.input_cols),
            (representation_len, c.representation_len()),
        ] {
            if !p.is_null() {
                p.write(v);
            }
        }
        Ok(())
    })
}

/// Encodes one row-major `input_rows × input_cols` matrix.
///
/// # Safety
/// `input` and `out` must hold `input_len` and `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tc_cae_encode(
    m: *const TcCae,
    input: *const f64,
    input_len: usize,
    out: *mut f64,
    out_len: usize,
) -> TcStatus {
    guard(|| {
        let model = &non_null(m, "model")?.0;
        let c = &model.config;
        let x = Tensor3::from_vec(1, c.input_rows, c.input_cols, in_slice(input, input_len, "input")?.to_vec())?;
        let code = model.encode(&x)?;
        if out_len != code.len() {
            return Err(Error::Shape {
                expected: format!("output of {}", code.len()),
                actual: out_len.to_string(),
            }
            .into());
        }
        out_slice(out, out_len, "out")?.copy_from_slice(&code);
        Ok(())
    })
}

/// # Safety
/// `m` must come from this library, or be null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn tc_cae_free(m: *mut TcCae) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}
