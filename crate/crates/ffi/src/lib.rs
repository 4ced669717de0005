//! C ABI over the `ems-equity` library.
//!
//! Every function returns an [`EqStatus`]; results go through out-pointers.
//! After a non-OK status, [`eq_last_error_message`] returns a description of
//! the failure on the calling thread. Fitted models are opaque handles that
//! must be released with [`eq_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use ems_equity::config::RunConfig;
use ems_equity::geodesy::{GeoPoint, Sphere};
use ems_equity::gof::{chi_square_sf, hosmer_lemeshow, Grouping};
use ems_equity::ingest::{assign_bracket, IncomeBracket};
use ems_equity::logit::{fit_outcomes, Encoding, FitSettings, LogitModel};
use ems_equity::pipeline::analyze;
use ems_equity::Error;

/// Status codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Domain = 3,
    Config = 4,
    UndefinedMedian = 5,
    RankDeficient = 6,
    Separation = 7,
    Io = 8,
    Parse = 9,
    Panic = 10,
}

/// A fitted logistic model. Opaque to C.
pub struct EqModel {
    inner: LogitModel,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> EqStatus {
    match e {
        Error::InvalidInput { .. } => EqStatus::InvalidInput,
        Error::Domain(_) => EqStatus::Domain,
        Error::Config(_) => EqStatus::Config,
        Error::UndefinedMedian => EqStatus::UndefinedMedian,
        Error::RankDeficient(_) => EqStatus::RankDeficient,
        Error::Separation(_) => EqStatus::Separation,
        Error::Io { .. } => EqStatus::Io,
        Error::Csv(_) | Error::Json(_) => EqStatus::Parse,
    }
}

fn guard(f: impl FnOnce() -> Result<(), EqStatus>) -> EqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            EqStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            EqStatus::Panic
        }
    }
}

fn fail(e: Error) -> EqStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(name: &str) -> EqStatus {
    set_error(format!("{name} is null"));
    EqStatus::NullPointer
}

fn bracket(code: u8) -> Result<IncomeBracket, EqStatus> {
    IncomeBracket::from_index(code).ok_or_else(|| {
        set_error(format!("bracket index {code} outside 1..6"));
        EqStatus::InvalidInput
    })
}

/// # Safety
/// `ptr` must be null or valid for `n` reads.
unsafe fn slice<'a, T>(ptr: *const T, n: usize, name: &str) -> Result<&'a [T], EqStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(ptr, n))
}

/// # Safety
/// The pointers must each be null or valid for `n` reads.
unsafe fn pairs(brackets: *const u8, met: *const u8, n: usize) -> Result<Vec<(IncomeBracket, bool)>, EqStatus> {
    let b = slice(brackets, n, "brackets")?;
    let y = slice(met, n, "outcomes")?;
    b.iter().zip(y).map(|(b, y)| Ok((bracket(*b)?, *y != 0))).collect()
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, EqStatus> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr).to_str().map(Path::new).map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        EqStatus::InvalidInput
    })
}

/// Great-circle distance in miles on a 3959-mile sphere.
///
/// # Safety
/// `out_miles` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_great_circle_miles(
    lat1: f64,
    lon1: f64,
    lat2: f64,
    lon2: f64,
    out_miles: *mut f64,
) -> EqStatus {
    guard(|| {
        if out_miles.is_null() {
            return Err(null("out_miles"));
        }
        let a = GeoPoint::new(lat1, lon1).map_err(fail)?;
        let b = GeoPoint::new(lat2, lon2).map_err(fail)?;
        *out_miles = Sphere::default().miles_between(&a, &b);
        Ok(())
    })
}

/// Upper-tail probability of a chi-square variable with `df` degrees of freedom.
///
/// # Safety
/// `out_p` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_chi_square_sf(x: f64, df: u32, out_p: *mut f64) -> EqStatus {
    guard(|| {
        if out_p.is_null() {
            return Err(null("out_p"));
        }
        *out_p = chi_square_sf(x, df).map_err(fail)?;
        Ok(())
    })
}

/// Median income bracket (1..6) from six filer counts.
///
/// # Safety
/// `counts` must be null or valid for six reads; `out_bracket` for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_assign_bracket(counts: *const u64, out_bracket: *mut u8) -> EqStatus {
    guard(|| {
        if out_bracket.is_null() {
            return Err(null("out_bracket"));
        }
        let c: [u64; 6] = slice(counts, 6, "counts")?.try_into().expect("six counts");
        *out_bracket = assign_bracket(&c).map_err(fail)?.index();
        Ok(())
    })
}

/// Fits a dummy-coded logistic model of `outcomes` (0 or non-zero) on
/// `brackets` (1..6). `reference` is the omitted bracket, or 0 for the
/// lowest bracket present.
///
/// # Safety
/// `brackets` and `outcomes` must be valid for `n` reads; `out_model` for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_model_fit(
    brackets: *const u8,
    outcomes: *const u8,
    n: usize,
    reference: u8,
    out_model: *mut *mut EqModel,
) -> EqStatus {
    guard(|| {
        if out_model.is_null() {
            return Err(null("out_model"));
        }
        let data = pairs(brackets, outcomes, n)?;
        let mut present: Vec<IncomeBracket> = data.iter().map(|d| d.0).collect();
        present.sort();
        present.dedup();
        let enc = if reference == 0 {
            Encoding::lowest_reference(present)
        } else {
            Encoding::new(present, bracket(reference)?)
        }
        .map_err(fail)?;
        let model = fit_outcomes(&data, &enc, &FitSettings::default()).map_err(fail)?;
        *out_model = Box::into_raw(Box::new(EqModel { inner: model }));
        Ok(())
    })
}

/// Fitted probability for a bracket in the model.
///
/// # Safety
/// `model` must come from [`eq_model_fit`]; `out_p` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_model_predict(model: *const EqModel, bracket_index: u8, out_p: *mut f64) -> EqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_p.is_null() {
            return Err(null("out_p"));
        }
        *out_p = m.inner.predict_prob(bracket(bracket_index)?).map_err(fail)?;
        Ok(())
    })
}

/// Copies up to `capacity` coefficients (intercept first, then one per
/// non-reference bracket in ascending order) and stores the full count in
/// `out_len`. Pass `capacity` 0 to query the count.
///
/// # Safety
/// `model` must come from [`eq_model_fit`]; `out` must be valid for
/// `capacity` writes; `out_len` for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_model_coefficients(
    model: *const EqModel,
    out: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> EqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let beta = &m.inner.beta;
        *out_len = beta.len();
        if capacity > 0 {
            if out.is_null() {
                return Err(null("out"));
            }
            let k = capacity.min(beta.len());
            std::ptr::copy_nonoverlapping(beta.as_ptr(), out, k);
        }
        Ok(())
    })
}

/// Whether the fit met its convergence criteria.
///
/// # Safety
/// `model` must come from [`eq_model_fit`]; `out` must be valid for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_model_converged(model: *const EqModel, out: *mut bool) -> EqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = m.inner.converged;
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from [`eq_model_fit`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn eq_model_free(model: *mut EqModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Hosmer-Lemeshow statistic with one group per bracket.
///
/// # Safety
/// `model` must come from [`eq_model_fit`]; the arrays must be valid for `n`
/// reads; each out-pointer for one write.
#[no_mangle]
pub unsafe extern "C" fn eq_hosmer_lemeshow(
    model: *const EqModel,
    brackets: *const u8,
    outcomes: *const u8,
    n: usize,
    out_chi2: *mut f64,
    out_df: *mut u32,
    out_p: *mut f64,
) -> EqStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_chi2.is_null() || out_df.is_null() || out_p.is_null() {
            return Err(null("output pointer"));
        }
        let data = pairs(brackets, outcomes, n)?;
        let hl = hosmer_lemeshow(&m.inner, &data, Grouping::CovariatePattern).map_err(fail)?;
        *out_chi2 = hl.chi2;
        *out_df = hl.df;
        *out_p = hl.p_value;
        Ok(())
    })
}

/// Runs the full analysis described by a configuration file and writes the
/// outputs under `out_dir`.
///
/// # Safety
/// Both arguments must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn eq_analyze(config_path: *const c_char, out_dir: *const c_char) -> EqStatus {
    guard(|| {
        let cfg_path = path_arg(config_path, "config_path")?;
        let out = path_arg(out_dir, "out_dir")?;
        let cfg = RunConfig::load(cfg_path).map_err(fail)?;
        analyze(&cfg).and_then(|a| a.outputs.write_to(out)).map_err(fail)
    })
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// NUL-terminated) and returns the buffer size needed for the whole message,
/// including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn eq_last_error_message(buf: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && capacity > 0 {
            let k = bytes.len().min(capacity - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        bytes.len() + 1
    })
}
