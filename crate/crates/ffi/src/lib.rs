//! C ABI for hypou. Every function returns a [`HypouStatus`]; on failure the message is
//! available from [`hypou_last_error_message`] on the same thread. Objects are opaque handles
//! released with their `_free` function; strings returned by the library are released with
//! [`hypou_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hypou::config::{PerturbConfig, SolveConfig};
use hypou::gaussian::{ou_covariance, solve_ou_pipeline, Field, TimePSDPath};
use hypou::harness::solve_perturbed;
use hypou::structure::{structure_report, OUSystem, SystemDescriptor};
use hypou::HypouError;

/// Status codes. Library errors keep the numeric codes of the Rust error type.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HypouStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    DimensionMismatch = 10,
    InvalidSystem = 11,
    NotHypoelliptic = 12,
    Structure = 13,
    Quadrature = 20,
    SingularCovariance = 21,
    Coverage = 22,
    SplitStep = 30,
    NonmonotoneConvergence = 31,
    McBudget = 32,
    Exponent = 40,
    Class = 41,
    InvalidArgument = 50,
    Config = 60,
    Io = 61,
}

impl From<&HypouError> for HypouStatus {
    fn from(e: &HypouError) -> Self {
        match e {
            HypouError::DimensionMismatch(_) => HypouStatus::DimensionMismatch,
            HypouError::InvalidSystem(_) => HypouStatus::InvalidSystem,
            HypouError::NotHypoelliptic { .. } => HypouStatus::NotHypoelliptic,
            HypouError::Structure { .. } => HypouStatus::Structure,
            HypouError::Quadrature(_) => HypouStatus::Quadrature,
            HypouError::SingularCovariance(_) => HypouStatus::SingularCovariance,
            HypouError::Coverage(_) => HypouStatus::Coverage,
            HypouError::SplitStep(_) => HypouStatus::SplitStep,
            HypouError::NonmonotoneConvergence(_) => HypouStatus::NonmonotoneConvergence,
            HypouError::McBudget(_) => HypouStatus::McBudget,
            HypouError::Exponent(_) => HypouStatus::Exponent,
            HypouError::Class(_) => HypouStatus::Class,
            HypouError::InvalidArgument(_) => HypouStatus::InvalidArgument,
            HypouError::Config(_) => HypouStatus::Config,
            HypouError::Io(_) => HypouStatus::Io,
        }
    }
}

/// An OU system (A, B0, nu).
pub struct HypouSystem {
    inner: OUSystem,
}

/// A solution on a space-time grid, time-major.
pub struct HypouField {
    inner: Field,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(HypouStatus, String);

impl From<HypouError> for Fail {
    fn from(e: HypouError) -> Self {
        Fail(HypouStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HypouStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            HypouStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside hypou");
            HypouStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(HypouStatus::NullPointer, format!("{what} is NULL")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(HypouStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(HypouStatus::NullPointer, format!("{what} is NULL")))
}

fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(HypouStatus::NullPointer, format!("{what} is NULL")))
    } else {
        Ok(())
    }
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hypou_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a successful call). The pointer
/// stays valid until the next hypou call on the same thread.
#[no_mangle]
pub extern "C" fn hypou_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be NULL or a string returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hypou_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a system descriptor such as `{"N":2,"d0":1,"A":[[0,0],[1,0]],"B0":[[1]],"nu":1}`.
/// Systems failing the Kalman condition are rejected unless `permissive` is non-zero.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_system_from_json(json: *const c_char, permissive: c_int, out: *mut *mut HypouSystem) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let d: SystemDescriptor = hypou::config::parse(str_arg(json, "json")?, "system")?;
        let inner = OUSystem::from_descriptor(&d, permissive != 0)?;
        *out = Box::into_raw(Box::new(HypouSystem { inner }));
        Ok(())
    })
}

/// # Safety
/// `sys` must be NULL or a handle from [`hypou_system_from_json`] that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hypou_system_free(sys: *mut HypouSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Writes N.
///
/// # Safety
/// `sys` must be a live handle and `n` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_system_dim(sys: *const HypouSystem, n: *mut usize) -> HypouStatus {
    guard(|| {
        out_ptr(n, "n")?;
        *n = handle(sys, "sys")?.inner.n();
        Ok(())
    })
}

/// Kalman verdict, block sizes and exponents as JSON; free the string with [`hypou_string_free`].
///
/// # Safety
/// `sys` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_structure_report_json(sys: *const HypouSystem, out: *mut *mut c_char) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let r = structure_report(&handle(sys, "sys")?.inner)?;
        *out = into_c_string(hypou::config::to_json(&r)?);
        Ok(())
    })
}

/// Covariance of the OU noise over [s, t], written row-major into `cov` (N*N entries).
///
/// # Safety
/// `sys` must be a live handle and `cov` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hypou_ou_covariance(sys: *const HypouSystem, s: f64, t: f64, cov: *mut f64, len: usize) -> HypouStatus {
    guard(|| {
        out_ptr(cov, "cov")?;
        let sys = &handle(sys, "sys")?.inner;
        let n = sys.n();
        if len < n * n {
            return Err(Fail(HypouStatus::BufferTooSmall, format!("need {} doubles, got {len}", n * n)));
        }
        let c = ou_covariance(sys, s, t)?.covariance;
        let dst = std::slice::from_raw_parts_mut(cov, n * n);
        for i in 0..n {
            for j in 0..n {
                dst[i * n + j] = c[(i, j)];
            }
        }
        Ok(())
    })
}

/// Solves the OU problem described by a `solve` config (the JSON accepted by `hypou solve`).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_solve_json(config_json: *const c_char, out: *mut *mut HypouField) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let c: SolveConfig = hypou::config::parse(str_arg(config_json, "config_json")?, "solve config")?;
        c.validate()?;
        let sys = OUSystem::from_descriptor(&c.system, false)?;
        let inner = solve_ou_pipeline(&sys, None, &c.source, &c.grid, &c.solver, c.seed)?;
        *out = Box::into_raw(Box::new(HypouField { inner }));
        Ok(())
    })
}

/// Solves with the added diffusion S(t) of a `perturb` config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_perturb_json(config_json: *const c_char, out: *mut *mut HypouField) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let c: PerturbConfig = hypou::config::parse(str_arg(config_json, "config_json")?, "perturb config")?;
        c.validate()?;
        let sys = OUSystem::from_descriptor(&c.system, false)?;
        let s = TimePSDPath::from_spec(&c.perturbation)?;
        let inner = solve_perturbed(&sys, Some(&s), &c.source, &c.grid, &c.solver, &c.mode, c.seed)?;
        *out = Box::into_raw(Box::new(HypouField { inner }));
        Ok(())
    })
}

/// # Safety
/// `field` must be NULL or a handle returned by this library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn hypou_field_free(field: *mut HypouField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Number of time levels (nt + 1) and of spatial nodes.
///
/// # Safety
/// `field` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hypou_field_shape(field: *const HypouField, n_times: *mut usize, n_space: *mut usize) -> HypouStatus {
    guard(|| {
        out_ptr(n_times, "n_times")?;
        out_ptr(n_space, "n_space")?;
        let g = &handle(field, "field")?.inner.grid;
        *n_times = g.nt + 1;
        *n_space = g.n_space();
        Ok(())
    })
}

/// Copies all values, time-major with the last spatial axis fastest.
///
/// # Safety
/// `field` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hypou_field_values(field: *const HypouField, buf: *mut f64, len: usize) -> HypouStatus {
    guard(|| {
        out_ptr(buf, "buf")?;
        let v = &handle(field, "field")?.inner.values;
        if len < v.len() {
            return Err(Fail(HypouStatus::BufferTooSmall, format!("need {} doubles, got {len}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// sup |u| over the grid.
///
/// # Safety
/// `field` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_field_sup_abs(field: *const HypouField, out: *mut f64) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = handle(field, "field")?.inner.sup_abs();
        Ok(())
    })
}

/// The field in the CSV layout of `hypou solve`; free with [`hypou_string_free`].
///
/// # Safety
/// `field` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hypou_field_csv(field: *const HypouField, out: *mut *mut c_char) -> HypouStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let mut buf = vec![];
        handle(field, "field")?.inner.write_csv(&mut buf)?;
        *out = into_c_string(String::from_utf8(buf).map_err(|e| Fail(HypouStatus::InvalidUtf8, e.to_string()))?);
        Ok(())
    })
}
