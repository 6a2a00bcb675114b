//! C ABI over the lrdirac laboratory.
//!
//! Handles are opaque and owned by the caller once returned; release them with
//! the matching `_free`. Every fallible call returns an [`LrdiracStatus`] and
//! records a message retrievable with [`lrdirac_last_error`].

use lrdirac::algebra::{apply_projection, Branch};
use lrdirac::cli::{run, Outcome, Subcommand};
use lrdirac::config::ExperimentConfig;
use lrdirac::error::LabError;
use num_complex::Complex64 as C64;
use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LrdiracStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque configuration handle.
pub struct LrdiracConfig {
    inner: ExperimentConfig,
}

/// Opaque handle to the reports of one run.
pub struct LrdiracOutcome {
    inner: Outcome,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: LrdiracStatus, msg: impl Into<String>) -> LrdiracStatus {
    set_error(msg);
    status
}

fn from_lab(e: LabError) -> LrdiracStatus {
    let status = match e {
        LabError::Config { .. } => LrdiracStatus::Config,
        LabError::Numerical { .. } => LrdiracStatus::Numerical,
        LabError::Io(_) => LrdiracStatus::Io,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> LrdiracStatus) -> LrdiracStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(LrdiracStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, LrdiracStatus> {
    if p.is_null() {
        return Err(fail(LrdiracStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LrdiracStatus::InvalidArgument, format!("{name} is not valid UTF-8")))
}

/// Copies the last error message (NUL terminated) into `buf`.
/// Returns the message length excluding the terminator; truncates when `len` is too small.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// New configuration holding the defaults.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_config_new(out: *mut *mut LrdiracConfig) -> LrdiracStatus {
    guard(|| {
        if out.is_null() {
            return fail(LrdiracStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(LrdiracConfig { inner: ExperimentConfig::default() }));
        LrdiracStatus::Ok
    })
}

/// Parses a TOML document on top of the defaults.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_config_from_toml(toml: *const c_char, out: *mut *mut LrdiracConfig) -> LrdiracStatus {
    guard(|| {
        if out.is_null() {
            return fail(LrdiracStatus::NullPointer, "out is null");
        }
        let text = match str_arg(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(LrdiracConfig { inner }));
                LrdiracStatus::Ok
            }
            Err(e) => from_lab(e),
        }
    })
}

/// Sets one dotted key from its TOML text, e.g. `("potential.rho", "1.5")`.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_config_set(cfg: *mut LrdiracConfig, key: *const c_char, value: *const c_char) -> LrdiracStatus {
    guard(|| {
        let Some(cfg) = cfg.as_mut() else {
            return fail(LrdiracStatus::NullPointer, "cfg is null");
        };
        let (key, value) = match (str_arg(key, "key"), str_arg(value, "value")) {
            (Ok(k), Ok(v)) => (k, v),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        match cfg.inner.set(key, value) {
            Ok(()) => LrdiracStatus::Ok,
            Err(e) => from_lab(e),
        }
    })
}

/// Checks every derived quantity of the configuration.
///
/// # Safety
/// `cfg` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_config_validate(cfg: *const LrdiracConfig) -> LrdiracStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(LrdiracStatus::NullPointer, "cfg is null");
        };
        match cfg.inner.validate() {
            Ok(()) => LrdiracStatus::Ok,
            Err(e) => from_lab(e),
        }
    })
}

/// # Safety
/// `cfg` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_config_free(cfg: *mut LrdiracConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs a subcommand by name (`"algebra-check"`, `"wave-op"`, ...). No files are written.
///
/// # Safety
/// `cfg` must come from this library, `subcommand` must be NUL-terminated, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_run(
    cfg: *const LrdiracConfig,
    subcommand: *const c_char,
    out: *mut *mut LrdiracOutcome,
) -> LrdiracStatus {
    guard(|| {
        let Some(cfg) = cfg.as_ref() else {
            return fail(LrdiracStatus::NullPointer, "cfg is null");
        };
        if out.is_null() {
            return fail(LrdiracStatus::NullPointer, "out is null");
        }
        let name = match str_arg(subcommand, "subcommand") {
            Ok(n) => n,
            Err(s) => return s,
        };
        let Some(sub) = Subcommand::from_name(name) else {
            return fail(LrdiracStatus::InvalidArgument, format!("unknown subcommand `{name}`"));
        };
        match run(sub, &cfg.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(LrdiracOutcome { inner }));
                LrdiracStatus::Ok
            }
            Err(e) => from_lab(e),
        }
    })
}

/// Number of reports in the outcome, 0 for null.
///
/// # Safety
/// `o` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_outcome_len(o: *const LrdiracOutcome) -> usize {
    o.as_ref().map_or(0, |o| o.inner.reports.len())
}

/// 1 when every report passed, 0 otherwise.
///
/// # Safety
/// `o` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_outcome_passed(o: *const LrdiracOutcome) -> i32 {
    o.as_ref().map_or(0, |o| o.inner.pass() as i32)
}

/// Copies report `index`: verdict (1 pass), row count, fitted exponent (NaN if none),
/// and up to `cap` abscissae and distances.
///
/// # Safety
/// `o` must come from this library; `xs` and `ds` must be null or hold `cap` doubles;
/// the scalar outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_outcome_report(
    o: *const LrdiracOutcome,
    index: usize,
    pass: *mut i32,
    rows: *mut usize,
    exponent: *mut f64,
    xs: *mut f64,
    ds: *mut f64,
    cap: usize,
) -> LrdiracStatus {
    guard(|| {
        let Some(o) = o.as_ref() else {
            return fail(LrdiracStatus::NullPointer, "outcome is null");
        };
        if pass.is_null() || rows.is_null() || exponent.is_null() {
            return fail(LrdiracStatus::NullPointer, "output scalar is null");
        }
        let Some(r) = o.inner.reports.get(index) else {
            return fail(LrdiracStatus::InvalidArgument, format!("report index {index} out of range"));
        };
        *pass = r.pass as i32;
        *rows = r.distances.len();
        *exponent = r.fitted_exponent.unwrap_or(f64::NAN);
        if r.distances.len() > cap && (!xs.is_null() || !ds.is_null()) {
            return fail(LrdiracStatus::BufferTooSmall, format!("need {} slots", r.distances.len()));
        }
        if !xs.is_null() {
            std::ptr::copy_nonoverlapping(r.abscissae.as_ptr(), xs, r.abscissae.len().min(cap));
        }
        if !ds.is_null() {
            std::ptr::copy_nonoverlapping(r.distances.as_ptr(), ds, r.distances.len());
        }
        LrdiracStatus::Ok
    })
}

/// # Safety
/// `o` must be null or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_outcome_free(o: *mut LrdiracOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Free dispersion sqrt(|zeta|^2 + m^2).
///
/// # Safety
/// `zeta` must point to 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_energy(zeta: *const f64, mass: f64) -> f64 {
    if zeta.is_null() {
        return f64::NAN;
    }
    let z = std::slice::from_raw_parts(zeta, 3);
    lrdirac::algebra::eta(&[z[0], z[1], z[2]], mass)
}

/// Applies the spectral projection of the free symbol at `zeta` to a spinor given as
/// 4 interleaved (re, im) pairs, in place. `branch` is +1 or -1.
///
/// # Safety
/// `zeta` must point to 3 doubles and `spinor` to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lrdirac_project(zeta: *const f64, mass: f64, branch: i32, spinor: *mut f64) -> LrdiracStatus {
    guard(|| {
        if zeta.is_null() || spinor.is_null() {
            return fail(LrdiracStatus::NullPointer, "zeta or spinor is null");
        }
        let b = match branch {
            1 => Branch::Positive,
            -1 => Branch::Negative,
            _ => return fail(LrdiracStatus::InvalidArgument, "branch must be +1 or -1"),
        };
        if !(mass > 0.0) {
            return fail(LrdiracStatus::InvalidArgument, "mass must be positive");
        }
        let z = std::slice::from_raw_parts(zeta, 3);
        let s = std::slice::from_raw_parts_mut(spinor, 8);
        let mut v = [C64::new(0.0, 0.0); 4];
        for (i, c) in v.iter_mut().enumerate() {
            *c = C64::new(s[2 * i], s[2 * i + 1]);
        }
        let w = apply_projection(&[z[0], z[1], z[2]], mass, b, &v);
        for (i, c) in w.iter().enumerate() {
            s[2 * i] = c.re;
            s[2 * i + 1] = c.im;
        }
        LrdiracStatus::Ok
    })
}
