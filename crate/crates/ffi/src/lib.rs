//! C ABI for the simulation library: opaque spectrum handles, flat numeric
//! buffers, and integer error codes, so other languages can bind without
//! touching Rust types.
//!
//! Conventions:
//! * every fallible call returns a [`BeStatus`]; `BE_OK` is zero;
//! * output buffers are caller-allocated; lengths are explicit;
//! * a thread-local message describing the last failure is available via
//!   [`be_last_error_message`];
//! * handles from `be_spectrum_*` must be released with [`be_spectrum_free`].

use bloch_ere::bloch::{IntegratorConfig, InitialConditions};
use bloch_ere::ensemble::{self, Backend, DriveConfig, EnsembleConfig};
use bloch_ere::ere;
use bloch_ere::spectrum::{kernel_k, SpectrumSpec};
use bloch_ere::validity::{self, ValidityConfig};
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::CString;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeStatus {
    BeOk = 0,
    BeNullPointer = 1,
    BeInvalidArgument = 2,
    BeRunFailed = 3,
    BePanic = 4,
}

/// Field synthesis backend selector for `be_simulate`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeBackend {
    BeModeSum = 0,
    BeColoredNoise = 1,
}

/// SI constants for the coefficient helpers.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BeSiConstants {
    /// Dipole matrix element, C m.
    pub mu: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Vacuum permittivity, F/m.
    pub eps0: f64,
    /// Speed of light, m/s.
    pub c: f64,
    /// Transition angular frequency, rad/s.
    pub omega21: f64,
}

/// Consistency report between a supplied spontaneous rate and the one
/// implied by the coefficient ratio.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BeAbReport {
    pub b: f64,
    pub a_implied: f64,
    pub a_input: f64,
    pub relative_deviation: f64,
}

/// Opaque spectral-density handle.
pub struct BeSpectrum(SpectrumSpec);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg).unwrap_or_default();
    });
}

fn guard(f: impl FnOnce() -> BeStatus) -> BeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("panic across the C boundary");
            BeStatus::BePanic
        }
    }
}

/// Copy the message describing the most recent failure on this thread into
/// `buf` (NUL-terminated, truncated to `cap`). Returns the full message
/// length in bytes, excluding the terminator; call with a null `buf` to
/// query the length.
///
/// # Safety
/// When non-null, `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn be_last_error_message(buf: *mut c_char, cap: size_t) -> size_t {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static name for a status code.
#[no_mangle]
pub extern "C" fn be_status_name(status: BeStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        BeStatus::BeOk => b"ok\0",
        BeStatus::BeNullPointer => b"null pointer\0",
        BeStatus::BeInvalidArgument => b"invalid argument\0",
        BeStatus::BeRunFailed => b"run failed\0",
        BeStatus::BePanic => b"panic\0",
    };
    name.as_ptr() as *const c_char
}

/// Create a Lorentzian spectral density handle.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_spectrum_lorentzian(
    omega0: f64,
    gamma: f64,
    w_peak: f64,
    out: *mut *mut BeSpectrum,
) -> BeStatus {
    if out.is_null() {
        set_error("out is null");
        return BeStatus::BeNullPointer;
    }
    guard(|| match SpectrumSpec::lorentzian(omega0, gamma, w_peak) {
        Ok(spec) => {
            *out = Box::into_raw(Box::new(BeSpectrum(spec)));
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    })
}

/// Create a tabulated spectral density handle from parallel arrays of
/// frequencies (strictly increasing) and densities (nonnegative).
///
/// # Safety
/// `omegas` and `densities` must point to `len` readable doubles; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn be_spectrum_tabulated(
    omegas: *const f64,
    densities: *const f64,
    len: size_t,
    out: *mut *mut BeSpectrum,
) -> BeStatus {
    if omegas.is_null() || densities.is_null() || out.is_null() {
        set_error("null input array");
        return BeStatus::BeNullPointer;
    }
    let os = std::slice::from_raw_parts(omegas, len);
    let ws = std::slice::from_raw_parts(densities, len);
    guard(|| {
        let table: Vec<(f64, f64)> = os.iter().copied().zip(ws.iter().copied()).collect();
        match SpectrumSpec::tabulated(table) {
            Ok(spec) => {
                *out = Box::into_raw(Box::new(BeSpectrum(spec)));
                BeStatus::BeOk
            }
            Err(e) => {
                set_error(e.to_string());
                BeStatus::BeInvalidArgument
            }
        }
    })
}

/// Release a spectrum handle. Null is ignored.
///
/// # Safety
/// `spec` must have come from `be_spectrum_lorentzian` or
/// `be_spectrum_tabulated` and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn be_spectrum_free(spec: *mut BeSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Evaluate the spectral density at `omega`.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn be_spectrum_eval_w(
    spec: *const BeSpectrum,
    omega: f64,
    out: *mut f64,
) -> BeStatus {
    if spec.is_null() || out.is_null() {
        set_error("null spectrum or output");
        return BeStatus::BeNullPointer;
    }
    guard(|| {
        *out = (*spec).0.eval_w(omega);
        BeStatus::BeOk
    })
}

/// Correlation function of the spectrum at `len` nonnegative lags, split
/// into real and imaginary outputs.
///
/// # Safety
/// `lags`, `out_re`, `out_im` must each cover `len` doubles; `spec` must be
/// a live handle.
#[no_mangle]
pub unsafe extern "C" fn be_analytic_correlation(
    spec: *const BeSpectrum,
    omega21: f64,
    lags: *const f64,
    len: size_t,
    out_re: *mut f64,
    out_im: *mut f64,
) -> BeStatus {
    if spec.is_null() || lags.is_null() || out_re.is_null() || out_im.is_null() {
        set_error("null argument");
        return BeStatus::BeNullPointer;
    }
    let lags = std::slice::from_raw_parts(lags, len);
    let re = std::slice::from_raw_parts_mut(out_re, len);
    let im = std::slice::from_raw_parts_mut(out_im, len);
    guard(|| match (*spec).0.analytic_correlation(omega21, lags) {
        Ok(corr) => {
            for (i, v) in corr.values.iter().enumerate() {
                re[i] = v.re;
                im[i] = v.im;
            }
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    })
}

/// Finite-time response kernel `K(beta)` for decay rate `a` at time `t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn be_kernel_k(beta: f64, a: f64, t: f64, out: *mut f64) -> BeStatus {
    if out.is_null() {
        set_error("out is null");
        return BeStatus::BeNullPointer;
    }
    if !(a > 0.0) || !(t >= 0.0) {
        set_error("kernel needs a > 0 and t >= 0");
        return BeStatus::BeInvalidArgument;
    }
    *out = kernel_k(beta, a, t);
    BeStatus::BeOk
}

/// Closed-form rate-equation inversion at the given times.
///
/// # Safety
/// `times` and `out` must cover `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn be_ere_solve(
    a: f64,
    r: f64,
    n0: f64,
    times: *const f64,
    len: size_t,
    out: *mut f64,
) -> BeStatus {
    if times.is_null() || out.is_null() {
        set_error("null array");
        return BeStatus::BeNullPointer;
    }
    let grid = std::slice::from_raw_parts(times, len);
    let out = std::slice::from_raw_parts_mut(out, len);
    guard(|| match ere::EreParams::new(a, r, n0) {
        Ok(params) => {
            out.copy_from_slice(&ere::solve_ere(&params, grid));
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    })
}

/// Stimulated-rate coefficient for the given SI constants.
///
/// # Safety
/// `si` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn be_b_coefficient(si: *const BeSiConstants, out: *mut f64) -> BeStatus {
    if si.is_null() || out.is_null() {
        set_error("null argument");
        return BeStatus::BeNullPointer;
    }
    let s = *si;
    match ere::SiConstants::new(s.mu, s.hbar, s.eps0, s.c, s.omega21) {
        Ok(si) => {
            *out = ere::b_coefficient(&si);
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    }
}

/// Consistency check of a supplied spontaneous rate against the coefficient
/// ratio.
///
/// # Safety
/// `si` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn be_ab_ratio_check(
    si: *const BeSiConstants,
    a_input: f64,
    out: *mut BeAbReport,
) -> BeStatus {
    if si.is_null() || out.is_null() {
        set_error("null argument");
        return BeStatus::BeNullPointer;
    }
    let s = *si;
    match ere::SiConstants::new(s.mu, s.hbar, s.eps0, s.c, s.omega21) {
        Ok(si) => {
            let report = ere::ab_ratio_check(&si, a_input);
            *out = BeAbReport {
                b: report.b,
                a_implied: report.a_implied,
                a_input: report.a_input,
                relative_deviation: report.relative_deviation,
            };
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    }
}

/// Applicability ratio `2 B W(omega21) / sqrt(gamma^2 + delta^2)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn be_bound_ratio(
    gamma: f64,
    delta: f64,
    r0: f64,
    out: *mut f64,
) -> BeStatus {
    if out.is_null() {
        set_error("out is null");
        return BeStatus::BeNullPointer;
    }
    match ValidityConfig::new(gamma, delta, r0, 1) {
        Ok(cfg) => {
            *out = validity::bound_ratio(&cfg);
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    }
}

/// Derivative-series magnitudes for orders `0..=p_max`.
///
/// # Safety
/// `out` must cover `p_max + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn be_sp_magnitudes(
    gamma: f64,
    delta: f64,
    r0: f64,
    a: f64,
    p_max: size_t,
    out: *mut f64,
) -> BeStatus {
    if out.is_null() {
        set_error("out is null");
        return BeStatus::BeNullPointer;
    }
    match ValidityConfig::new(gamma, delta, r0, p_max.max(1)) {
        Ok(cfg) => {
            let sp = validity::sp_magnitudes(&cfg, a);
            std::slice::from_raw_parts_mut(out, p_max + 1).copy_from_slice(&sp[..=p_max]);
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeInvalidArgument
        }
    }
}

/// Run an ensemble of `n_atoms` driven atoms from the ground state and write
/// the averaged inversion on a uniform grid of `n_points + 1` samples over
/// `[0, t_end]`. Deterministic for a fixed `seed`.
///
/// # Safety
/// `spec` must be a live handle and the three output arrays must each cover
/// `n_points + 1` doubles.
#[no_mangle]
pub unsafe extern "C" fn be_simulate(
    spec: *const BeSpectrum,
    backend: BeBackend,
    n_modes: size_t,
    n_atoms: u64,
    t_end: f64,
    n_points: size_t,
    seed: u64,
    out_t: *mut f64,
    out_n_bar: *mut f64,
    out_stderr: *mut f64,
) -> BeStatus {
    if spec.is_null() || out_t.is_null() || out_n_bar.is_null() || out_stderr.is_null() {
        set_error("null argument");
        return BeStatus::BeNullPointer;
    }
    if !(t_end > 0.0) || n_points == 0 {
        set_error("t_end must be positive and n_points nonzero");
        return BeStatus::BeInvalidArgument;
    }
    let grid: Vec<f64> = (0..=n_points)
        .map(|i| t_end * i as f64 / n_points as f64)
        .collect();
    let cfg = EnsembleConfig {
        spec: (*spec).0.clone(),
        omega21: 0.0,
        drive: DriveConfig {
            backend: match backend {
                BeBackend::BeModeSum => Backend::ModeSum,
                BeBackend::BeColoredNoise => Backend::ColoredNoise,
            },
            n_modes: n_modes.max(1),
            ..DriveConfig::default()
        },
        integrator: IntegratorConfig::default(),
        init: InitialConditions::default(),
        n_atoms,
        seed,
        workers: 0,
    };
    guard(|| match ensemble::run_ensemble(&cfg, &grid) {
        Ok(trace) => {
            std::slice::from_raw_parts_mut(out_t, grid.len()).copy_from_slice(&trace.times);
            std::slice::from_raw_parts_mut(out_n_bar, grid.len()).copy_from_slice(&trace.n_bar);
            std::slice::from_raw_parts_mut(out_stderr, grid.len()).copy_from_slice(&trace.stderr);
            BeStatus::BeOk
        }
        Err(e) => {
            set_error(e.to_string());
            BeStatus::BeRunFailed
        }
    })
}
