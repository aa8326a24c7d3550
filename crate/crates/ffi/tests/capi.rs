//! Exercises the C entry points exactly as a foreign caller would: raw
//! pointers, explicit lengths, status codes.

use bloch_ere_ffi::*;
use std::ptr;

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { be_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

fn codata(omega21: f64) -> BeSiConstants {
    BeSiConstants {
        mu: 3.33564e-30,
        hbar: 1.054571817e-34,
        eps0: 8.8541878128e-12,
        c: 299_792_458.0,
        omega21,
    }
}

#[test]
fn spectrum_handle_lifecycle_and_eval() {
    let mut spec: *mut BeSpectrum = ptr::null_mut();
    let status = unsafe { be_spectrum_lorentzian(5.0, 2.0, 1.0, &mut spec) };
    assert_eq!(status, BeStatus::BeOk);
    assert!(!spec.is_null());

    let mut w = 0.0;
    assert_eq!(unsafe { be_spectrum_eval_w(spec, 7.0, &mut w) }, BeStatus::BeOk);
    assert!((w - 0.5).abs() < 1e-12);

    unsafe { be_spectrum_free(spec) };
    unsafe { be_spectrum_free(ptr::null_mut()) }; // null is ignored
}

#[test]
fn invalid_spectrum_sets_a_message() {
    let mut spec: *mut BeSpectrum = ptr::null_mut();
    let status = unsafe { be_spectrum_lorentzian(0.0, -1.0, 1.0, &mut spec) };
    assert_eq!(status, BeStatus::BeInvalidArgument);
    assert!(last_error().contains("half-width"));
    assert_eq!(
        unsafe { be_spectrum_lorentzian(0.0, 1.0, 1.0, ptr::null_mut()) },
        BeStatus::BeNullPointer
    );
}

#[test]
fn tabulated_spectrum_roundtrip() {
    let omegas = [-1.0, 0.0, 1.0];
    let densities = [0.0, 2.0, 0.0];
    let mut spec: *mut BeSpectrum = ptr::null_mut();
    let status = unsafe {
        be_spectrum_tabulated(omegas.as_ptr(), densities.as_ptr(), 3, &mut spec)
    };
    assert_eq!(status, BeStatus::BeOk);
    let mut w = 0.0;
    unsafe { be_spectrum_eval_w(spec, 0.5, &mut w) };
    assert!((w - 1.0).abs() < 1e-12);
    unsafe { be_spectrum_free(spec) };

    // unsorted table rejected
    let bad = unsafe {
        be_spectrum_tabulated(densities.as_ptr(), omegas.as_ptr(), 3, &mut spec)
    };
    assert_eq!(bad, BeStatus::BeInvalidArgument);
}

#[test]
fn correlation_matches_library_closed_form() {
    let mut spec: *mut BeSpectrum = ptr::null_mut();
    unsafe { be_spectrum_lorentzian(-2.0, 1.0, 0.2, &mut spec) };
    let lags = [0.0, 0.5, 1.0, 2.0];
    let mut re = [0.0; 4];
    let mut im = [0.0; 4];
    let status = unsafe {
        be_analytic_correlation(spec, 0.0, lags.as_ptr(), 4, re.as_mut_ptr(), im.as_mut_ptr())
    };
    assert_eq!(status, BeStatus::BeOk);
    for (i, &s) in lags.iter().enumerate() {
        // gamma R0/4 = 0.05, delta = 2
        let mag = (re[i] * re[i] + im[i] * im[i]).sqrt();
        assert!((mag - 0.05 * (-s).exp()).abs() < 1e-12);
        let phase = im[i].atan2(re[i]);
        let expected = -2.0 * s;
        let wrapped = (phase - expected).rem_euclid(std::f64::consts::TAU);
        assert!(wrapped < 1e-9 || wrapped > std::f64::consts::TAU - 1e-9);
    }
    unsafe { be_spectrum_free(spec) };
}

#[test]
fn kernel_and_rate_solution() {
    let mut k = 0.0;
    assert_eq!(unsafe { be_kernel_k(0.0, 1.0, 1e3, &mut k) }, BeStatus::BeOk);
    assert!((k - 2.0).abs() < 1e-9);
    assert_eq!(
        unsafe { be_kernel_k(0.0, -1.0, 1.0, &mut k) },
        BeStatus::BeInvalidArgument
    );

    let times = [0.0, 0.5, 1.0, 5.0, 50.0];
    let mut out = [0.0; 5];
    let status = unsafe { be_ere_solve(1.0, 1.0, -1.0, times.as_ptr(), 5, out.as_mut_ptr()) };
    assert_eq!(status, BeStatus::BeOk);
    assert_eq!(out[0], -1.0);
    assert!((out[4] + 0.5).abs() < 1e-12);
    for (i, &t) in times.iter().enumerate() {
        let expect = -0.5 - 0.5 * (-2.0 * t).exp();
        assert!((out[i] - expect).abs() < 1e-12);
    }

    let bad = unsafe { be_ere_solve(0.0, 1.0, -1.0, times.as_ptr(), 5, out.as_mut_ptr()) };
    assert_eq!(bad, BeStatus::BeInvalidArgument);
}

#[test]
fn coefficient_helpers() {
    let si = codata(2.5e15);
    let mut b = 0.0;
    assert_eq!(unsafe { be_b_coefficient(&si, &mut b) }, BeStatus::BeOk);
    assert!((b / 1.1832756097607433e20 - 1.0).abs() < 1e-12);

    let mut report = BeAbReport {
        b: 0.0,
        a_implied: 0.0,
        a_input: 0.0,
        relative_deviation: 0.0,
    };
    assert_eq!(
        unsafe { be_ab_ratio_check(&si, 733196.2674219297, &mut report) },
        BeStatus::BeOk
    );
    assert!(report.relative_deviation < 1e-9);

    let mut r = 0.0;
    assert_eq!(unsafe { be_bound_ratio(3.0, 3.0, 1.0, &mut r) }, BeStatus::BeOk);
    assert!((r - 1.0 / (2.0 * 2.0f64.sqrt() * 3.0)).abs() < 1e-12);

    let mut sp = [0.0; 4];
    assert_eq!(
        unsafe { be_sp_magnitudes(10.0, 0.0, 0.1, 1.0, 3, sp.as_mut_ptr()) },
        BeStatus::BeOk
    );
    for w in sp.windows(2) {
        assert!((w[1] / w[0] - 0.21).abs() < 1e-12);
    }
}

#[test]
fn simulate_is_deterministic_and_matches_the_oracle() {
    let mut spec: *mut BeSpectrum = ptr::null_mut();
    unsafe { be_spectrum_lorentzian(0.0, 20.0, 0.2, &mut spec) };
    let n_points = 40usize;
    let mut t = vec![0.0; n_points + 1];
    let mut n1 = vec![0.0; n_points + 1];
    let mut n2 = vec![0.0; n_points + 1];
    let mut se = vec![0.0; n_points + 1];
    let status = unsafe {
        be_simulate(
            spec,
            BeBackend::BeColoredNoise,
            0,
            600,
            10.0,
            n_points,
            77,
            t.as_mut_ptr(),
            n1.as_mut_ptr(),
            se.as_mut_ptr(),
        )
    };
    assert_eq!(status, BeStatus::BeOk);
    let status = unsafe {
        be_simulate(
            spec,
            BeBackend::BeColoredNoise,
            0,
            600,
            10.0,
            n_points,
            77,
            t.as_mut_ptr(),
            n2.as_mut_ptr(),
            se.as_mut_ptr(),
        )
    };
    assert_eq!(status, BeStatus::BeOk);
    assert_eq!(n1, n2);
    assert_eq!(n1[0], -1.0);
    // steady state near -1/(1+R) with R = 0.2
    let tail = n1[n_points];
    assert!((tail + 1.0 / 1.2).abs() < 0.05, "tail {tail}");

    // too few atoms: run failure with a message
    let status = unsafe {
        be_simulate(
            spec,
            BeBackend::BeColoredNoise,
            0,
            1,
            10.0,
            n_points,
            77,
            t.as_mut_ptr(),
            n1.as_mut_ptr(),
            se.as_mut_ptr(),
        )
    };
    assert_eq!(status, BeStatus::BeRunFailed);
    assert!(last_error().contains("at least 2"));
    unsafe { be_spectrum_free(spec) };
}

#[test]
fn status_names_are_stable() {
    let name = unsafe { std::ffi::CStr::from_ptr(be_status_name(BeStatus::BeOk)) };
    assert_eq!(name.to_str().unwrap(), "ok");
    let name = unsafe { std::ffi::CStr::from_ptr(be_status_name(BeStatus::BeRunFailed)) };
    assert_eq!(name.to_str().unwrap(), "run failed");
}
