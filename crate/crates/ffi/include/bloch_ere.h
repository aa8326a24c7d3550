/* C interface to the bloch-ere simulation library. */

#ifndef BLOCH_ERE_H
#define BLOCH_ERE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  BE_OK = 0,
  BE_NULL_POINTER = 1,
  BE_INVALID_ARGUMENT = 2,
  BE_RUN_FAILED = 3,
  BE_PANIC = 4,
} BeStatus;

/**
 * Field synthesis backend selector for `be_simulate`.
 */
typedef enum {
  BE_MODE_SUM = 0,
  BE_COLORED_NOISE = 1,
} BeBackend;

/**
 * Opaque spectral-density handle.
 */
typedef struct BeSpectrum BeSpectrum;

/**
 * SI constants for the coefficient helpers.
 */
typedef struct {
  /**
   * Dipole matrix element, C m.
   */
  double mu;
  /**
   * Reduced Planck constant, J s.
   */
  double hbar;
  /**
   * Vacuum permittivity, F/m.
   */
  double eps0;
  /**
   * Speed of light, m/s.
   */
  double c;
  /**
   * Transition angular frequency, rad/s.
   */
  double omega21;
} BeSiConstants;

/**
 * Consistency report between a supplied spontaneous rate and the one
 * implied by the coefficient ratio.
 */
typedef struct {
  double b;
  double a_implied;
  double a_input;
  double relative_deviation;
} BeAbReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message describing the most recent failure on this thread into
 * `buf` (NUL-terminated, truncated to `cap`). Returns the full message
 * length in bytes, excluding the terminator; call with a null `buf` to
 * query the length.
 *
 * # Safety
 * When non-null, `buf` must point to `cap` writable bytes.
 */
size_t be_last_error_message(char *buf, size_t cap);

/**
 * Static name for a status code.
 */
const char *be_status_name(BeStatus status);

/**
 * Create a Lorentzian spectral density handle.
 *
 * # Safety
 * `out` must point to writable storage for one pointer.
 */
BeStatus be_spectrum_lorentzian(double omega0, double gamma, double w_peak, BeSpectrum **out);

/**
 * Create a tabulated spectral density handle from parallel arrays of
 * frequencies (strictly increasing) and densities (nonnegative).
 *
 * # Safety
 * `omegas` and `densities` must point to `len` readable doubles; `out` must
 * point to writable storage for one pointer.
 */
BeStatus be_spectrum_tabulated(const double *omegas,
                               const double *densities,
                               size_t len,
                               BeSpectrum **out);

/**
 * Release a spectrum handle. Null is ignored.
 *
 * # Safety
 * `spec` must have come from `be_spectrum_lorentzian` or
 * `be_spectrum_tabulated` and not have been freed already.
 */
void be_spectrum_free(BeSpectrum *spec);

/**
 * Evaluate the spectral density at `omega`.
 *
 * # Safety
 * `spec` must be a live handle; `out` must be writable.
 */
BeStatus be_spectrum_eval_w(const BeSpectrum *spec, double omega, double *out);

/**
 * Correlation function of the spectrum at `len` nonnegative lags, split
 * into real and imaginary outputs.
 *
 * # Safety
 * `lags`, `out_re`, `out_im` must each cover `len` doubles; `spec` must be
 * a live handle.
 */
BeStatus be_analytic_correlation(const BeSpectrum *spec,
                                 double omega21,
                                 const double *lags,
                                 size_t len,
                                 double *out_re,
                                 double *out_im);

/**
 * Finite-time response kernel `K(beta)` for decay rate `a` at time `t`.
 *
 * # Safety
 * `out` must be writable.
 */
BeStatus be_kernel_k(double beta, double a, double t, double *out);

/**
 * Closed-form rate-equation inversion at the given times.
 *
 * # Safety
 * `times` and `out` must cover `len` doubles.
 */
BeStatus be_ere_solve(double a, double r, double n0, const double *times, size_t len, double *out);

/**
 * Stimulated-rate coefficient for the given SI constants.
 *
 * # Safety
 * `si` and `out` must be valid.
 */
BeStatus be_b_coefficient(const BeSiConstants *si, double *out);

/**
 * Consistency check of a supplied spontaneous rate against the coefficient
 * ratio.
 *
 * # Safety
 * `si` and `out` must be valid.
 */
BeStatus be_ab_ratio_check(const BeSiConstants *si, double a_input, BeAbReport *out);

/**
 * Applicability ratio `2 B W(omega21) / sqrt(gamma^2 + delta^2)`.
 *
 * # Safety
 * `out` must be writable.
 */
BeStatus be_bound_ratio(double gamma, double delta, double r0, double *out);

/**
 * Derivative-series magnitudes for orders `0..=p_max`.
 *
 * # Safety
 * `out` must cover `p_max + 1` doubles.
 */
BeStatus be_sp_magnitudes(double gamma,
                          double delta,
                          double r0,
                          double a,
                          size_t p_max,
                          double *out);

/**
 * Run an ensemble of `n_atoms` driven atoms from the ground state and write
 * the averaged inversion on a uniform grid of `n_points + 1` samples over
 * `[0, t_end]`. Deterministic for a fixed `seed`.
 *
 * # Safety
 * `spec` must be a live handle and the three output arrays must each cover
 * `n_points + 1` doubles.
 */
BeStatus be_simulate(const BeSpectrum *spec,
                     BeBackend backend,
                     size_t n_modes,
                     uint64_t n_atoms,
                     double t_end,
                     size_t n_points,
                     uint64_t seed,
                     double *out_t,
                     double *out_n_bar,
                     double *out_stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCH_ERE_H */
