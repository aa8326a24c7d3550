//! Spectral energy densities and their derived quantities: correlation
//! functions, discretized mode weights, and the finite-time response kernel.
//!
//! The simulation core works in reduced units where the spontaneous rate `A`
//! sets the time scale and the stored spectral density is premultiplied so
//! that its value at the transition frequency is the pump rate
//! `R = 2 B W(omega21)` directly. With that convention the drive correlation
//! is `C(s) = (1/4pi) * Int W(omega21 + beta) e^{i beta s} d beta`, which for
//! a Lorentzian of half-width `gamma`, peak `R0` and detuning
//! `delta = omega21 - omega0` evaluates to
//! `C(s) = (gamma R0 / 4) e^{-i delta s} e^{-gamma s}`.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

/// Relative change threshold for declaring quadrature convergence when the
/// evaluation grid is doubled.
const QUAD_REL_TOL: f64 = 1e-3;
/// Maximum number of grid doublings before giving up on a quadrature.
const QUAD_MAX_DOUBLINGS: u32 = 14;

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("lorentzian half-width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("spectral density must be nonnegative, got {value} at omega={omega}")]
    NegativeDensity { omega: f64, value: f64 },
    #[error("tabulated spectrum needs at least two points, got {0}")]
    TableTooShort(usize),
    #[error("tabulated frequencies must be strictly increasing (row {0})")]
    TableNotSorted(usize),
    #[error("quadrature did not converge to {tol:e} after {doublings} grid doublings")]
    QuadratureNonConvergence { tol: f64, doublings: u32 },
    #[error("negative lag {0} (correlations are defined for s >= 0)")]
    NegativeLag(f64),
    #[error("mode count must be at least 1")]
    NoModes,
    #[error("mode span is empty or inverted: [{0}, {1}]")]
    EmptySpan(f64, f64),
    #[error("bad spectrum table line {line}: {reason}")]
    TableParse { line: usize, reason: String },
}

/// A spectral energy density W(omega), either a Lorentzian line or a
/// tabulated curve with linear interpolation and zero extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumSpec {
    Lorentzian {
        /// Center of the spectrum.
        omega0: f64,
        /// Half-width at half-maximum.
        gamma: f64,
        /// Peak density W(omega0). In reduced units this equals the peak
        /// pump rate R0.
        w_peak: f64,
    },
    Tabulated {
        /// (omega, W) samples, strictly increasing in omega.
        table: Vec<(f64, f64)>,
    },
}

impl SpectrumSpec {
    pub fn lorentzian(omega0: f64, gamma: f64, w_peak: f64) -> Result<Self, SpectrumError> {
        if !(gamma > 0.0) {
            return Err(SpectrumError::NonPositiveWidth(gamma));
        }
        if !(w_peak >= 0.0) {
            return Err(SpectrumError::NegativeDensity {
                omega: omega0,
                value: w_peak,
            });
        }
        Ok(SpectrumSpec::Lorentzian {
            omega0,
            gamma,
            w_peak,
        })
    }

    pub fn tabulated(table: Vec<(f64, f64)>) -> Result<Self, SpectrumError> {
        if table.len() < 2 {
            return Err(SpectrumError::TableTooShort(table.len()));
        }
        for (i, win) in table.windows(2).enumerate() {
            if !(win[1].0 > win[0].0) {
                return Err(SpectrumError::TableNotSorted(i + 1));
            }
        }
        if let Some(&(omega, value)) = table.iter().find(|&&(_, w)| !(w >= 0.0)) {
            return Err(SpectrumError::NegativeDensity { omega, value });
        }
        Ok(SpectrumSpec::Tabulated { table })
    }

    /// Parse a two-column `(omega, W)` text table. `#` starts a comment.
    pub fn from_two_column(text: &str) -> Result<Self, SpectrumError> {
        let mut table = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64, SpectrumError> {
                tok.ok_or_else(|| SpectrumError::TableParse {
                    line: i + 1,
                    reason: "expected two columns".into(),
                })?
                .parse()
                .map_err(|e| SpectrumError::TableParse {
                    line: i + 1,
                    reason: format!("{e}"),
                })
            };
            let omega = parse(cols.next())?;
            let w = parse(cols.next())?;
            if cols.next().is_some() {
                return Err(SpectrumError::TableParse {
                    line: i + 1,
                    reason: "expected exactly two columns".into(),
                });
            }
            table.push((omega, w));
        }
        Self::tabulated(table)
    }

    /// W(omega). Total on any valid spec: linear interpolation inside a
    /// table, zero outside, exact Lorentzian otherwise.
    pub fn eval_w(&self, omega: f64) -> f64 {
        match self {
            SpectrumSpec::Lorentzian {
                omega0,
                gamma,
                w_peak,
            } => {
                let d = omega - omega0;
                w_peak * gamma * gamma / (gamma * gamma + d * d)
            }
            SpectrumSpec::Tabulated { table } => {
                let first = table[0];
                let last = table[table.len() - 1];
                if omega < first.0 || omega > last.0 {
                    return 0.0;
                }
                let idx = table.partition_point(|&(x, _)| x <= omega);
                if idx == 0 {
                    return first.1;
                }
                if idx == table.len() {
                    return last.1;
                }
                let (x0, y0) = table[idx - 1];
                let (x1, y1) = table[idx];
                y0 + (y1 - y0) * (omega - x0) / (x1 - x0)
            }
        }
    }

    /// Frequency span outside which the density is identically zero
    /// (tabulated) or considered negligible is up to the caller (Lorentzian).
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            SpectrumSpec::Lorentzian { .. } => None,
            SpectrumSpec::Tabulated { table } => Some((table[0].0, table[table.len() - 1].0)),
        }
    }

    /// Total spectral weight `Int W(omega) d omega`. Analytic for the
    /// Lorentzian, exact piecewise-linear integral for tables.
    pub fn total_weight(&self) -> f64 {
        match self {
            SpectrumSpec::Lorentzian { gamma, w_peak, .. } => PI * gamma * w_peak,
            SpectrumSpec::Tabulated { table } => table
                .windows(2)
                .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
                .sum(),
        }
    }

    /// The drive correlation function at the given nonnegative lags,
    /// `C(s) = (1/4pi) * Int W(omega21 + beta) e^{i beta s} d beta`.
    ///
    /// Lorentzian spectra use the closed form; tabulated spectra are
    /// integrated by the trapezoidal rule with grid doubling until the
    /// result moves by less than 0.1% of `|C(0)|`.
    pub fn analytic_correlation(
        &self,
        omega21: f64,
        lags: &[f64],
    ) -> Result<CorrelationFn, SpectrumError> {
        if let Some(&s) = lags.iter().find(|&&s| s < 0.0) {
            return Err(SpectrumError::NegativeLag(s));
        }
        match self {
            SpectrumSpec::Lorentzian {
                omega0,
                gamma,
                w_peak,
            } => {
                let delta = omega21 - omega0;
                let amplitude = gamma * w_peak / 4.0;
                let values = lags
                    .iter()
                    .map(|&s| {
                        Complex64::from_polar((-gamma * s).exp() * amplitude, -delta * s)
                    })
                    .collect();
                Ok(CorrelationFn {
                    lags: lags.to_vec(),
                    values,
                    closed_form: Some(LorentzianClosedForm {
                        gamma: *gamma,
                        delta,
                        amplitude,
                    }),
                })
            }
            SpectrumSpec::Tabulated { .. } => {
                let (lo, hi) = self.support().expect("tabulated spectra have support");
                let mut n: usize = 1024;
                let mut prev = self.fourier_on_grid(omega21, lags, lo, hi, n);
                for _ in 0..QUAD_MAX_DOUBLINGS {
                    n *= 2;
                    let next = self.fourier_on_grid(omega21, lags, lo, hi, n);
                    let scale = next[0].norm().max(f64::MIN_POSITIVE);
                    let worst = prev
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0f64, f64::max);
                    if worst <= QUAD_REL_TOL * scale {
                        return Ok(CorrelationFn {
                            lags: lags.to_vec(),
                            values: next,
                            closed_form: None,
                        });
                    }
                    prev = next;
                }
                Err(SpectrumError::QuadratureNonConvergence {
                    tol: QUAD_REL_TOL,
                    doublings: QUAD_MAX_DOUBLINGS,
                })
            }
        }
    }

    fn fourier_on_grid(
        &self,
        omega21: f64,
        lags: &[f64],
        lo: f64,
        hi: f64,
        n: usize,
    ) -> Vec<Complex64> {
        let h = (hi - lo) / n as f64;
        let mut values = vec![Complex64::default(); lags.len()];
        for (k, v) in values.iter_mut().enumerate() {
            let s = lags[k];
            let mut acc = Complex64::default();
            for i in 0..=n {
                let omega = lo + h * i as f64;
                let beta = omega - omega21;
                let weight = if i == 0 || i == n { 0.5 } else { 1.0 };
                let (sin, cos) = (beta * s).sin_cos();
                acc += weight * self.eval_w(omega) * Complex64::new(cos, sin);
            }
            *v = acc * h / (4.0 * PI);
        }
        values
    }

    /// Discretize the spectrum into `n_modes` uniform cells over
    /// `beta_span` (detunings relative to `omega21`). Cell `j` carries
    /// weight `W(omega21 + beta_j) * dbeta / 4pi`, i.e. the squared mode
    /// amplitude that reproduces the correlation integral as a Riemann sum.
    pub fn mode_amplitudes(
        &self,
        omega21: f64,
        n_modes: usize,
        beta_span: (f64, f64),
    ) -> Result<ModeWeights, SpectrumError> {
        if n_modes == 0 {
            return Err(SpectrumError::NoModes);
        }
        let (lo, hi) = beta_span;
        if !(hi > lo) {
            return Err(SpectrumError::EmptySpan(lo, hi));
        }
        let dbeta = (hi - lo) / n_modes as f64;
        let mut betas = Vec::with_capacity(n_modes);
        let mut weights = Vec::with_capacity(n_modes);
        for j in 0..n_modes {
            let beta = lo + (j as f64 + 0.5) * dbeta;
            betas.push(beta);
            weights.push(self.eval_w(omega21 + beta) * dbeta / (4.0 * PI));
        }
        let in_span: f64 = weights.iter().sum::<f64>() * 4.0 * PI;
        let total = self.total_weight();
        let truncated_fraction = if total > 0.0 {
            (1.0 - in_span / total).max(0.0)
        } else {
            0.0
        };
        Ok(ModeWeights {
            betas,
            weights,
            dbeta,
            truncated_fraction,
        })
    }

    /// True when the mode span captured at least 99% of the spectral weight.
    pub fn span_is_adequate(weights: &ModeWeights) -> bool {
        weights.truncated_fraction <= 0.01
    }
}

/// Finite-time response kernel
/// `K(beta) = Re[(1 - e^{-(A/2 - i beta) t}) / (A/2 - i beta)]`.
///
/// For `A t >> 1` this tends to the Lorentzian `(A/2) / ((A/2)^2 + beta^2)`
/// of width `A`; its integral over all detunings is `pi`.
pub fn kernel_k(beta: f64, a: f64, t: f64) -> f64 {
    debug_assert!(a > 0.0, "kernel_k needs a positive decay rate");
    debug_assert!(t >= 0.0, "kernel_k needs a nonnegative time");
    let z = Complex64::new(a / 2.0, -beta);
    (((-z * t).exp() - 1.0) / -z).re
}

/// Squared mode amplitudes on a uniform detuning grid.
#[derive(Debug, Clone)]
pub struct ModeWeights {
    /// Cell-center detunings relative to the transition frequency.
    pub betas: Vec<f64>,
    /// Squared amplitudes `W(omega21 + beta_j) * dbeta / 4pi`.
    pub weights: Vec<f64>,
    /// Cell width.
    pub dbeta: f64,
    /// Spectral weight outside the span, as a fraction of the total.
    pub truncated_fraction: f64,
}

impl ModeWeights {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Closed-form tag for Lorentzian correlations:
/// `C(s) = amplitude * e^{-i delta s} e^{-gamma s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianClosedForm {
    pub gamma: f64,
    pub delta: f64,
    pub amplitude: f64,
}

/// Sampled drive correlation function on a grid of nonnegative lags.
#[derive(Debug, Clone)]
pub struct CorrelationFn {
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
    pub closed_form: Option<LorentzianClosedForm>,
}

impl CorrelationFn {
    /// `C(0)`, the mean squared drive amplitude.
    pub fn at_zero(&self) -> Option<Complex64> {
        self.lags
            .iter()
            .position(|&s| s == 0.0)
            .map(|i| self.values[i])
    }
}

/// Spectral energy density carried by one parallel-polarization intensity
/// sample: `W(omega) = volume_factor * omega^2 * |E_par(omega)|^2`.
pub fn parallel_intensity_to_density(omega: f64, e_par_sq: f64, volume_factor: f64) -> f64 {
    volume_factor * omega * omega * e_par_sq
}

/// Energy per unit volume from sampled parallel-polarization mode
/// intensities: `eta = Int W(omega) d omega` with
/// `W(omega) = volume_factor * omega^2 * |E_par(omega)|^2`, integrated by the
/// trapezoidal rule over the (sorted) sample frequencies.
pub fn energy_density(modes: &[(f64, f64)], volume_factor: f64) -> f64 {
    if modes.len() < 2 {
        return 0.0;
    }
    let mut sorted: Vec<&(f64, f64)> = modes.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let w = |m: &(f64, f64)| volume_factor * m.0 * m.0 * m.1;
    sorted
        .windows(2)
        .map(|pair| 0.5 * (w(pair[0]) + w(pair[1])) * (pair[1].0 - pair[0].0))
        .sum()
}
