//! Synthesis of per-atom realizations of the complex drive amplitude.
//!
//! Two interchangeable backends produce processes with the same two-time
//! correlation `C(s)`:
//!
//! * `ModeSum` — a random-phase sum over discretized spectral modes,
//!   `Omega(t) = sum_j a_j e^{i(phi_j - beta_j t)}`, evaluable at any time.
//!   The `e^{-i beta t}` rotation matches the plane-wave convention in which
//!   a mode above the transition frequency rotates the drive clockwise, so
//!   the ensemble correlation acquires the phase `-delta s`.
//! * `ColoredNoise` — a complex mean-reverting process advanced by its exact
//!   one-step law, available for Lorentzian spectra only.
//!
//! Construction is pure given a `SeedPath`; sampling a process twice with the
//! same seed path reproduces identical values.

use crate::rng::{self, domain};
use crate::spectrum::{SpectrumError, SpectrumSpec};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::f64::consts::TAU;
use thiserror::Error;

/// Side length (in inverse wavenumbers of the transition) of the box from
/// which explicit-3D atom positions are drawn. Large enough that per-mode
/// spatial phases wrap many times.
const POSITION_BOX: f64 = 1.0e4;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("colored-noise synthesis requires a Lorentzian spectrum")]
    NonLorentzian,
    #[error("colored-noise step {dt} exceeds 0.1/gamma = {limit}")]
    StepTooCoarse { dt: f64, limit: f64 },
    #[error("colored-noise sample at t={requested} before current time {current}")]
    OutOfOrderSample { requested: f64, current: f64 },
}

/// Addresses the random substream of one atom within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPath {
    pub run_seed: u64,
    pub atom: u64,
}

impl SeedPath {
    pub fn new(run_seed: u64, atom: u64) -> Self {
        Self { run_seed, atom }
    }
}

/// Mode geometry for the mode-sum backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Independent uniform phases per atom; directions integrated out.
    PhaseOnly,
    /// Shared isotropic mode directions, per-atom random positions, and the
    /// dipole projection factor `sin(theta)` per mode. Normalized by
    /// `sqrt(3/2)` so the direction average reproduces the same correlation.
    Explicit3D,
}

/// Amplitude statistics for the mode-sum backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeDist {
    /// Deterministic amplitudes: fixes C(s) exactly at finite mode count.
    Deterministic,
    /// Complex-Gaussian amplitudes (Rayleigh magnitudes) for robustness
    /// studies; same correlation in expectation.
    ComplexGaussian,
}

/// Tuning knobs for mode-sum synthesis.
#[derive(Debug, Clone, Copy)]
pub struct ModeSumOptions {
    /// Half-width of the detuning span in units of gamma (Lorentzian only;
    /// tabulated spectra always use their full support).
    pub span_gammas: f64,
    /// Jitter each mode uniformly within its grid cell to suppress the
    /// periodic recurrence of a uniform comb.
    pub jitter: bool,
    pub amplitude_dist: AmplitudeDist,
}

impl Default for ModeSumOptions {
    fn default() -> Self {
        Self {
            span_gammas: 40.0,
            jitter: true,
            amplitude_dist: AmplitudeDist::Deterministic,
        }
    }
}

#[derive(Debug, Clone)]
struct Mode {
    beta: f64,
    amp: f64,
    phase: f64,
}

/// A mode-sum drive realization.
#[derive(Debug, Clone)]
pub struct ModeSumProcess {
    modes: Vec<Mode>,
    /// Per-mode polar angles, kept when the geometry is explicit.
    thetas: Option<Vec<f64>>,
}

impl ModeSumProcess {
    /// `Omega(t) = sum_j a_j e^{i(phi_j - beta_j t)}`.
    pub fn value_at(&self, t: f64) -> Complex64 {
        let mut acc = Complex64::default();
        for m in &self.modes {
            let (sin, cos) = (m.phase - m.beta * t).sin_cos();
            acc += Complex64::new(m.amp * cos, m.amp * sin);
        }
        acc
    }

    /// Sum of squared amplitudes, i.e. the lag-zero correlation realized by
    /// this mode set.
    pub fn power(&self) -> f64 {
        self.modes.iter().map(|m| m.amp * m.amp).sum()
    }

    pub fn max_detuning(&self) -> f64 {
        self.modes.iter().map(|m| m.beta.abs()).fold(0.0, f64::max)
    }

    /// Hard bound on |Omega|: the amplitudes sum.
    pub fn amplitude_bound(&self) -> f64 {
        self.modes.iter().map(|m| m.amp).sum()
    }

    pub fn thetas(&self) -> Option<&[f64]> {
        self.thetas.as_deref()
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
}

/// A colored-noise drive realization (complex mean-reverting process).
#[derive(Debug, Clone)]
pub struct ColoredNoiseProcess {
    gamma: f64,
    delta: f64,
    variance: f64,
    max_dt: f64,
    state: Complex64,
    t: f64,
    rng: ChaCha12Rng,
    // one-step transfer cache for the common fixed-dt case
    cached_dt: f64,
    cached_decay: Complex64,
    cached_innov: f64,
}

impl ColoredNoiseProcess {
    /// Exact advance to time `t >=` the current time, then return the state.
    /// Requests an ulp or two behind the current time (from accumulated step
    /// arithmetic) are treated as "now".
    pub fn advance_to(&mut self, t: f64) -> Result<Complex64, FieldError> {
        if t < self.t {
            if self.t - t <= 1e-9 * (1.0 + t.abs()) {
                return Ok(self.state);
            }
            return Err(FieldError::OutOfOrderSample {
                requested: t,
                current: self.t,
            });
        }
        let dt = t - self.t;
        if dt > 0.0 {
            if dt != self.cached_dt {
                self.cached_dt = dt;
                self.cached_decay = (Complex64::new(-self.gamma, self.delta) * dt).exp();
                self.cached_innov =
                    (self.variance * (1.0 - (-2.0 * self.gamma * dt).exp())).sqrt();
            }
            self.state = self.state * self.cached_decay
                + self.cached_innov * complex_standard_normal(&mut self.rng);
            self.t = t;
        }
        Ok(self.state)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn relaxation_rate(&self) -> f64 {
        self.gamma
    }

    pub fn rotation_rate(&self) -> f64 {
        self.delta
    }
}

/// unit-variance complex Gaussian: (g1 + i g2)/sqrt(2)
fn complex_standard_normal(rng: &mut ChaCha12Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) / 2.0f64.sqrt()
}

/// One atom's drive realization.
#[derive(Debug, Clone)]
pub enum RabiProcess {
    ModeSum(ModeSumProcess),
    ColoredNoise(ColoredNoiseProcess),
}

impl RabiProcess {
    /// A mode sum assembled from explicit `(beta, amplitude, phase)` triples.
    pub fn from_modes(modes: &[(f64, f64, f64)]) -> RabiProcess {
        RabiProcess::ModeSum(ModeSumProcess {
            modes: modes
                .iter()
                .map(|&(beta, amp, phase)| Mode { beta, amp, phase })
                .collect(),
            thetas: None,
        })
    }

    /// A constant (monochromatic resonant) drive.
    pub fn constant(value: Complex64) -> RabiProcess {
        RabiProcess::from_modes(&[(0.0, value.norm(), value.arg())])
    }

    /// The drive value at time `t`. Mode sums are evaluable at arbitrary
    /// times; colored noise requires nondecreasing times per realization.
    pub fn sample(&mut self, t: f64) -> Result<Complex64, FieldError> {
        match self {
            RabiProcess::ModeSum(p) => Ok(p.value_at(t)),
            RabiProcess::ColoredNoise(p) => p.advance_to(t),
        }
    }

    /// Drive values for the three Runge-Kutta stage times of a step
    /// `[t, t + dt]`. Colored noise is held piecewise-constant over the step.
    pub fn stage_values(
        &mut self,
        t: f64,
        dt: f64,
    ) -> Result<(Complex64, Complex64, Complex64), FieldError> {
        match self {
            RabiProcess::ModeSum(p) => Ok((
                p.value_at(t),
                p.value_at(t + 0.5 * dt),
                p.value_at(t + dt),
            )),
            RabiProcess::ColoredNoise(p) => {
                let v = p.advance_to(t)?;
                Ok((v, v, v))
            }
        }
    }

    /// Largest detuning present in the drive (0 for white rotation-free
    /// noise); used by the integrator step rule.
    pub fn max_detuning(&self) -> f64 {
        match self {
            RabiProcess::ModeSum(p) => p.max_detuning(),
            RabiProcess::ColoredNoise(p) => p.rotation_rate().abs(),
        }
    }

    /// Bound on |Omega| for the integrator step rule. Exact for mode sums;
    /// six standard deviations for the unbounded colored-noise process.
    pub fn amplitude_bound(&self) -> f64 {
        match self {
            RabiProcess::ModeSum(p) => p.amplitude_bound(),
            RabiProcess::ColoredNoise(p) => 6.0 * p.variance().sqrt(),
        }
    }

    /// Decorrelation rate of the drive, if it has one (colored noise only).
    pub fn correlation_rate(&self) -> Option<f64> {
        match self {
            RabiProcess::ModeSum(_) => None,
            RabiProcess::ColoredNoise(p) => Some(p.relaxation_rate()),
        }
    }
}

/// Detuning span used for mode synthesis: the full tabulated support, or
/// `+- span_gammas * gamma` around the line center.
fn synthesis_span(spec: &SpectrumSpec, omega21: f64, span_gammas: f64) -> (f64, f64) {
    match spec {
        SpectrumSpec::Lorentzian { omega0, gamma, .. } => {
            let center = omega0 - omega21;
            (center - span_gammas * gamma, center + span_gammas * gamma)
        }
        SpectrumSpec::Tabulated { .. } => {
            let (lo, hi) = spec.support().expect("tabulated support");
            (lo - omega21, hi - omega21)
        }
    }
}

/// Synthesize a random-phase mode-sum realization of the drive.
///
/// Mode weights follow the spectrum discretization; the total power is then
/// rescaled to the exact lag-zero correlation so that finite spans do not
/// bias the drive energy (the raw weight sum misses the spectral tails).
pub fn synth_mode_sum(
    spec: &SpectrumSpec,
    omega21: f64,
    n_modes: usize,
    seed_path: SeedPath,
    geometry: Geometry,
    opts: &ModeSumOptions,
) -> Result<RabiProcess, FieldError> {
    if n_modes == 0 {
        return Err(SpectrumError::NoModes.into());
    }
    let (lo, hi) = synthesis_span(spec, omega21, opts.span_gammas);
    if !(hi > lo) {
        return Err(SpectrumError::EmptySpan(lo, hi).into());
    }
    let c0 = spec
        .analytic_correlation(omega21, &[0.0])?
        .values[0]
        .re;
    let dbeta = (hi - lo) / n_modes as f64;

    // Mode grid and raw weights. With jitter each mode sits uniformly within
    // its cell, which makes the expected weighted sum equal the exact in-span
    // integral for every lag.
    let mut atom_rng = rng::substream(seed_path.run_seed, domain::ATOM_FIELD, seed_path.atom);
    let mut mode_rng = match geometry {
        Geometry::PhaseOnly => None,
        // shared mode set: drawn from a stream independent of the atom index
        Geometry::Explicit3D => Some(rng::substream(seed_path.run_seed, domain::SHARED_MODES, 0)),
    };
    let grid_rng: &mut ChaCha12Rng = mode_rng.as_mut().unwrap_or(&mut atom_rng);

    let mut betas = Vec::with_capacity(n_modes);
    let mut weights = Vec::with_capacity(n_modes);
    for j in 0..n_modes {
        let cell_lo = lo + j as f64 * dbeta;
        let u: f64 = if opts.jitter { grid_rng.random() } else { 0.5 };
        let beta = cell_lo + u * dbeta;
        betas.push(beta);
        weights.push(spec.eval_w(omega21 + beta) * dbeta / (4.0 * std::f64::consts::PI));
    }
    let raw_sum: f64 = weights.iter().sum();
    let renorm = if raw_sum > 0.0 { c0 / raw_sum } else { 0.0 };

    let mut phases = Vec::with_capacity(n_modes);
    let mut gauss = Vec::with_capacity(n_modes);
    let mut thetas: Option<Vec<f64>> = None;
    let mut directions: Option<Vec<[f64; 3]>> = None;
    match geometry {
        Geometry::PhaseOnly => {
            for _ in 0..n_modes {
                phases.push(atom_rng.random::<f64>() * TAU);
                gauss.push(match opts.amplitude_dist {
                    AmplitudeDist::Deterministic => Complex64::new(1.0, 0.0),
                    AmplitudeDist::ComplexGaussian => complex_standard_normal(&mut atom_rng),
                });
            }
        }
        Geometry::Explicit3D => {
            let shared = mode_rng.as_mut().expect("shared mode stream");
            let mut th = Vec::with_capacity(n_modes);
            let mut dirs = Vec::with_capacity(n_modes);
            for _ in 0..n_modes {
                phases.push(shared.random::<f64>() * TAU);
                gauss.push(match opts.amplitude_dist {
                    AmplitudeDist::Deterministic => Complex64::new(1.0, 0.0),
                    AmplitudeDist::ComplexGaussian => complex_standard_normal(shared),
                });
                // uniform direction on the sphere
                let z = 2.0 * shared.random::<f64>() - 1.0;
                let az = shared.random::<f64>() * TAU;
                let s = (1.0 - z * z).sqrt();
                dirs.push([s * az.cos(), s * az.sin(), z]);
                th.push(z.acos());
            }
            thetas = Some(th);
            directions = Some(dirs);
        }
    }

    // per-atom position phase for explicit geometry
    let position: Option<[f64; 3]> = match geometry {
        Geometry::PhaseOnly => None,
        Geometry::Explicit3D => {
            let mut pos_rng =
                rng::substream(seed_path.run_seed, domain::ATOM_POSITION, seed_path.atom);
            Some([
                pos_rng.random::<f64>() * POSITION_BOX,
                pos_rng.random::<f64>() * POSITION_BOX,
                pos_rng.random::<f64>() * POSITION_BOX,
            ])
        }
    };

    let mut modes = Vec::with_capacity(n_modes);
    for j in 0..n_modes {
        let base = (weights[j] * renorm).sqrt();
        let (geom_factor, spatial_phase) = match geometry {
            Geometry::PhaseOnly => (1.0, 0.0),
            Geometry::Explicit3D => {
                let theta = thetas.as_ref().expect("thetas")[j];
                let k = directions.as_ref().expect("directions")[j];
                let r = position.expect("position");
                (
                    (1.5f64).sqrt() * theta.sin(),
                    k[0] * r[0] + k[1] * r[1] + k[2] * r[2],
                )
            }
        };
        let g = gauss[j];
        modes.push(Mode {
            beta: betas[j],
            amp: base * geom_factor * g.norm(),
            phase: phases[j] + spatial_phase + g.arg(),
        });
    }

    Ok(RabiProcess::ModeSum(ModeSumProcess { modes, thetas }))
}

/// Synthesize a colored-noise realization with relaxation rate `gamma`,
/// rotation rate `-delta`, and stationary variance `C(0) = gamma R0 / 4`,
/// started in its stationary distribution. Lorentzian spectra only.
pub fn synth_colored_noise(
    spec: &SpectrumSpec,
    omega21: f64,
    seed_path: SeedPath,
    dt: f64,
) -> Result<RabiProcess, FieldError> {
    let (omega0, gamma, w_peak) = match *spec {
        SpectrumSpec::Lorentzian {
            omega0,
            gamma,
            w_peak,
        } => (omega0, gamma, w_peak),
        SpectrumSpec::Tabulated { .. } => return Err(FieldError::NonLorentzian),
    };
    let limit = 0.1 / gamma;
    if dt > limit {
        return Err(FieldError::StepTooCoarse { dt, limit });
    }
    let delta = omega21 - omega0;
    let variance = gamma * w_peak / 4.0;
    let mut rng = rng::substream(seed_path.run_seed, domain::ATOM_FIELD, seed_path.atom);
    let state = variance.sqrt() * complex_standard_normal(&mut rng);
    Ok(RabiProcess::ColoredNoise(ColoredNoiseProcess {
        gamma,
        delta,
        variance,
        max_dt: dt,
        state,
        t: 0.0,
        rng,
        cached_dt: f64::NAN,
        cached_decay: Complex64::default(),
        cached_innov: 0.0,
    }))
}

impl ColoredNoiseProcess {
    pub fn max_step(&self) -> f64 {
        self.max_dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SpectrumSpec;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn lorentzian(gamma: f64, delta: f64, r0: f64) -> SpectrumSpec {
        // transition at omega21 = 0, center at -delta
        SpectrumSpec::lorentzian(-delta, gamma, r0).unwrap()
    }

    fn mean_correlation(
        spec: &SpectrumSpec,
        n_atoms: u64,
        lags: &[f64],
        t_ref: f64,
        colored: bool,
        seed: u64,
    ) -> (Vec<Complex64>, Vec<f64>) {
        let opts = ModeSumOptions {
            span_gammas: 200.0,
            ..ModeSumOptions::default()
        };
        let mut sums = vec![Complex64::default(); lags.len()];
        let mut sq = vec![0.0f64; lags.len()];
        for atom in 0..n_atoms {
            let path = SeedPath::new(seed, atom);
            let mut proc = if colored {
                synth_colored_noise(spec, 0.0, path, 0.01).unwrap()
            } else {
                synth_mode_sum(spec, 0.0, 512, path, Geometry::PhaseOnly, &opts).unwrap()
            };
            // colored noise needs nondecreasing times: sample tau ascending
            let mut taus: Vec<(usize, f64)> =
                lags.iter().enumerate().map(|(i, &s)| (i, t_ref - s)).collect();
            taus.sort_by(|a, b| a.1.total_cmp(&b.1));
            let mut vals = vec![Complex64::default(); lags.len()];
            for &(i, tau) in &taus {
                vals[i] = proc.sample(tau).unwrap();
            }
            let at_ref = proc.sample(t_ref).unwrap();
            for (i, v) in vals.iter().enumerate() {
                let prod = at_ref.conj() * v;
                sums[i] += prod;
                sq[i] += prod.norm_sqr();
            }
        }
        let n = n_atoms as f64;
        let means: Vec<Complex64> = sums.iter().map(|&s| s / n).collect();
        let stderr: Vec<f64> = means
            .iter()
            .zip(&sq)
            .map(|(m, &sq)| ((sq / n - m.norm_sqr()).max(0.0) / n).sqrt())
            .collect();
        (means, stderr)
    }

    #[test]
    fn single_mode_is_a_rotating_phasor() {
        let p = ModeSumProcess {
            modes: vec![Mode {
                beta: 2.0,
                amp: 0.7,
                phase: 0.3,
            }],
            thetas: None,
        };
        let t = 1.7;
        let expect = Complex64::from_polar(0.7, 0.3 - 2.0 * t);
        assert!((p.value_at(t) - expect).norm() < 1e-15);

        // resonant mode with zero phase: constant and real
        let p = ModeSumProcess {
            modes: vec![Mode {
                beta: 0.0,
                amp: 0.5,
                phase: 0.0,
            }],
            thetas: None,
        };
        for k in 0..10 {
            let v = p.value_at(k as f64);
            assert_abs_diff_eq!(v.re, 0.5);
            assert_abs_diff_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn zero_amplitude_field_is_dark() {
        let spec = lorentzian(1.0, 0.0, 0.0);
        let mut p = synth_mode_sum(
            &spec,
            0.0,
            64,
            SeedPath::new(1, 0),
            Geometry::PhaseOnly,
            &ModeSumOptions::default(),
        )
        .unwrap();
        for k in 0..5 {
            assert_eq!(p.sample(k as f64 * 1.3).unwrap(), Complex64::default());
        }
    }

    #[test]
    fn mode_sum_power_is_renormalized_to_c0() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        for &(n_modes, span) in &[(512usize, 20.0), (2048usize, 200.0)] {
            let opts = ModeSumOptions {
                span_gammas: span,
                ..ModeSumOptions::default()
            };
            let p = synth_mode_sum(&spec, 0.0, n_modes, SeedPath::new(3, 5), Geometry::PhaseOnly, &opts)
                .unwrap();
            let power = match &p {
                RabiProcess::ModeSum(m) => m.power(),
                _ => unreachable!(),
            };
            assert_relative_eq!(power, 0.05, max_relative = 1e-12);
        }
    }

    #[test]
    fn determinism_same_seed_path() {
        let spec = lorentzian(1.0, 2.0, 0.2);
        for colored in [false, true] {
            let make = || -> RabiProcess {
                if colored {
                    synth_colored_noise(&spec, 0.0, SeedPath::new(9, 4), 0.01).unwrap()
                } else {
                    synth_mode_sum(
                        &spec,
                        0.0,
                        128,
                        SeedPath::new(9, 4),
                        Geometry::PhaseOnly,
                        &ModeSumOptions::default(),
                    )
                    .unwrap()
                }
            };
            let mut a = make();
            let mut b = make();
            for k in 0..20 {
                let t = 0.05 * k as f64;
                assert_eq!(a.sample(t).unwrap(), b.sample(t).unwrap());
            }
        }
    }

    #[test]
    fn colored_noise_rejects_non_lorentzian_and_coarse_steps() {
        let tab = SpectrumSpec::tabulated(vec![(-1.0, 0.1), (1.0, 0.1)]).unwrap();
        assert!(matches!(
            synth_colored_noise(&tab, 0.0, SeedPath::new(0, 0), 0.01),
            Err(FieldError::NonLorentzian)
        ));
        let spec = lorentzian(2.0, 0.0, 0.2);
        assert!(matches!(
            synth_colored_noise(&spec, 0.0, SeedPath::new(0, 0), 0.2),
            Err(FieldError::StepTooCoarse { .. })
        ));
    }

    #[test]
    fn colored_noise_rejects_out_of_order_times() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        let mut p = synth_colored_noise(&spec, 0.0, SeedPath::new(1, 1), 0.01).unwrap();
        p.sample(1.0).unwrap();
        assert!(matches!(
            p.sample(0.5),
            Err(FieldError::OutOfOrderSample { .. })
        ));
    }

    /// Empirical lag-0 variance of the synthesized field against
    /// C(0) = gamma R0 / 4 (Monte Carlo over 2e4 realizations of a
    /// 1024-mode comb, 3-sigma gate).
    #[test]
    fn mode_sum_lag_zero_variance() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        let n_atoms = 20_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for atom in 0..n_atoms {
            let mut p = synth_mode_sum(
                &spec,
                0.0,
                1024,
                SeedPath::new(11, atom),
                Geometry::PhaseOnly,
                &ModeSumOptions::default(),
            )
            .unwrap();
            let v = p.sample(0.0).unwrap().norm_sqr();
            sum += v;
            sumsq += v * v;
        }
        let n = n_atoms as f64;
        let mean = sum / n;
        let se = ((sumsq / n - mean * mean) / n).sqrt();
        assert!(
            (mean - 0.05).abs() <= 3.0 * se,
            "lag-0 variance {mean} vs 0.05 (se {se})"
        );
    }

    /// Both backends reproduce the closed-form correlation (magnitude and
    /// phase) within 3 standard errors at lags up to 3/gamma, and therefore
    /// agree with each other.
    #[test]
    fn backend_equivalence_on_correlation() {
        let gamma = 1.0;
        let delta = 2.0;
        let r0 = 0.2;
        let spec = lorentzian(gamma, delta, r0);
        let lags: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
        let closed = spec.analytic_correlation(0.0, &lags).unwrap();
        for colored in [false, true] {
            let (means, stderr) = mean_correlation(&spec, 4000, &lags, 8.0, colored, 21);
            for i in 0..lags.len() {
                let dev = (means[i] - closed.values[i]).norm();
                assert!(
                    dev <= 3.0 * stderr[i].max(1e-6),
                    "backend colored={colored} lag {} dev {dev} > 3se {}",
                    lags[i],
                    stderr[i]
                );
            }
        }
    }

    /// Colored noise at lag 1/gamma: magnitude ratio e^{-1}, phase -delta/gamma.
    #[test]
    fn colored_noise_decay_and_phase() {
        let gamma = 2.0;
        let delta = 4.0; // delta = 2 gamma
        let spec = lorentzian(gamma, delta, 0.4);
        let lags = [0.0, 1.0 / gamma];
        let (means, stderr) = mean_correlation(&spec, 12_000, &lags, 6.0, true, 33);
        let ratio = means[1].norm() / means[0].norm();
        assert!(
            (ratio - (-1.0f64).exp()).abs() <= 3.0 * stderr[1] / means[0].norm(),
            "decay ratio {ratio}"
        );
        let phase = means[1].arg();
        assert!(
            (phase - (-2.0)).abs() <= 0.1,
            "phase at lag 1/gamma: {phase} (expected about -2)"
        );
    }

    /// gamma -> infinity at fixed pump rate: successive samples decorrelate.
    #[test]
    fn colored_noise_white_limit() {
        let gamma = 1.0e6;
        let spec = lorentzian(gamma, 0.0, 0.2);
        let mut acc = Complex64::default();
        let mut c0 = 0.0;
        let n_atoms = 4000;
        for atom in 0..n_atoms {
            let mut p =
                synth_colored_noise(&spec, 0.0, SeedPath::new(5, atom), 0.05 / gamma).unwrap();
            let a = p.sample(0.0).unwrap();
            let b = p.sample(1.0e-3).unwrap(); // 1000 correlation times later
            acc += a.conj() * b;
            c0 += a.norm_sqr();
        }
        let norm = (acc / n_atoms as f64).norm() / (c0 / n_atoms as f64);
        assert!(norm < 3.0 / (n_atoms as f64).sqrt() * 2.0, "residual correlation {norm}");
    }

    /// Monte Carlo average of sin^2(theta) over sampled directions is 2/3.
    #[test]
    fn explicit3d_isotropy_factor() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        let p = synth_mode_sum(
            &spec,
            0.0,
            20_000,
            SeedPath::new(17, 0),
            Geometry::Explicit3D,
            &ModeSumOptions::default(),
        )
        .unwrap();
        let thetas = match &p {
            RabiProcess::ModeSum(m) => m.thetas().unwrap().to_vec(),
            _ => unreachable!(),
        };
        let mean: f64 =
            thetas.iter().map(|t| t.sin().powi(2)).sum::<f64>() / thetas.len() as f64;
        // population sd of sin^2 theta is sqrt(4/45) ~ 0.298
        let se = 0.3 / (thetas.len() as f64).sqrt();
        assert!((mean - 2.0 / 3.0).abs() <= 4.0 * se, "mean sin^2 {mean}");
    }

    /// Forcing all polar angles to pi/2 and removing the sqrt(3/2) rescale
    /// reproduces the phase-only amplitudes exactly.
    #[test]
    fn explicit3d_degenerate_geometry_matches_phase_only() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        let opts = ModeSumOptions {
            jitter: false,
            ..ModeSumOptions::default()
        };
        let phase_only = match synth_mode_sum(
            &spec, 0.0, 64, SeedPath::new(23, 2), Geometry::PhaseOnly, &opts,
        )
        .unwrap()
        {
            RabiProcess::ModeSum(m) => m,
            _ => unreachable!(),
        };
        let explicit = match synth_mode_sum(
            &spec, 0.0, 64, SeedPath::new(23, 2), Geometry::Explicit3D, &opts,
        )
        .unwrap()
        {
            RabiProcess::ModeSum(m) => m,
            _ => unreachable!(),
        };
        let degenerate: Vec<f64> = explicit
            .modes
            .iter()
            .zip(explicit.thetas().unwrap())
            .map(|(m, th)| m.amp / ((1.5f64).sqrt() * th.sin()))
            .collect();
        for (a, b) in phase_only.modes.iter().zip(&degenerate) {
            assert_relative_eq!(a.amp, *b, max_relative = 1e-12);
        }
    }

    /// Stationarity: empirical lag correlations estimated over two disjoint
    /// time windows agree within statistical error.
    #[test]
    fn stationarity_across_windows() {
        let spec = lorentzian(1.0, 0.0, 0.2);
        let lags = [0.5, 1.5];
        let (w1, se1) = mean_correlation(&spec, 3000, &lags, 4.0, true, 41);
        let (w2, se2) = mean_correlation(&spec, 3000, &lags, 9.0, true, 42);
        for i in 0..lags.len() {
            let dev = (w1[i] - w2[i]).norm();
            let se = (se1[i].powi(2) + se2[i].powi(2)).sqrt();
            assert!(dev <= 3.5 * se, "window disagreement {dev} vs se {se}");
        }
    }
}
