//! Where the rate-equation reduction holds: the Lorentzian memory equation,
//! the derivative-series magnitudes, the spectral-density bound, and sweeps
//! that measure the ensemble's deviation from the rate-equation oracle.

use crate::bloch::{IntegratorConfig, InitialConditions};
use crate::ensemble::{self, DriveConfig, EnsembleConfig, EnsembleError};
use crate::ere::{solve_ere, EreParams};
use crate::rng;
use crate::spectrum::SpectrumSpec;
use num_complex::Complex64;
use thiserror::Error;

/// Flatness diagnostic threshold: larger values flag spectra whose slope at
/// the transition frequency is no longer negligible on the scale of the
/// natural linewidth.
const FLATNESS_FLAG: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ValidityError {
    #[error("spectral half-width must be positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("peak pump rate must be nonnegative, got {0}")]
    NegativePump(f64),
    #[error("series order must be at least 1")]
    BadOrder,
    #[error("history covers t <= {have}, requested rate at t={needed}")]
    InsufficientHistory { needed: f64, have: f64 },
}

/// One Lorentzian validity configuration in reduced units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidityConfig {
    /// Spectral half-width, units of the spontaneous rate.
    pub gamma: f64,
    /// Detuning of the transition from the line center.
    pub delta: f64,
    /// Peak pump rate `2 B W(omega0)`.
    pub r0: f64,
    /// Truncation order of the derivative series.
    pub p_max: usize,
}

impl ValidityConfig {
    pub fn new(gamma: f64, delta: f64, r0: f64, p_max: usize) -> Result<Self, ValidityError> {
        if !(gamma > 0.0) {
            return Err(ValidityError::NonPositiveWidth(gamma));
        }
        if !(r0 >= 0.0) {
            return Err(ValidityError::NegativePump(r0));
        }
        if p_max < 1 {
            return Err(ValidityError::BadOrder);
        }
        Ok(Self {
            gamma,
            delta,
            r0,
            p_max,
        })
    }

    /// Pump rate at the transition, `R = R0 gamma^2 / (gamma^2 + delta^2)`.
    pub fn pump_rate(&self) -> f64 {
        self.r0 * self.gamma * self.gamma / (self.gamma * self.gamma + self.delta * self.delta)
    }

    /// The Lorentzian spectrum for this configuration, with the transition
    /// at frequency zero.
    pub fn spectrum(&self) -> SpectrumSpec {
        SpectrumSpec::lorentzian(-self.delta, self.gamma, self.r0)
            .expect("validated parameters build a spectrum")
    }
}

/// Memory-equation right-hand side at time `t`:
/// `-a (n + 1) - gamma R0 Re Int_0^t n(tau) e^{-(a/2 + gamma + i delta)(t - tau)} d tau`,
/// with the integral over the trapezoidal history grid `n_history[i] = n(i dt)`.
pub fn memory_ode_rhs(
    n_history: &[f64],
    dt: f64,
    cfg: &ValidityConfig,
    a: f64,
    t: f64,
) -> Result<f64, ValidityError> {
    if n_history.is_empty() {
        return Err(ValidityError::InsufficientHistory {
            needed: t,
            have: f64::NEG_INFINITY,
        });
    }
    let have = (n_history.len() - 1) as f64 * dt;
    if (t - have).abs() > 1e-9 * (1.0 + t.abs()) {
        return Err(ValidityError::InsufficientHistory { needed: t, have });
    }
    let n_t = *n_history.last().expect("nonempty");
    if n_history.len() == 1 {
        return Ok(-a * (n_t + 1.0));
    }
    let lambda = Complex64::new(0.5 * a + cfg.gamma, cfg.delta);
    let mut integral = Complex64::default();
    for (i, &n_i) in n_history.iter().enumerate() {
        let tau = i as f64 * dt;
        let w = if i == 0 || i == n_history.len() - 1 {
            0.5
        } else {
            1.0
        };
        integral += w * n_i * (-lambda * (t - tau)).exp();
    }
    integral *= dt;
    Ok(-a * (n_t + 1.0) - cfg.gamma * cfg.r0 * integral.re)
}

/// Integrate the memory equation on `[0, t_end]`. The single-exponential
/// kernel lets the memory integral ride along as one extra complex state
/// variable (`dM/dt = n - lambda M`), so the step cost is constant.
pub fn integrate_memory_ode(
    cfg: &ValidityConfig,
    a: f64,
    n0: f64,
    t_grid: &[f64],
    dt: f64,
) -> Vec<f64> {
    let lambda = Complex64::new(0.5 * a + cfg.gamma, cfg.delta);
    let gain = cfg.gamma * cfg.r0;
    let rhs = |n: f64, m: Complex64| -> (f64, Complex64) {
        (-a * (n + 1.0) - gain * m.re, Complex64::new(n, 0.0) - lambda * m)
    };
    let mut out = Vec::with_capacity(t_grid.len());
    let mut t = 0.0;
    let mut n = n0;
    let mut m = Complex64::default();
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                let (kn1, km1) = rhs(n, m);
                let (kn2, km2) = rhs(n + 0.5 * h * kn1, m + 0.5 * h * km1);
                let (kn3, km3) = rhs(n + 0.5 * h * kn2, m + 0.5 * h * km2);
                let (kn4, km4) = rhs(n + h * kn3, m + h * km3);
                n += h / 6.0 * (kn1 + 2.0 * kn2 + 2.0 * kn3 + kn4);
                m += h / 6.0 * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
            }
            t = target;
        }
        out.push(n);
    }
    out
}

/// Order-of-magnitude of the derivative-series terms,
/// `O(S_p) = gamma [2a + 2 B W(omega21)]^p (gamma^2 + delta^2)^{-(p+1)/2}`
/// for `p = 0..=p_max`.
pub fn sp_magnitudes(cfg: &ValidityConfig, a: f64) -> Vec<f64> {
    let base = 2.0 * a + cfg.pump_rate();
    let scale = (cfg.gamma * cfg.gamma + cfg.delta * cfg.delta).sqrt();
    (0..=cfg.p_max)
        .map(|p| cfg.gamma * base.powi(p as i32) * scale.powi(-(p as i32 + 1)))
        .collect()
}

/// The applicability ratio `r = 2 B W(omega21) / sqrt(gamma^2 + delta^2)`.
/// The rate-equation reduction requires `r << 1` (with `a << gamma`).
pub fn bound_ratio(cfg: &ValidityConfig) -> f64 {
    cfg.pump_rate() / (cfg.gamma * cfg.gamma + cfg.delta * cfg.delta).sqrt()
}

/// Traffic-light rendering of the applicability ratio.
pub fn bound_flag(r: f64) -> &'static str {
    if r <= 0.1 {
        "green"
    } else if r <= 0.5 {
        "amber"
    } else {
        "red"
    }
}

/// Spectral flatness diagnostic `a |dW/dbeta|_{beta=0} / W(omega21)`;
/// for the Lorentzian this is `2 a |delta| / (gamma^2 + delta^2)`.
pub fn flatness_diagnostic(cfg: &ValidityConfig, a: f64) -> f64 {
    2.0 * a * cfg.delta.abs() / (cfg.gamma * cfg.gamma + cfg.delta * cfg.delta)
}

/// Partial sums of the derivative series applied to an exponential
/// trajectory with decay rate `kappa`:
/// `sum_{p<=P} Re[kappa^p / (gamma + i delta)^{p+1}]`.
/// They converge to the exact kernel gain `Re[1 / (gamma + i delta - kappa)]`
/// when `kappa < |gamma + i delta|` and diverge otherwise.
pub fn sp_partial_sums(cfg: &ValidityConfig, kappa: f64, p_max: usize) -> Vec<f64> {
    let lambda = Complex64::new(cfg.gamma, cfg.delta);
    let mut sums = Vec::with_capacity(p_max + 1);
    let mut acc = 0.0;
    let mut term = 1.0 / lambda;
    for _ in 0..=p_max {
        acc += term.re;
        sums.push(acc);
        term *= kappa / lambda;
    }
    sums
}

/// Exact gain of the memory kernel on an exponential trajectory with decay
/// rate `kappa`, in the broad-line limit where `a/2` is dropped.
pub fn resummed_kernel_gain(cfg: &ValidityConfig, kappa: f64) -> f64 {
    (1.0 / (Complex64::new(cfg.gamma - kappa, cfg.delta))).re
}

/// Ensemble settings shared by every point of a validity sweep.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub drive: DriveConfig,
    pub integrator: IntegratorConfig,
    pub init: InitialConditions,
    pub n_atoms: u64,
    pub t_end: f64,
    pub n_points: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            drive: DriveConfig::default(),
            integrator: IntegratorConfig::default(),
            init: InitialConditions::default(),
            n_atoms: 2000,
            t_end: 14.0,
            n_points: 121,
            seed: 1,
            workers: 0,
        }
    }
}

/// One row of the sweep output.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub gamma: f64,
    pub delta: f64,
    pub r0: f64,
    /// Applicability ratio at this point.
    pub r: f64,
    /// `max_t |n_bar(t) - n_ere(t)|` over the post-transient window
    /// `t >= 3/gamma`.
    pub eps_dev: f64,
    /// Mean ensemble standard error over the same window.
    pub stderr: f64,
    pub flatness: f64,
    pub flatness_flagged: bool,
    /// Per-point failure, if the ensemble aborted; the sweep continues.
    pub error: Option<String>,
}

/// Run the ensemble at every grid point and record its deviation from the
/// rate-equation oracle alongside the applicability diagnostics. Points run
/// sequentially (atoms are parallel within a point) with per-point derived
/// seeds, so results are deterministic in grid order.
pub fn sweep_validity(points: &[ValidityConfig], settings: &SweepSettings) -> Vec<SweepResult> {
    let a = settings.integrator.a;
    points
        .iter()
        .enumerate()
        .map(|(idx, cfg)| {
            let r = bound_ratio(cfg);
            let flatness = flatness_diagnostic(cfg, a);
            let mut row = SweepResult {
                gamma: cfg.gamma,
                delta: cfg.delta,
                r0: cfg.r0,
                r,
                eps_dev: f64::NAN,
                stderr: f64::NAN,
                flatness,
                flatness_flagged: flatness > FLATNESS_FLAG,
                error: None,
            };
            match sweep_point(cfg, settings, idx as u64) {
                Ok((eps, se)) => {
                    row.eps_dev = eps;
                    row.stderr = se;
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

fn sweep_point(
    cfg: &ValidityConfig,
    settings: &SweepSettings,
    idx: u64,
) -> Result<(f64, f64), EnsembleError> {
    let grid: Vec<f64> = (0..=settings.n_points)
        .map(|i| settings.t_end * i as f64 / settings.n_points as f64)
        .collect();
    let ens = EnsembleConfig {
        spec: cfg.spectrum(),
        omega21: 0.0,
        drive: settings.drive.clone(),
        integrator: settings.integrator,
        init: settings.init,
        n_atoms: settings.n_atoms,
        seed: rng::derive_master(settings.seed, idx),
        workers: settings.workers,
    };
    let trace = ensemble::run_ensemble(&ens, &grid)?;
    let params = EreParams {
        a: settings.integrator.a,
        r: cfg.pump_rate(),
        n0: settings.init.n0,
    };
    let oracle = solve_ere(&params, &grid);
    let window_start = 3.0 / cfg.gamma;
    let mut eps = 0.0f64;
    let mut se_acc = 0.0;
    let mut se_count = 0u32;
    for (i, &t) in grid.iter().enumerate() {
        if t < window_start {
            continue;
        }
        eps = eps.max((trace.n_bar[i] - oracle[i]).abs());
        se_acc += trace.stderr[i];
        se_count += 1;
    }
    Ok((eps, se_acc / se_count.max(1) as f64))
}
