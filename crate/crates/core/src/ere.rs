//! Rate-equation reference dynamics and SI-facing coefficient arithmetic.
//!
//! The reduced-units rate equation for the ensemble inversion is
//! `dn/dt = -a (n + 1) - R n` with pump rate `R = 2 B W(omega21)`; its
//! closed-form solution and weak-field limit serve as oracles for the
//! stochastic simulation. SI quantities enter only through the coefficient
//! helpers at the bottom.

use thiserror::Error;

/// 1 debye in C m.
pub const DEBYE: f64 = 3.33564e-30;
/// CODATA reduced Planck constant, J s.
pub const HBAR: f64 = 1.054571817e-34;
/// CODATA vacuum permittivity, F/m.
pub const EPS0: f64 = 8.8541878128e-12;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum EreError {
    #[error("spontaneous rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("pump rate must be nonnegative, got {0}")]
    NegativePump(f64),
    #[error("initial inversion {0} outside [-1, 1]")]
    BadInitialInversion(f64),
    #[error("SI constant {name} must be positive, got {value}")]
    BadConstant { name: &'static str, value: f64 },
}

/// Parameters of the reduced rate equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EreParams {
    /// Spontaneous rate (sets the time unit).
    pub a: f64,
    /// Pump rate `2 B W(omega21)` in units of `a`.
    pub r: f64,
    /// Initial inversion.
    pub n0: f64,
}

impl EreParams {
    pub fn new(a: f64, r: f64, n0: f64) -> Result<Self, EreError> {
        if !(a > 0.0) {
            return Err(EreError::NonPositiveRate(a));
        }
        if !(r >= 0.0) {
            return Err(EreError::NegativePump(r));
        }
        if !(-1.0..=1.0).contains(&n0) {
            return Err(EreError::BadInitialInversion(n0));
        }
        Ok(Self { a, r, n0 })
    }

    /// Steady-state inversion `-a / (a + R)`.
    pub fn steady_state(&self) -> f64 {
        -self.a / (self.a + self.r)
    }

    /// Total relaxation rate `a + R`.
    pub fn relaxation_rate(&self) -> f64 {
        self.a + self.r
    }
}

/// Closed-form solution `n(t) = n_inf + (n0 - n_inf) e^{-(a+R) t}`.
pub fn solve_ere(params: &EreParams, t_grid: &[f64]) -> Vec<f64> {
    let n_inf = params.steady_state();
    let kappa = params.relaxation_rate();
    t_grid
        .iter()
        .map(|&t| n_inf + (params.n0 - n_inf) * (-kappa * t).exp())
        .collect()
}

/// Numerical fallback for time-dependent pump rates, using the same
/// fixed-step fourth-order scheme as the atom integrator.
pub fn solve_ere_numeric(
    a: f64,
    pump: impl Fn(f64) -> f64,
    n0: f64,
    t_grid: &[f64],
    dt: f64,
) -> Vec<f64> {
    let rhs = |t: f64, n: f64| -a * (n + 1.0) - pump(t) * n;
    let mut out = Vec::with_capacity(t_grid.len());
    let mut t = 0.0;
    let mut n = n0;
    for &target in t_grid {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for _ in 0..steps {
                let k1 = rhs(t, n);
                let k2 = rhs(t + 0.5 * h, n + 0.5 * h * k1);
                let k3 = rhs(t + 0.5 * h, n + 0.5 * h * k2);
                let k4 = rhs(t + h, n + h * k3);
                n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                t += h;
            }
            t = target;
        }
        out.push(n);
    }
    out
}

/// First-order response to a weak pump `R = eps * r1`:
/// `dn1/dt = -a (n1 + 1) + r1`, so `n1(t -> inf) = -1 + r1 / a` and the
/// physical inversion is `n ~ -1 + eps (n1 + 1)`.
pub fn solve_weak_field(a: f64, r1: f64, n1_0: f64, t_grid: &[f64]) -> Vec<f64> {
    let n_inf = -1.0 + r1 / a;
    t_grid
        .iter()
        .map(|&t| n_inf + (n1_0 - n_inf) * (-a * t).exp())
        .collect()
}

/// SI constants entering the stimulated-rate coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiConstants {
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

impl SiConstants {
    /// CODATA constants with the given dipole moment (in debye) and
    /// transition frequency.
    pub fn with_codata(mu_debye: f64, omega21: f64) -> Result<Self, EreError> {
        Self::new(mu_debye * DEBYE, HBAR, EPS0, C_LIGHT, omega21)
    }

    pub fn new(mu: f64, hbar: f64, eps0: f64, c: f64, omega21: f64) -> Result<Self, EreError> {
        for (name, value) in [
            ("mu", mu),
            ("hbar", hbar),
            ("eps0", eps0),
            ("c", c),
            ("omega21", omega21),
        ] {
            if !(value > 0.0) {
                return Err(EreError::BadConstant { name, value });
            }
        }
        Ok(Self {
            mu,
            hbar,
            eps0,
            c,
            omega21,
        })
    }
}

/// Stimulated-rate coefficient for isotropic broadband light,
/// `B = pi mu^2 / (3 hbar^2 eps0)`, in m^3 J^-1 s^-2 acting on a spectral
/// energy density per unit angular frequency.
pub fn b_coefficient(si: &SiConstants) -> f64 {
    std::f64::consts::PI * si.mu * si.mu / (3.0 * si.hbar * si.hbar * si.eps0)
}

/// Consistency report between a supplied spontaneous rate and the one
/// implied by `A = B hbar omega21^3 / (pi^2 c^3)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AbRatioReport {
    pub b: f64,
    pub a_implied: f64,
    pub a_input: f64,
    /// `|a_input - a_implied| / a_implied`; informational, not enforced.
    pub relative_deviation: f64,
}

pub fn ab_ratio_check(si: &SiConstants, a_input: f64) -> AbRatioReport {
    let b = b_coefficient(si);
    let a_implied =
        b * si.hbar * si.omega21.powi(3) / (std::f64::consts::PI.powi(2) * si.c.powi(3));
    AbRatioReport {
        b,
        a_implied,
        a_input,
        relative_deviation: (a_input - a_implied).abs() / a_implied,
    }
}
