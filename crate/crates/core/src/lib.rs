//! Stochastic simulator for ensembles of two-level atoms driven by
//! synthesized broadband incoherent light, with a rate-equation oracle.
//!
//! The crate integrates the semiclassical dynamics of many independent
//! atom-field realizations, estimates field correlation functions, and
//! quantifies where the averaged dynamics reduce to the Einstein rate
//! equations: the relaxation rate `A + 2BW(omega21)`, the weak-field limit,
//! and the spectral-density bound `2BW(omega21)/sqrt(gamma^2 + delta^2) << 1`
//! that controls the reduction's validity.
//!
//! Reduced units throughout the simulation core: the spontaneous rate sets
//! the time scale and spectral densities are stored as pump-rate densities,
//! so only the combinations `A`, `2BW`, `gamma`, `delta` ever enter. SI
//! quantities appear only in [`ere`]'s coefficient helpers.

pub mod bloch;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod ere;
pub mod field;
pub mod rng;
pub mod spectrum;
pub mod validity;

pub use bloch::{AtomState, AtomTrace, Form, IntegratorConfig, InitialConditions};
pub use ensemble::{
    Backend, CorrelationEstimate, DriveConfig, EnsembleConfig, EnsembleTrace, ResidualProfile,
};
pub use ere::{EreParams, SiConstants};
pub use field::{Geometry, ModeSumOptions, RabiProcess, SeedPath};
pub use spectrum::{CorrelationFn, SpectrumSpec};
pub use validity::{SweepSettings, ValidityConfig};
