//! Laser cooling of the radial motion of a single ion in a Penning trap.
//!
//! The crate is organised around the pieces of a cooling experiment:
//!
//! * [`trap`] – static trap parameters, mode frequencies and the classical /
//!   quantised amplitude relations.
//! * [`laser`] – the offset Gaussian cooling beam, the saturated
//!   Doppler-shifted scattering rate and photon-recoil sampling.
//! * [`dynamics`] – stochastic integration of the radial equations of motion
//!   with an optional axialization drive, plus parameter sweeps.
//! * [`analytic`] – closed-form Doppler limits and coupling rates.
//! * [`spectroscopy`] – sideband couplings, thermal Rabi dynamics, spectrum
//!   synthesis and thermometry fits.
//! * [`sbc`] – rate-equation model of multi-order sideband-cooling sequences.
//!
//! All quantities are SI. Angular frequencies (rad/s) are used internally;
//! helpers that take or return ordinary frequencies say so in their name
//! (`*_hz`).

pub mod analytic;
pub mod constants;
pub mod dynamics;
mod error;
pub mod fit;
pub mod laser;
pub mod rk8;
pub mod rng;
pub mod sbc;
pub mod spectroscopy;
pub mod trap;

pub use error::{Error, Result};
pub use laser::{LaserConfig, PhaseState};
pub use spectroscopy::{Mode, ThermalState};
pub use trap::{IonSpecies, ModeAmplitudes, ModeFrequencies, PhononNumbers, TrapConfig};

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz_to_angular(nu: f64) -> f64 {
    std::f64::consts::TAU * nu
}

/// Converts an angular frequency in rad/s to an ordinary frequency in Hz.
#[inline]
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / std::f64::consts::TAU
}
