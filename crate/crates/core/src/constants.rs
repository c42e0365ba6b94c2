//! Physical constants (CODATA 2018, exact where the SI fixes them).

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const E_CHARGE: f64 = 1.602_176_634e-19;
/// Unified atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Electron mass, kg.
pub const M_ELECTRON: f64 = 9.109_383_701_5e-31;
/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// Atomic mass of neutral ⁴⁰Ca in u.
pub const CA40_ATOMIC_MASS_U: f64 = 39.9626;

/// Wavelength of the S1/2–P1/2 cooling transition of Ca⁺, m.
pub const CA_COOLING_WAVELENGTH: f64 = 397e-9;
/// Natural linewidth of the 397 nm transition, rad/s (2π × 21.6 MHz).
pub const CA_COOLING_LINEWIDTH: f64 = std::f64::consts::TAU * 21.6e6;
/// Wavelength of the S1/2–D5/2 quadrupole transition used for sideband
/// spectroscopy, m.
pub const CA_PROBE_WAVELENGTH: f64 = 729e-9;
