//! Offset Gaussian cooling beam and the semiclassical photon-scattering model.
//!
//! The beam propagates along +x and is displaced from the trap centre along y,
//! so absorption kicks point along +x and the scattering rate depends on the
//! ion's y position (intensity) and x velocity (Doppler shift).

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::constants::{C_LIGHT, CA_COOLING_LINEWIDTH, CA_COOLING_WAVELENGTH, HBAR};
use crate::trap::IonSpecies;
use crate::{Error, Result};

/// Instantaneous point in the radial phase space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    /// s
    pub t: f64,
    /// m
    pub x: f64,
    /// m
    pub y: f64,
    /// m/s
    pub vx: f64,
    /// m/s
    pub vy: f64,
}

impl PhaseState {
    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// Cooling beam parameters. `detuning` is positive below resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserConfig {
    /// m
    pub wavelength: f64,
    /// W
    pub power: f64,
    /// 1/e² intensity radius, m
    pub waist: f64,
    /// Beam centre displacement along y, m
    pub offset: f64,
    /// rad/s, positive = red detuned
    pub detuning: f64,
    /// Transition linewidth Γ, rad/s
    pub linewidth: f64,
    /// Resonant scattering cross-section σ₀, m²
    pub cross_section: f64,
}

impl LaserConfig {
    /// Beam on the 397 nm Ca⁺ cooling transition with Γ = 2π × 21.6 MHz and
    /// σ₀ = λ²/(2π).
    pub fn calcium_397(power: f64, waist: f64, offset: f64, detuning: f64) -> Self {
        LaserConfig {
            wavelength: CA_COOLING_WAVELENGTH,
            power,
            waist,
            offset,
            detuning,
            linewidth: CA_COOLING_LINEWIDTH,
            cross_section: default_cross_section(CA_COOLING_WAVELENGTH),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("laser.wavelength", self.wavelength),
            ("laser.power", self.power),
            ("laser.waist", self.waist),
            ("laser.linewidth", self.linewidth),
            ("laser.cross_section", self.cross_section),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        if !self.offset.is_finite() || !self.detuning.is_finite() {
            return Err(Error::invalid("laser.offset/detuning", "must be finite"));
        }
        Ok(())
    }

    /// Wavenumber k = 2π/λ.
    #[inline]
    pub fn wavenumber(&self) -> f64 {
        std::f64::consts::TAU / self.wavelength
    }

    /// Optical angular frequency ω_L = 2πc/λ.
    #[inline]
    pub fn optical_frequency(&self) -> f64 {
        std::f64::consts::TAU * C_LIGHT / self.wavelength
    }

    #[inline]
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (std::f64::consts::PI * self.waist * self.waist)
    }
}

/// σ₀ = λ²/(2π), appropriate for driving both σ± components with linear
/// polarisation.
pub fn default_cross_section(wavelength: f64) -> f64 {
    wavelength * wavelength / std::f64::consts::TAU
}

/// I(y) = 2P₀/(πw₀²) · exp(−2(y − y₀)²/w₀²)
pub fn intensity_at(y: f64, laser: &LaserConfig) -> f64 {
    let d = y - laser.offset;
    laser.peak_intensity() * (-2.0 * d * d / (laser.waist * laser.waist)).exp()
}

/// Gradient parameter Y₀ of the linearised profile I(y) ≈ I(0)(1 + y/Y₀),
/// i.e. I/(dI/dy) at the trap centre. For a Gaussian this is w₀²/(4y₀); the
/// sign follows the offset.
pub fn gradient_parameter(laser: &LaserConfig) -> Result<f64> {
    if laser.offset == 0.0 {
        return Err(Error::ZeroGradient);
    }
    Ok(laser.waist * laser.waist / (4.0 * laser.offset))
}

/// Precomputed constants of the saturated, Doppler-shifted scattering rate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScatteringModel {
    peak_flux: f64,
    inv_waist_sq: f64,
    offset: f64,
    half_gamma_sq: f64,
    half_gamma: f64,
    detuning: f64,
    k: f64,
}

impl ScatteringModel {
    pub(crate) fn new(laser: &LaserConfig) -> Self {
        // photon flux per unit intensity times σ₀: I σ₀ / (ħ ω_L)
        let peak_flux = laser.peak_intensity() * laser.cross_section / (HBAR * laser.optical_frequency());
        ScatteringModel {
            peak_flux,
            inv_waist_sq: 1.0 / (laser.waist * laser.waist),
            offset: laser.offset,
            half_gamma_sq: 0.25 * laser.linewidth * laser.linewidth,
            half_gamma: 0.5 * laser.linewidth,
            detuning: laser.detuning,
            k: laser.wavenumber(),
        }
    }

    #[inline]
    pub(crate) fn rate(&self, y: f64, vx: f64) -> f64 {
        let d = y - self.offset;
        let flux = self.peak_flux * (-2.0 * d * d * self.inv_waist_sq).exp();
        let doppler = self.detuning + vx * self.k;
        flux * self.half_gamma_sq / (self.half_gamma_sq + flux * self.half_gamma + doppler * doppler)
    }
}

/// Photon scattering rate
/// γ = (Iσ₀/ħω_L) · (Γ/2)² / [(Γ/2)² + Iσ₀Γ/(2ħω_L) + (δ + k ẋ)²].
pub fn scattering_rate(state: &PhaseState, laser: &LaserConfig) -> f64 {
    ScatteringModel::new(laser).rate(state.y, state.vx)
}

/// Number of photons scattered in `dt` at the given mean rate (Poisson).
pub fn sample_photon_count<R: Rng + ?Sized>(rate: f64, dt: f64, rng: &mut R) -> u64 {
    let mean = rate * dt;
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

/// Uniform random direction on the unit sphere.
#[inline]
pub fn sample_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-300 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Velocity change from absorbing `n` photons from the beam and re-emitting
/// them in independent random directions. The axial component of the
/// emission recoil is dropped.
pub fn sample_recoil_kick<R: Rng + ?Sized>(n: u64, laser: &LaserConfig, ion: &IonSpecies, rng: &mut R) -> (f64, f64) {
    recoil_kick(n, HBAR * laser.wavenumber() / ion.mass, rng)
}

#[inline]
pub(crate) fn recoil_kick<R: Rng + ?Sized>(n: u64, recoil_velocity: f64, rng: &mut R) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let (mut ex, mut ey) = (0.0, 0.0);
    for _ in 0..n {
        let u = sample_unit_vector(rng);
        ex += u[0];
        ey += u[1];
    }
    (recoil_velocity * (n as f64 + ex), recoil_velocity * ey)
}
