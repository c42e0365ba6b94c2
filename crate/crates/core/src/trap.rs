//! Ideal Penning trap: parameters, eigenfrequencies and the relations between
//! classical mode amplitudes, energies and phonon numbers.

use serde::{Deserialize, Serialize};

use crate::constants::{AMU, CA40_ATOMIC_MASS_U, E_CHARGE, HBAR, M_ELECTRON};
use crate::laser::PhaseState;
use crate::{Error, Result};

/// Mass and charge of the trapped ion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSpecies {
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    pub label: String,
}

impl IonSpecies {
    pub fn new(label: impl Into<String>, mass: f64, charge: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid("ion.mass", "must be positive"));
        }
        if charge == 0.0 || !charge.is_finite() {
            return Err(Error::invalid("ion.charge", "must be non-zero"));
        }
        Ok(IonSpecies {
            mass,
            charge,
            label: label.into(),
        })
    }

    /// Singly charged ⁴⁰Ca⁺.
    pub fn calcium40() -> Self {
        IonSpecies {
            mass: CA40_ATOMIC_MASS_U * AMU - M_ELECTRON,
            charge: E_CHARGE,
            label: "40Ca+".to_string(),
        }
    }

    /// Charge-to-mass ratio q/M.
    #[inline]
    pub fn q_over_m(&self) -> f64 {
        self.charge / self.mass
    }
}

impl Default for IonSpecies {
    fn default() -> Self {
        Self::calcium40()
    }
}

/// Static trap configuration.
///
/// `d0` sets the quadrupole scale of the electrostatic potential
/// `V0 (2z² − x² − y²) / D0²`; `r0` is the effective radius of the segmented
/// ring electrode that carries the axialization drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Magnetic field, T.
    pub magnetic_field: f64,
    /// Trap voltage, V.
    pub trap_voltage: f64,
    /// Trap dimension D0, m.
    pub trap_dimension: f64,
    /// Ring electrode radius R0, m.
    pub ring_radius: f64,
    pub ion: IonSpecies,
}

impl TrapConfig {
    pub fn new(
        magnetic_field: f64,
        trap_voltage: f64,
        trap_dimension: f64,
        ring_radius: f64,
        ion: IonSpecies,
    ) -> Result<Self> {
        let trap = TrapConfig {
            magnetic_field,
            trap_voltage,
            trap_dimension,
            ring_radius,
            ion,
        };
        trap.validate()?;
        Ok(trap)
    }

    /// Builds a trap that reproduces the given true-cyclotron and axial
    /// frequencies (in Hz) for `ion`, solving for B and V0 at fixed geometry.
    pub fn from_frequencies_hz(
        nu_c: f64,
        nu_z: f64,
        trap_dimension: f64,
        ring_radius: f64,
        ion: IonSpecies,
    ) -> Result<Self> {
        let omega_c = crate::hz_to_angular(nu_c);
        let omega_z = crate::hz_to_angular(nu_z);
        let b = omega_c / ion.q_over_m();
        let v0 = omega_z * omega_z * trap_dimension * trap_dimension / (4.0 * ion.q_over_m());
        Self::new(b, v0, trap_dimension, ring_radius, ion)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.magnetic_field > 0.0) {
            return Err(Error::invalid("trap.magnetic_field", "must be positive"));
        }
        if !(self.trap_dimension > 0.0) {
            return Err(Error::invalid("trap.trap_dimension", "must be positive"));
        }
        if !(self.ring_radius > 0.0) {
            return Err(Error::invalid("trap.ring_radius", "must be positive"));
        }
        if self.trap_voltage * self.ion.charge < 0.0 {
            return Err(Error::invalid(
                "trap.trap_voltage",
                "sign must match the ion charge for axial confinement",
            ));
        }
        // Stability is checked on the frequencies so the boundary case
        // 2ω_z² = ω_c² is not rejected by rounding in V0.
        self.frequencies().map(|_| ())
    }

    /// Largest stable trap voltage q D0² B² / (8M).
    pub fn stability_voltage_limit(&self) -> f64 {
        self.ion.q_over_m() * self.trap_dimension.powi(2) * self.magnetic_field.powi(2) / 8.0
    }

    pub fn frequencies(&self) -> Result<ModeFrequencies> {
        compute_frequencies(self)
    }
}

/// The five characteristic angular frequencies of the trap, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeFrequencies {
    pub omega_z: f64,
    pub omega_c: f64,
    pub omega_1: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
}

impl ModeFrequencies {
    /// Derives the radial frequencies from ω_c and ω_z.
    pub fn from_cyclotron_axial(omega_c: f64, omega_z: f64) -> Result<Self> {
        let wc2 = omega_c * omega_c;
        let two_wz2 = 2.0 * omega_z * omega_z;
        let disc = wc2 - two_wz2;
        // Allow a few ulps of rounding at the stability boundary.
        if disc < -1e-12 * wc2 {
            return Err(Error::StabilityViolation { two_wz2, wc2 });
        }
        // Rounding in ω_c² − 2ω_z² leaves a residue of order ulp(ω_c²) at the
        // boundary; treat that as exactly degenerate.
        let disc = if disc.abs() <= 1e-14 * wc2 { 0.0 } else { disc };
        let omega_1 = disc.max(0.0).sqrt() / 2.0;
        let omega_plus = omega_c / 2.0 + omega_1;
        // ω₋ = ω_z²/(2ω₊) avoids the cancellation in ω_c/2 − ω₁ for weak
        // axial confinement.
        let omega_minus = if omega_plus > 0.0 {
            omega_z * omega_z / (2.0 * omega_plus)
        } else {
            0.0
        };
        Ok(ModeFrequencies {
            omega_z,
            omega_c,
            omega_1,
            omega_plus,
            omega_minus,
        })
    }

    pub fn from_cyclotron_axial_hz(nu_c: f64, nu_z: f64) -> Result<Self> {
        Self::from_cyclotron_axial(crate::hz_to_angular(nu_c), crate::hz_to_angular(nu_z))
    }

    pub fn nu_plus_hz(&self) -> f64 {
        crate::angular_to_hz(self.omega_plus)
    }

    pub fn nu_minus_hz(&self) -> f64 {
        crate::angular_to_hz(self.omega_minus)
    }

    fn require_nondegenerate(&self) -> Result<()> {
        if self.omega_1 > 0.0 {
            Ok(())
        } else {
            Err(Error::DegenerateFrequencies)
        }
    }
}

/// Cycle-averaged squared radii of the two radial modes, m².
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeAmplitudes {
    pub r_plus_sq: f64,
    pub r_minus_sq: f64,
}

/// Mean occupation numbers of the two radial modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhononNumbers {
    pub n_plus: f64,
    pub n_minus: f64,
}

/// ω_z = √(4qV0/(MD0²)), ω_c = qB/M, ω_± = ω_c/2 ± ω_1.
pub fn compute_frequencies(trap: &TrapConfig) -> Result<ModeFrequencies> {
    let qm = trap.ion.q_over_m();
    let omega_c = qm * trap.magnetic_field;
    let omega_z = (4.0 * qm * trap.trap_voltage / trap.trap_dimension.powi(2)).sqrt();
    ModeFrequencies::from_cyclotron_axial(omega_c, omega_z)
}

pub fn stability_voltage_limit(trap: &TrapConfig) -> f64 {
    trap.stability_voltage_limit()
}

/// Cycle-averaged total energy of motion. The magnetron term enters with a
/// negative sign.
pub fn total_energy(
    r_z_sq: f64,
    r_plus_sq: f64,
    r_minus_sq: f64,
    freqs: &ModeFrequencies,
    ion: &IonSpecies,
) -> f64 {
    0.5 * ion.mass
        * (r_z_sq * freqs.omega_z.powi(2) + 2.0 * r_plus_sq * freqs.omega_plus * freqs.omega_1
            - 2.0 * r_minus_sq * freqs.omega_minus * freqs.omega_1)
}

/// Instantaneous radial kinetic plus electrostatic energy,
/// ½M(ẋ² + ẏ²) − ¼Mω_z²(x² + y²). Exactly conserved by the undriven motion.
pub fn radial_mechanical_energy(state: &PhaseState, freqs: &ModeFrequencies, ion: &IonSpecies) -> f64 {
    let kinetic = 0.5 * ion.mass * (state.vx * state.vx + state.vy * state.vy);
    let potential = -0.25 * ion.mass * freqs.omega_z.powi(2) * (state.x * state.x + state.y * state.y);
    kinetic + potential
}

/// Squared amplitudes of the cyclotron and magnetron circles that pass
/// through the given phase-space point.
pub fn cycle_averaged_amplitudes(state: &PhaseState, freqs: &ModeFrequencies) -> Result<ModeAmplitudes> {
    freqs.require_nondegenerate()?;
    Ok(amplitudes_unchecked(state.x, state.y, state.vx, state.vy, freqs))
}

#[inline]
pub(crate) fn amplitudes_unchecked(x: f64, y: f64, vx: f64, vy: f64, freqs: &ModeFrequencies) -> ModeAmplitudes {
    let norm = 1.0 / (4.0 * freqs.omega_1 * freqs.omega_1);
    let (wp, wm) = (freqs.omega_plus, freqs.omega_minus);
    let r_plus_sq = ((wm * x + vy).powi(2) + (wm * y - vx).powi(2)) * norm;
    let r_minus_sq = ((wp * x + vy).powi(2) + (wp * y - vx).powi(2)) * norm;
    ModeAmplitudes { r_plus_sq, r_minus_sq }
}

/// Phase-space point at time `t` of the free motion
/// x = r₋cos(ω₋t+φ₋) + r₊cos(ω₊t+φ₊), y = −r₋sin(ω₋t+φ₋) − r₊sin(ω₊t+φ₊).
pub fn free_motion_state(
    t: f64,
    r_plus: f64,
    phi_plus: f64,
    r_minus: f64,
    phi_minus: f64,
    freqs: &ModeFrequencies,
) -> PhaseState {
    let (wp, wm) = (freqs.omega_plus, freqs.omega_minus);
    let (sp, cp) = (wp * t + phi_plus).sin_cos();
    let (sm, cm) = (wm * t + phi_minus).sin_cos();
    PhaseState {
        t,
        x: r_minus * cm + r_plus * cp,
        y: -r_minus * sm - r_plus * sp,
        vx: -r_minus * wm * sm - r_plus * wp * sp,
        vy: -r_minus * wm * cm - r_plus * wp * cp,
    }
}

/// Radial ground-state length scale r₀ = √(ħ/(Mω₁)).
pub fn radial_length_scale(freqs: &ModeFrequencies, ion: &IonSpecies) -> f64 {
    (HBAR / (ion.mass * freqs.omega_1)).sqrt()
}

/// n̄ = ⟨r²⟩Mω₁/ħ. The zero-point energy is not subtracted, so this is the
/// convention used for simulation output.
pub fn phonons_from_amplitudes(amps: &ModeAmplitudes, freqs: &ModeFrequencies, ion: &IonSpecies) -> PhononNumbers {
    let scale = ion.mass * freqs.omega_1 / HBAR;
    PhononNumbers {
        n_plus: amps.r_plus_sq * scale,
        n_minus: amps.r_minus_sq * scale,
    }
}

/// r² = r₀²(n + ½). Includes the zero-point term, so
/// `phonons_from_amplitudes(amplitudes_from_phonons(n)) == n + ½`.
pub fn amplitudes_from_phonons(n: &PhononNumbers, freqs: &ModeFrequencies, ion: &IonSpecies) -> ModeAmplitudes {
    let r0_sq = HBAR / (ion.mass * freqs.omega_1);
    ModeAmplitudes {
        r_plus_sq: r0_sq * (n.n_plus + 0.5),
        r_minus_sq: r0_sq * (n.n_minus + 0.5),
    }
}
