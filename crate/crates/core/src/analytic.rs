//! Closed-form Doppler limits, the simultaneous-cooling window and the
//! axialization coupling rate.

use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B};
use crate::laser::{gradient_parameter, LaserConfig};
use crate::trap::{IonSpecies, ModeFrequencies};
use crate::{Error, Result};

/// Inputs to the Doppler-limit formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerLimitInputs {
    /// Gradient parameter Y₀, m.
    pub gradient: f64,
    /// Detuning δ, rad/s, positive below resonance.
    pub detuning: f64,
    /// Γ, rad/s.
    pub linewidth: f64,
    /// k, 1/m.
    pub wavenumber: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    /// Multiplies both limits. 1.0 by default; 1.3 approximates the extra
    /// heating from an axial cooling beam of equal scattering rate.
    pub correction: f64,
}

impl DopplerLimitInputs {
    pub fn new(gradient: f64, detuning: f64, linewidth: f64, wavenumber: f64, omega_plus: f64, omega_minus: f64) -> Self {
        DopplerLimitInputs {
            gradient,
            detuning,
            linewidth,
            wavenumber,
            omega_plus,
            omega_minus,
            correction: 1.0,
        }
    }

    pub fn from_config(laser: &LaserConfig, freqs: &ModeFrequencies) -> Result<Self> {
        Ok(DopplerLimitInputs::new(
            gradient_parameter(laser)?,
            laser.detuning,
            laser.linewidth,
            laser.wavenumber(),
            freqs.omega_plus,
            freqs.omega_minus,
        ))
    }

    pub fn with_axial_beam_correction(mut self) -> Self {
        self.correction = 1.3;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("analytic.gradient", self.gradient),
            ("analytic.detuning", self.detuning),
            ("analytic.linewidth", self.linewidth),
            ("analytic.wavenumber", self.wavenumber),
            ("analytic.omega_plus", self.omega_plus),
            ("analytic.omega_minus", self.omega_minus),
            ("analytic.correction", self.correction),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be positive and finite"));
            }
        }
        Ok(())
    }

    /// (Γ/2)² + δ²
    fn a(&self) -> f64 {
        0.25 * self.linewidth * self.linewidth + self.detuning * self.detuning
    }
}

/// Result of a Doppler-limit evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CoolingLimit {
    Finite(f64),
    /// The mode is heated; no finite limit exists.
    Unstable,
}

impl CoolingLimit {
    pub fn value(self) -> Option<f64> {
        match self {
            CoolingLimit::Finite(v) => Some(v),
            CoolingLimit::Unstable => None,
        }
    }

    pub fn is_stable(self) -> bool {
        matches!(self, CoolingLimit::Finite(_))
    }
}

fn limit(numerator: f64, denominator: f64) -> CoolingLimit {
    if denominator > 0.0 {
        CoolingLimit::Finite(numerator / denominator)
    } else {
        CoolingLimit::Unstable
    }
}

/// n̄₊ = 5Y₀kA / (6[2δω₊Y₀k − A]),  A = (Γ/2)² + δ².
pub fn doppler_limit_cyclotron(p: &DopplerLimitInputs) -> Result<CoolingLimit> {
    p.validate()?;
    let yk = p.gradient * p.wavenumber;
    let a = p.a();
    Ok(limit(
        p.correction * 5.0 * yk * a,
        6.0 * (2.0 * p.detuning * p.omega_plus * yk - a),
    ))
}

/// n̄₋ = 5Y₀kA / (6[A − 2δω₋Y₀k]).
pub fn doppler_limit_magnetron(p: &DopplerLimitInputs) -> Result<CoolingLimit> {
    p.validate()?;
    let yk = p.gradient * p.wavenumber;
    let a = p.a();
    Ok(limit(
        p.correction * 5.0 * yk * a,
        6.0 * (a - 2.0 * p.detuning * p.omega_minus * yk),
    ))
}

/// Boundary frequency c* = ((Γ/2)² + δ²)/(2kY₀δ), rad/s. Both modes cool
/// when ω₋ < c* < ω₊.
pub fn simultaneous_cooling_window(gradient: f64, detuning: f64, linewidth: f64, wavenumber: f64) -> Result<f64> {
    for (name, v) in [
        ("analytic.gradient", gradient),
        ("analytic.detuning", detuning),
        ("analytic.linewidth", linewidth),
        ("analytic.wavenumber", wavenumber),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(name, "must be positive and finite"));
        }
    }
    Ok((0.25 * linewidth * linewidth + detuning * detuning) / (2.0 * wavenumber * gradient * detuning))
}

/// Ω_a = qV_ax/(4MR₀²ω₁), rad/s.
pub fn axialization_coupling_rate(amplitude: f64, ring_radius: f64, ion: &IonSpecies, omega_1: f64) -> Result<f64> {
    if !(amplitude >= 0.0) {
        return Err(Error::invalid("axialization.amplitude", "must be non-negative"));
    }
    if !(ring_radius > 0.0) {
        return Err(Error::invalid("trap.ring_radius", "must be positive"));
    }
    if !(omega_1 > 0.0) {
        return Err(Error::DegenerateFrequencies);
    }
    Ok(ion.q_over_m() * amplitude / (4.0 * ring_radius * ring_radius * omega_1))
}

/// T = ħΓ/(3k_B), K.
pub fn doppler_temperature_limit(linewidth: f64) -> f64 {
    HBAR * linewidth / (3.0 * K_B)
}

/// One point of a limit-versus-magnetron-frequency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitPoint {
    pub nu_minus_hz: f64,
    pub n_plus: CoolingLimit,
    pub n_minus: CoolingLimit,
}

impl LimitPoint {
    pub fn stable(&self) -> bool {
        self.n_plus.is_stable() && self.n_minus.is_stable()
    }
}

/// Doppler limits as a function of ν₋ at fixed true cyclotron frequency
/// (ω₊ = ω_c − ω₋), as in a trap-voltage scan.
pub fn limit_curve(
    nu_c_hz: f64,
    nu_minus_hz: &[f64],
    gradient: f64,
    detuning: f64,
    linewidth: f64,
    wavenumber: f64,
) -> Result<Vec<LimitPoint>> {
    let omega_c = crate::hz_to_angular(nu_c_hz);
    nu_minus_hz
        .iter()
        .map(|&nu| {
            let wm = crate::hz_to_angular(nu);
            if !(wm > 0.0 && wm < 0.5 * omega_c) {
                return Err(Error::invalid("limits.nu_minus", "must lie in (0, nu_c/2)"));
            }
            let p = DopplerLimitInputs::new(gradient, detuning, linewidth, wavenumber, omega_c - wm, wm);
            Ok(LimitPoint {
                nu_minus_hz: nu,
                n_plus: doppler_limit_cyclotron(&p)?,
                n_minus: doppler_limit_magnetron(&p)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{CA_COOLING_LINEWIDTH, CA_COOLING_WAVELENGTH};
    use crate::hz_to_angular;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    fn inputs(y0: f64, nu_plus: f64, nu_minus: f64) -> DopplerLimitInputs {
        DopplerLimitInputs::new(
            y0,
            CA_COOLING_LINEWIDTH / 2.0,
            CA_COOLING_LINEWIDTH,
            TAU / CA_COOLING_WAVELENGTH,
            hz_to_angular(nu_plus),
            hz_to_angular(nu_minus),
        )
    }

    #[test]
    fn cyclotron_limit_value() {
        let n = doppler_limit_cyclotron(&inputs(50e-6, 677e3, 52e3)).unwrap();
        assert_relative_eq!(n.value().unwrap(), 13.567_5, max_relative = 1e-4);
    }

    #[test]
    fn magnetron_unstable_for_wide_gradient() {
        let n = doppler_limit_magnetron(&inputs(50e-6, 677e3, 52e3)).unwrap();
        assert_eq!(n, CoolingLimit::Unstable);
    }

    #[test]
    fn magnetron_limit_value() {
        let n = doppler_limit_magnetron(&inputs(5e-6, 677e3, 52e3)).unwrap();
        assert_relative_eq!(n.value().unwrap(), 106.536, max_relative = 1e-4);
    }

    #[test]
    fn window_at_half_linewidth() {
        let k = TAU / CA_COOLING_WAVELENGTH;
        let g = CA_COOLING_LINEWIDTH;
        let c = simultaneous_cooling_window(5e-6, g / 2.0, g, k).unwrap();
        assert_relative_eq!(c, g / (2.0 * 5e-6 * k), max_relative = 1e-14);
        assert_relative_eq!(c / TAU, 136_478.5, max_relative = 1e-5);
        assert!(hz_to_angular(52e3) < c && c < hz_to_angular(677e3));
        let wide = simultaneous_cooling_window(1e3, g / 2.0, g, k).unwrap();
        assert!(wide < 1.0);
    }

    #[test]
    fn magnetron_pole_sits_at_window_edge() {
        let p = inputs(5e-6, 677e3, 52e3);
        let c = simultaneous_cooling_window(p.gradient, p.detuning, p.linewidth, p.wavenumber).unwrap();
        let below = DopplerLimitInputs { omega_minus: c * (1.0 - 1e-9), ..p };
        let above = DopplerLimitInputs { omega_minus: c * (1.0 + 1e-9), ..p };
        assert!(doppler_limit_magnetron(&below).unwrap().value().unwrap() > 1e8);
        assert_eq!(doppler_limit_magnetron(&above).unwrap(), CoolingLimit::Unstable);
    }

    #[test]
    fn correction_scales_limits() {
        let p = inputs(5e-6, 677e3, 52e3);
        let base = doppler_limit_magnetron(&p).unwrap().value().unwrap();
        let corr = doppler_limit_magnetron(&p.with_axial_beam_correction()).unwrap().value().unwrap();
        assert_relative_eq!(corr, 1.3 * base, max_relative = 1e-14);
    }

    #[test]
    fn coupling_rate_reference() {
        let ion = IonSpecies::calcium40();
        let w = axialization_coupling_rate(1.0, 0.01, &ion, hz_to_angular(300e3)).unwrap();
        assert_relative_eq!(w / TAU, 509.65, max_relative = 1e-3);
        assert_eq!(axialization_coupling_rate(0.0, 0.01, &ion, 1.0).unwrap(), 0.0);
        let w2 = axialization_coupling_rate(1.0, 0.02, &ion, hz_to_angular(300e3)).unwrap();
        assert_relative_eq!(w2, w / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn doppler_temperature() {
        assert_relative_eq!(doppler_temperature_limit(CA_COOLING_LINEWIDTH), 3.4555e-4, max_relative = 1e-4);
        assert_eq!(doppler_temperature_limit(0.0), 0.0);
    }

    #[test]
    fn curve_shape() {
        let nus: Vec<f64> = (1..=130).map(|i| i as f64 * 1e3).collect();
        let g = CA_COOLING_LINEWIDTH;
        let pts = limit_curve(729e3, &nus, 5e-6, g / 2.0, g, TAU / CA_COOLING_WAVELENGTH).unwrap();
        let minus: Vec<f64> = pts.iter().map(|p| p.n_minus.value().unwrap()).collect();
        assert!(minus.windows(2).all(|w| w[1] > w[0]));
        let plus: Vec<f64> = pts.iter().map(|p| p.n_plus.value().unwrap()).collect();
        let spread = plus.iter().cloned().fold(0.0, f64::max) / plus.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1.3, "cyclotron curve should be nearly flat, spread {spread}");
        assert!(minus.last().unwrap() / minus[0] > 10.0);
        let beyond = limit_curve(729e3, &[140e3], 5e-6, g / 2.0, g, TAU / CA_COOLING_WAVELENGTH).unwrap();
        assert!(!beyond[0].stable());
    }
}
