use serde::{Deserialize, Serialize};

use super::SpectrumScan;
use crate::constants::{HBAR, K_B};
use crate::fit::{binomial_sigmas, least_squares, FitOptions, FitResult, Parameter};
use crate::{Error, Result};

/// Comb of Gaussian lines under a Gaussian envelope:
///
/// ```text
/// b + A·exp(−(Δ−c)²/(2σ²)) · Σ_k exp(−(Δ−c−kν)²/(2w²))
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombParams {
    pub amplitude: f64,
    /// Envelope σ, Hz.
    pub sigma_hz: f64,
    /// Width w of each tooth, Hz.
    pub width_hz: f64,
    pub centre_hz: f64,
    pub background: f64,
    /// Tooth spacing ν, Hz.
    pub spacing_hz: f64,
}

pub fn comb_model(detuning_hz: &[f64], p: &CombParams) -> Vec<f64> {
    let inv_env = 1.0 / (2.0 * p.sigma_hz * p.sigma_hz);
    let inv_tooth = 1.0 / (2.0 * p.width_hz * p.width_hz);
    detuning_hz
        .iter()
        .map(|&d| {
            let x = d - p.centre_hz;
            let env = (-x * x * inv_env).exp();
            // Teeth further than 8w away contribute nothing at f64 precision.
            let reach = (8.0 * p.width_hz / p.spacing_hz).ceil() as i64 + 1;
            let k0 = (x / p.spacing_hz).round() as i64;
            let mut teeth = 0.0;
            for k in (k0 - reach)..=(k0 + reach) {
                let y = x - k as f64 * p.spacing_hz;
                teeth += (-y * y * inv_tooth).exp();
            }
            p.background + p.amplitude * env * teeth
        })
        .collect()
}

/// Envelope width and the temperature and mean occupation it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombFit {
    pub sigma_hz: f64,
    pub sigma_hz_err: f64,
    /// T = Mλ²σ²/k_B, K.
    pub temperature: f64,
    /// n̄ = T·k_B·ω₁/(2ħω²).
    pub nbar: f64,
    pub fit: FitResult,
}

/// Fits [`comb_model`] with the tooth spacing fixed to the mode frequency
/// and converts the envelope width to a temperature.
pub fn gaussian_comb_thermometry(
    scan: &SpectrumScan,
    spacing_hz: f64,
    mode_omega: f64,
    omega_1: f64,
    mass: f64,
    probe_wavelength: f64,
) -> Result<CombFit> {
    scan.validate()?;
    if !(spacing_hz > 0.0) {
        return Err(Error::invalid("comb.spacing_hz", "must be positive"));
    }
    let lo = scan.detuning_hz.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scan.detuning_hz.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span < 2.0 * spacing_hz {
        return Err(Error::invalid("comb.scan", "scan must span at least three sidebands"));
    }
    let bg0 = scan.excitation.iter().cloned().fold(f64::INFINITY, f64::min);
    let peak = scan.excitation.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let excess: Vec<f64> = scan.excitation.iter().map(|p| (p - bg0).max(0.0)).collect();
    let total: f64 = excess.iter().sum();
    let (c0, s0) = if total > 0.0 {
        let c = excess.iter().zip(&scan.detuning_hz).map(|(w, d)| w * d).sum::<f64>() / total;
        let v = excess.iter().zip(&scan.detuning_hz).map(|(w, d)| w * (d - c).powi(2)).sum::<f64>() / total;
        (c, v.sqrt())
    } else {
        (0.5 * (lo + hi), 0.25 * span)
    };
    let sigma_lo = 0.05 * spacing_hz;
    let sigma_hi = 5.0 * span;
    let params = [
        Parameter::free("amplitude", (peak - bg0).clamp(1e-3, 1.0), 0.0, 2.0),
        Parameter::free("sigma_hz", s0.clamp(sigma_lo * 1.01, sigma_hi * 0.99), sigma_lo, sigma_hi),
        Parameter::free("width_hz", spacing_hz / 8.0, spacing_hz / 200.0, spacing_hz),
        Parameter::free("centre_hz", c0.clamp(lo, hi), lo, hi),
        Parameter::free("background", bg0.clamp(0.0, 1.0), 0.0, 1.0),
    ];
    let detuning = &scan.detuning_hz;
    let model = |x: &[f64]| -> Result<Vec<f64>> {
        Ok(comb_model(
            detuning,
            &CombParams {
                amplitude: x[0],
                sigma_hz: x[1],
                width_hz: x[2],
                centre_hz: x[3],
                background: x[4],
                spacing_hz,
            },
        ))
    };
    let sig = binomial_sigmas(&scan.excitation, &scan.shots);
    let fit = least_squares(&model, &scan.excitation, &sig, &params, &FitOptions::default())?;
    let (sigma_hz, sigma_hz_err) = fit.get("sigma_hz").expect("parameter present");
    let at_edge = sigma_hz >= sigma_hi * (1.0 - 1e-6) || sigma_hz <= sigma_lo * (1.0 + 1e-6);
    if at_edge || !(sigma_hz_err < 0.5 * sigma_hz) {
        return Err(Error::FitFailed(format!(
            "envelope width not constrained by the data (sigma = {sigma_hz:.3e} ± {sigma_hz_err:.3e} Hz)"
        )));
    }
    let temperature = comb_temperature(sigma_hz, mass, probe_wavelength);
    Ok(CombFit {
        sigma_hz,
        sigma_hz_err,
        temperature,
        nbar: comb_nbar(temperature, mode_omega, omega_1),
        fit,
    })
}

/// T = Mλ²σ²/k_B
pub fn comb_temperature(sigma_hz: f64, mass: f64, wavelength: f64) -> f64 {
    mass * wavelength * wavelength * sigma_hz * sigma_hz / K_B
}

/// n̄ = T·k_B·ω₁/(2ħω²)
pub fn comb_nbar(temperature: f64, mode_omega: f64, omega_1: f64) -> f64 {
    temperature * K_B * omega_1 / (2.0 * HBAR * mode_omega * mode_omega)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trap::{IonSpecies, ModeFrequencies};
    use approx::assert_relative_eq;

    #[test]
    fn zero_width_is_zero_temperature() {
        assert_eq!(comb_temperature(0.0, 6.6e-26, 729e-9), 0.0);
        assert_eq!(comb_nbar(0.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn comb_peaks_on_teeth() {
        let p = CombParams {
            amplitude: 0.5,
            sigma_hz: 100e3,
            width_hz: 2e3,
            centre_hz: 0.0,
            background: 0.04,
            spacing_hz: 15e3,
        };
        let v = comb_model(&[0.0, 7.5e3, 15e3], &p);
        assert_relative_eq!(v[0], 0.54, max_relative = 1e-9);
        assert!(v[1] < 0.041);
        assert!(v[2] > 0.5 && v[2] < v[0]);
    }

    #[test]
    fn round_trip_recovers_sigma() {
        let truth = CombParams {
            amplitude: 0.3,
            sigma_hz: 60e3,
            width_hz: 3e3,
            centre_hz: 1.2e3,
            background: 0.04,
            spacing_hz: 14.8e3,
        };
        let axis: Vec<f64> = (-150..=150).map(|i| i as f64 * 1e3).collect();
        let p = comb_model(&axis, &truth);
        let scan = SpectrumScan::new(axis.clone(), p, vec![150; axis.len()]).unwrap();
        let f = ModeFrequencies::from_cyclotron_axial_hz(707.8e3, 145e3).unwrap();
        let ion = IonSpecies::calcium40();
        let r = gaussian_comb_thermometry(&scan, truth.spacing_hz, f.omega_minus, f.omega_1, ion.mass, 729e-9).unwrap();
        assert_relative_eq!(r.sigma_hz, truth.sigma_hz, max_relative = 0.02);
        assert_relative_eq!(r.temperature, comb_temperature(truth.sigma_hz, ion.mass, 729e-9), max_relative = 0.05);
    }

    #[test]
    fn narrow_scan_rejected() {
        let axis: Vec<f64> = (0..10).map(|i| i as f64 * 1e3).collect();
        let scan = SpectrumScan::new(axis, vec![0.1; 10], vec![100; 10]).unwrap();
        assert!(gaussian_comb_thermometry(&scan, 15e3, 1.0, 1.0, 1.0, 729e-9).is_err());
    }

    #[test]
    fn flat_scan_fails_to_constrain() {
        let axis: Vec<f64> = (-50..=50).map(|i| i as f64 * 1e3).collect();
        let scan = SpectrumScan::new(axis, vec![0.04; 101], vec![100; 101]).unwrap();
        let r = gaussian_comb_thermometry(&scan, 15e3, 1.0, 1.0, 6.6e-26, 729e-9);
        assert!(r.is_err(), "{r:?}");
    }
}
