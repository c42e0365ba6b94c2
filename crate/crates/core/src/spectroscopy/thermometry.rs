use serde::{Deserialize, Serialize};

use super::model::{FlopModel, SpectrumModel, SpectrumScan};
use super::thermal::{adaptive_cutoff, max_mean_for_cutoff};
use super::ThermalState;
use crate::fit::{binomial_sigmas, least_squares, FitOptions, FitResult, Parameter};
use crate::{Error, Result};

/// Parameter names of a spectrum fit, in model order.
pub const SPECTRUM_PARAMETERS: [&str; 5] = ["n_plus_bar", "n_minus_bar", "omega0", "background", "centre_hz"];
/// Parameter names of a flop fit, in model order.
pub const FLOP_PARAMETERS: [&str; 3] = ["n_plus_bar", "n_minus_bar", "omega0"];

/// Starting point, bounds and free flags of a spectrum fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFitSetup {
    pub state: ThermalState,
    /// rad/s
    pub omega0: f64,
    pub background: f64,
    pub centre_hz: f64,
    /// Flags in [`SPECTRUM_PARAMETERS`] order.
    pub free: [bool; 5],
    /// rad/s
    pub omega0_bounds: (f64, f64),
    pub background_bounds: (f64, f64),
    pub centre_bounds_hz: (f64, f64),
}

impl SpectrumFitSetup {
    /// All five parameters free; Ω₀ within a factor 4 of the guess, the
    /// centre within ±2 kHz.
    pub fn new(state: ThermalState, omega0: f64, background: f64, centre_hz: f64) -> Self {
        SpectrumFitSetup {
            state,
            omega0,
            background,
            centre_hz,
            free: [true; 5],
            omega0_bounds: (omega0 / 4.0, omega0 * 4.0),
            background_bounds: (0.0, 0.5),
            centre_bounds_hz: (centre_hz - 2e3, centre_hz + 2e3),
        }
    }

    fn parameters(&self, n_max: (f64, f64)) -> Vec<Parameter> {
        let spec = [
            (self.state.n_plus_bar, (0.0, n_max.0)),
            (self.state.n_minus_bar, (0.0, n_max.1)),
            (self.omega0, self.omega0_bounds),
            (self.background, self.background_bounds),
            (self.centre_hz, self.centre_bounds_hz),
        ];
        spec.iter()
            .zip(SPECTRUM_PARAMETERS)
            .zip(self.free)
            .map(|((&(v, (lo, hi)), name), free)| {
                if free {
                    Parameter::free(name, v, lo, hi)
                } else {
                    Parameter::fixed(name, v)
                }
            })
            .collect()
    }
}

/// Fits n̄±, Ω₀, background and centre of `model` to a scan, weighting each
/// point by its binomial error.
///
/// The n̄ bounds follow from the model's Fock cutoffs.
pub fn fit_spectrum(scan: &SpectrumScan, model: &SpectrumModel, setup: &SpectrumFitSetup, opts: &FitOptions) -> Result<FitResult> {
    scan.validate()?;
    let (np, nm) = model.cutoffs();
    let params = setup.parameters((max_mean_for_cutoff(np), max_mean_for_cutoff(nm)));
    let detuning = &scan.detuning_hz;
    let f = |x: &[f64]| -> Result<Vec<f64>> {
        let state = ThermalState {
            n_plus_bar: x[0],
            n_minus_bar: x[1],
        };
        model.evaluate(detuning, x[2], &state, x[3], x[4])
    };
    reweighted(&f, &scan.excitation, &scan.shots, &params, opts)
}

/// Weighted least squares with errors taken from the fitted curve.
///
/// Errors estimated from the data bias the fit towards points that
/// fluctuated low. The first pass uses them only to find the optimum; later
/// passes restart there with errors from the model until the parameters
/// settle, which solves the binomial maximum-likelihood equations.
fn reweighted<F>(f: &F, data: &[f64], shots: &[u32], params: &[Parameter], opts: &FitOptions) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let mut fit = least_squares(f, data, &binomial_sigmas(data, shots), params, opts)?;
    let mut evaluations = fit.evaluations;
    for _ in 0..MAX_REWEIGHTS {
        let sigma = binomial_sigmas(&f(&fit.values)?, shots);
        let start: Vec<Parameter> = params
            .iter()
            .zip(&fit.values)
            .map(|(p, &v)| Parameter { value: v, ..p.clone() })
            .collect();
        let next = least_squares(f, data, &sigma, &start, &FitOptions { starts: 1, ..*opts })?;
        evaluations += next.evaluations;
        let settled = next
            .values
            .iter()
            .zip(&fit.values)
            .zip(&next.sigmas)
            .all(|((a, b), s)| (a - b).abs() <= REWEIGHT_TOLERANCE * s.max(f64::MIN_POSITIVE));
        fit = next;
        if settled {
            break;
        }
    }
    fit.evaluations = evaluations;
    Ok(fit)
}

const MAX_REWEIGHTS: usize = 5;
/// Shift between passes, in units of the parameter's σ, that counts as
/// settled.
const REWEIGHT_TOLERANCE: f64 = 0.01;

/// Excitation probability versus pulse length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlopData {
    /// s
    pub times: Vec<f64>,
    pub excitation: Vec<f64>,
    pub shots: Vec<u32>,
}

impl FlopData {
    pub fn new(times: Vec<f64>, excitation: Vec<f64>, shots: Vec<u32>) -> Result<Self> {
        let d = FlopData { times, excitation, shots };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        // Same column rules as a scan.
        SpectrumScan {
            detuning_hz: self.times.clone(),
            excitation: self.excitation.clone(),
            shots: self.shots.clone(),
        }
        .validate()?;
        if self.times.iter().any(|&t| t < 0.0) {
            return Err(Error::invalid("flop.time", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopFitSetup {
    pub state: ThermalState,
    /// rad/s
    pub omega0: f64,
    /// Flags in [`FLOP_PARAMETERS`] order.
    pub free: [bool; 3],
    pub omega0_bounds: (f64, f64),
}

impl FlopFitSetup {
    pub fn new(state: ThermalState, omega0: f64) -> Self {
        FlopFitSetup {
            state,
            omega0,
            free: [true; 3],
            omega0_bounds: (omega0 / 4.0, omega0 * 4.0),
        }
    }
}

/// Fits the thermal two-mode Rabi formula to flop data.
///
/// Without fixed cutoffs on `model`, cutoffs are chosen once from four
/// times the guessed means so the model stays smooth during the search.
pub fn fit_flops(data: &FlopData, model: &FlopModel, setup: &FlopFitSetup, opts: &FitOptions) -> Result<FitResult> {
    data.validate()?;
    let mut model = model.clone();
    let (np, nm) = model.cutoffs.unwrap_or((
        adaptive_cutoff(4.0 * setup.state.n_plus_bar + 1.0),
        adaptive_cutoff(4.0 * setup.state.n_minus_bar + 1.0),
    ));
    model.cutoffs = Some((np, nm));
    let spec = [
        (setup.state.n_plus_bar, (0.0, max_mean_for_cutoff(np))),
        (setup.state.n_minus_bar, (0.0, max_mean_for_cutoff(nm))),
        (setup.omega0, setup.omega0_bounds),
    ];
    let params: Vec<Parameter> = spec
        .iter()
        .zip(FLOP_PARAMETERS)
        .zip(setup.free)
        .map(|((&(v, (lo, hi)), name), free)| if free { Parameter::free(name, v, lo, hi) } else { Parameter::fixed(name, v) })
        .collect();
    let f = |x: &[f64]| -> Result<Vec<f64>> {
        let state = ThermalState {
            n_plus_bar: x[0],
            n_minus_bar: x[1],
        };
        model.probabilities(&data.times, x[2], &state)
    };
    reweighted(&f, &data.excitation, &data.shots, &params, opts)
}
