//! Resolved-sideband spectroscopy of the two radial modes.
//!
//! Sideband orders are labelled by the sign of the probe detuning: order +1
//! sits at +ν of the mode. For the cyclotron mode a positive order adds
//! phonons; for the magnetron mode, whose energy is negative, a positive
//! order *removes* phonons. [`Line::phonon_change`] encodes this mapping.

mod comb;
mod coupling;
mod model;
mod thermal;
mod thermometry;

use serde::{Deserialize, Serialize};

pub use comb::{comb_model, gaussian_comb_thermometry, CombFit, CombParams};
pub use coupling::{first_coupling_zero, lamb_dicke, laguerre, sideband_coupling, CouplingTable};
pub use model::{two_mode_rabi, FlopModel, SpectrumModel, SpectrumScan, DEFAULT_BACKGROUND};
pub use thermal::{adaptive_cutoff, max_mean_for_cutoff, thermal_tail, thermal_weights, MIN_CUTOFF, TAIL_TOLERANCE};
pub use thermometry::{fit_flops, fit_spectrum, FlopData, FlopFitSetup, SpectrumFitSetup, FLOP_PARAMETERS, SPECTRUM_PARAMETERS};

use crate::{Error, Result};

/// Radial mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cyclotron,
    Magnetron,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Cyclotron => "cyclotron",
            Mode::Magnetron => "magnetron",
        }
    }

    /// Accepts `cyclotron`, `cyc`, `c`, `+` and the magnetron equivalents.
    pub fn parse(s: &str) -> Option<Mode> {
        match s.trim().to_ascii_lowercase().trim_end_matches('.') {
            "cyclotron" | "cyc" | "c" | "+" | "plus" => Some(Mode::Cyclotron),
            "magnetron" | "mag" | "m" | "-" | "minus" => Some(Mode::Magnetron),
            _ => None,
        }
    }
}

/// Sideband of a single mode; `order` < 0 is red, 0 the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SidebandId {
    pub mode: Mode,
    pub order: i32,
}

impl SidebandId {
    pub const MAX_ORDER: i32 = 4;

    pub fn new(mode: Mode, order: i32) -> Result<Self> {
        if order.abs() > Self::MAX_ORDER {
            return Err(Error::invalid("sideband.order", format!("|order| must be at most {}", Self::MAX_ORDER)));
        }
        Ok(SidebandId { mode, order })
    }

    pub fn line(self) -> Line {
        match self.mode {
            Mode::Cyclotron => Line::new(self.order, 0),
            Mode::Magnetron => Line::new(0, self.order),
        }
    }
}

/// A spectral line addressing both modes at once, at detuning
/// `plus·ν₊ + minus·ν₋` from the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Line {
    pub plus: i32,
    pub minus: i32,
}

impl Line {
    pub const CARRIER: Line = Line { plus: 0, minus: 0 };

    pub const fn new(plus: i32, minus: i32) -> Self {
        Line { plus, minus }
    }

    /// Position relative to the carrier, Hz.
    pub fn position_hz(self, nu_plus: f64, nu_minus: f64) -> f64 {
        self.plus as f64 * nu_plus + self.minus as f64 * nu_minus
    }

    /// Phonon-number change (Δn₊, Δn₋) when the line is driven.
    pub fn phonon_change(self) -> (i32, i32) {
        (self.plus, -self.minus)
    }

    /// Carrier plus all single-mode sidebands up to the given orders.
    pub fn single_mode_set(max_plus: i32, max_minus: i32) -> Vec<Line> {
        let mut out = vec![Line::CARRIER];
        for s in 1..=max_plus {
            out.push(Line::new(-s, 0));
            out.push(Line::new(s, 0));
        }
        for s in 1..=max_minus {
            out.push(Line::new(0, -s));
            out.push(Line::new(0, s));
        }
        out
    }
}

/// Mean occupations of a two-mode thermal state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalState {
    pub n_plus_bar: f64,
    pub n_minus_bar: f64,
}

impl ThermalState {
    pub fn new(n_plus_bar: f64, n_minus_bar: f64) -> Result<Self> {
        let s = ThermalState { n_plus_bar, n_minus_bar };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_plus_bar >= 0.0 && self.n_plus_bar.is_finite()) {
            return Err(Error::invalid("state.n_plus_bar", "must be non-negative"));
        }
        if !(self.n_minus_bar >= 0.0 && self.n_minus_bar.is_finite()) {
            return Err(Error::invalid("state.n_minus_bar", "must be non-negative"));
        }
        Ok(())
    }

    pub fn mean(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Cyclotron => self.n_plus_bar,
            Mode::Magnetron => self.n_minus_bar,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magnetron_blue_removes_phonons() {
        let blue_mag = SidebandId::new(Mode::Magnetron, 1).unwrap().line();
        assert_eq!(blue_mag.phonon_change(), (0, -1));
        let red_cyc = SidebandId::new(Mode::Cyclotron, -1).unwrap().line();
        assert_eq!(red_cyc.phonon_change(), (-1, 0));
        assert!(blue_mag.position_hz(677e3, 52e3) > 0.0);
    }

    #[test]
    fn order_limit() {
        assert!(SidebandId::new(Mode::Cyclotron, 5).is_err());
        assert!(SidebandId::new(Mode::Cyclotron, -4).is_ok());
    }

    #[test]
    fn line_set_size() {
        let set = Line::single_mode_set(3, 4);
        assert_eq!(set.len(), 15);
        assert_eq!(set[0], Line::CARRIER);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(Mode::parse("Cyc."), Some(Mode::Cyclotron));
        assert_eq!(Mode::parse("mag"), Some(Mode::Magnetron));
        assert_eq!(Mode::parse("axial"), None);
    }

    #[test]
    fn thermal_state_validation() {
        assert!(ThermalState::new(-1.0, 0.0).is_err());
        assert!(ThermalState::new(0.0, f64::NAN).is_err());
        assert_eq!(ThermalState::new(1.0, 2.0).unwrap().mean(Mode::Magnetron), 2.0);
    }
}
