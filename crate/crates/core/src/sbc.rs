//! Rate-equation model of pulsed multi-order sideband cooling.
//!
//! During a pulse on order s of one mode, population flows n → n − s at
//!
//! ```text
//! R_n = f·Ω₀²·C_s(n)² / Γ̃
//! ```
//!
//! where C_s(n) is the relative coupling of the n → n − s sideband, f the
//! pulse's intensity fraction (Ω² scales with intensity) and Γ̃ the
//! quench-broadened linewidth. Both modes heat throughout at their
//! configured rate h via the ladder n → n ± 1 with rates h(n+1) and h·n,
//! which gives dn̄/dt = h for any distribution. The cutoff is reflecting and
//! the flux that hits it is reported as leaked weight.

use serde::{Deserialize, Serialize};

use crate::spectroscopy::{thermal_weights, CouplingTable, Mode, ThermalState};
use crate::{hz_to_angular, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingPulse {
    pub mode: Mode,
    /// Sideband order (phonons removed per transition), ≥ 1.
    pub order: u32,
    /// s
    pub duration: f64,
    /// Fraction of full probe intensity, in [0, 1].
    pub intensity_fraction: f64,
}

impl CoolingPulse {
    pub fn new(mode: Mode, order: u32, duration: f64, intensity_fraction: f64) -> Result<Self> {
        let p = CoolingPulse {
            mode,
            order,
            duration,
            intensity_fraction,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::invalid("pulse.order", "must be at least 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("pulse.duration", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.intensity_fraction) {
            return Err(Error::invalid("pulse.intensity_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateModelParams {
    /// Full-intensity carrier Rabi frequency Ω₀, rad/s.
    pub rabi_frequency: f64,
    /// Γ̃, rad/s.
    pub effective_linewidth: f64,
    /// phonons/s
    pub heating_rate_plus: f64,
    /// phonons/s
    pub heating_rate_minus: f64,
    /// Extra magnetron heating during first-order magnetron pulses from
    /// off-resonant carrier excitation, phonons/s. Zero disables it.
    pub carrier_heating_rate: f64,
    /// Highest Fock state kept per mode.
    pub cutoff: usize,
    /// Spacing of the recorded time series, s.
    pub record_interval: f64,
}

impl Default for RateModelParams {
    fn default() -> Self {
        RateModelParams {
            rabi_frequency: hz_to_angular(14.13e3),
            effective_linewidth: hz_to_angular(7.5e3),
            heating_rate_plus: 0.0,
            heating_rate_minus: 300.0,
            carrier_heating_rate: 0.0,
            cutoff: 2000,
            record_interval: 0.1e-3,
        }
    }
}

impl RateModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_frequency >= 0.0 && self.rabi_frequency.is_finite()) {
            return Err(Error::invalid("sbc.rabi_frequency", "must be non-negative"));
        }
        if !(self.effective_linewidth > 0.0 && self.effective_linewidth.is_finite()) {
            return Err(Error::invalid("sbc.effective_linewidth", "must be positive"));
        }
        for (name, v) in [
            ("sbc.heating_rate_plus", self.heating_rate_plus),
            ("sbc.heating_rate_minus", self.heating_rate_minus),
            ("sbc.carrier_heating_rate", self.carrier_heating_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if self.cutoff < 15 {
            return Err(Error::invalid("sbc.cutoff", "must be at least 15"));
        }
        if !(self.record_interval > 0.0) {
            return Err(Error::invalid("sbc.record_interval", "must be positive"));
        }
        Ok(())
    }

    fn heating(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Cyclotron => self.heating_rate_plus,
            Mode::Magnetron => self.heating_rate_minus,
        }
    }
}

/// The 68 ms sequence used to cool both radial modes close to the ground
/// state.
pub fn table1_sequence() -> Vec<CoolingPulse> {
    use Mode::{Cyclotron as C, Magnetron as M};
    [
        (C, 2, 5.0, 100.0),
        (C, 1, 10.0, 100.0),
        (M, 3, 5.0, 100.0),
        (M, 2, 5.0, 100.0),
        (M, 1, 5.0, 52.0),
        (C, 2, 5.0, 100.0),
        (C, 1, 5.0, 100.0),
        (M, 3, 5.0, 100.0),
        (M, 2, 5.0, 100.0),
        (M, 1, 5.0, 52.0),
        (C, 1, 10.0, 100.0),
        (M, 1, 2.0, 52.0),
        (C, 1, 1.0, 100.0),
    ]
    .into_iter()
    .map(|(mode, order, ms, pct)| CoolingPulse {
        mode,
        order,
        duration: ms * 1e-3,
        intensity_fraction: pct / 100.0,
    })
    .collect()
}

pub fn total_duration(seq: &[CoolingPulse]) -> f64 {
    seq.iter().map(|p| p.duration).sum()
}

/// Parses one pulse per line as `mode order duration_ms intensity_pct`.
/// Blank lines and `#` comments are ignored.
pub fn parse_sequence(text: &str) -> Result<Vec<CoolingPulse>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |what: &str| Error::invalid("sequence", format!("line {}: {what}", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(at("expected `mode order duration_ms intensity_pct`"));
        }
        let mode = Mode::parse(fields[0]).ok_or_else(|| at("unknown mode"))?;
        let order: u32 = fields[1]
            .trim_end_matches(|c: char| c.is_ascii_alphabetic())
            .parse()
            .map_err(|_| at("bad order"))?;
        let ms: f64 = fields[2].parse().map_err(|_| at("bad duration"))?;
        let pct: f64 = fields[3].trim_end_matches('%').parse().map_err(|_| at("bad intensity"))?;
        let pulse = CoolingPulse::new(mode, order, ms * 1e-3, pct / 100.0).map_err(|e| at(&e.to_string()))?;
        out.push(pulse);
    }
    Ok(out)
}

pub fn format_sequence(seq: &[CoolingPulse]) -> String {
    let mut s = String::from("# mode order duration_ms intensity_pct\n");
    for p in seq {
        s.push_str(&format!(
            "{} {} {} {}\n",
            p.mode.label(),
            p.order,
            p.duration * 1e3,
            p.intensity_fraction * 100.0
        ));
    }
    s
}

/// Transfer rate n → n − order while `pulse` is applied, 1/s.
pub fn pump_rate(n: usize, pulse: &CoolingPulse, params: &RateModelParams, eta: f64) -> f64 {
    if n < pulse.order as usize {
        return 0.0;
    }
    let c = crate::spectroscopy::sideband_coupling(n, -(pulse.order as i32), eta);
    rate_prefactor(pulse, params) * c * c
}

fn rate_prefactor(pulse: &CoolingPulse, params: &RateModelParams) -> f64 {
    pulse.intensity_fraction * params.rabi_frequency * params.rabi_frequency / params.effective_linewidth
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub times: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    pub final_plus: Vec<f64>,
    pub final_minus: Vec<f64>,
    /// Heating flux that reached the cutoff (cyclotron, magnetron). The
    /// ladder reflects there, so this weight is still in the distributions.
    pub leaked: (f64, f64),
}

impl SequenceResult {
    pub fn final_state(&self) -> ThermalState {
        ThermalState {
            n_plus_bar: *self.n_plus.last().unwrap_or(&0.0),
            n_minus_bar: *self.n_minus.last().unwrap_or(&0.0),
        }
    }
}

/// Weight above Fock number `n` in a distribution.
pub fn population_above(dist: &[f64], n: usize) -> f64 {
    dist.iter().skip(n + 1).sum()
}

pub fn mean_occupation(dist: &[f64]) -> f64 {
    dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Longest allowed substep, s.
const MAX_SUBSTEP: f64 = 5e-6;

struct ModeState {
    p: Vec<f64>,
    rhs: Vec<f64>,
    // Thomas-algorithm scratch.
    c_prime: Vec<f64>,
    leaked: f64,
}

impl ModeState {
    fn new(p: Vec<f64>) -> Self {
        let n = p.len();
        ModeState {
            p,
            rhs: vec![0.0; n],
            c_prime: vec![0.0; n],
            leaked: 0.0,
        }
    }

    /// Crank–Nicolson step of the one-way transfer n → n − s.
    fn cool(&mut self, rates: &[f64], s: usize, dt: f64) {
        let h = 0.5 * dt;
        let n = self.p.len();
        for k in 0..n {
            let inflow = if k + s < n { rates[k + s] * self.p[k + s] } else { 0.0 };
            self.rhs[k] = self.p[k] + h * (inflow - rates[k] * self.p[k]);
        }
        // Upper-triangular solve from the top.
        for k in (0..n).rev() {
            let inflow = if k + s < n { rates[k + s] * self.p[k + s] } else { 0.0 };
            self.p[k] = (self.rhs[k] + h * inflow) / (1.0 + h * rates[k]);
        }
    }

    /// Backward-Euler step of the heating ladder with a reflecting top.
    fn heat(&mut self, rate: f64, dt: f64) {
        if rate == 0.0 {
            return;
        }
        let n = self.p.len();
        let top = n - 1;
        self.leaked += dt * rate * (top as f64 + 1.0) * self.p[top];
        let hd = rate * dt;
        // Row k of (I − dt·H): sub = −hd·k, diag = 1 + hd(2k+1), sup = −hd(k+1);
        // at the top the upward loss h(N+1) is removed.
        let diag = |k: usize| 1.0 + hd * if k == top { k as f64 } else { (2 * k + 1) as f64 };
        let sub = |k: usize| -hd * k as f64;
        let sup = |k: usize| -hd * (k as f64 + 1.0);
        self.c_prime[0] = sup(0) / diag(0);
        self.rhs[0] = self.p[0] / diag(0);
        for k in 1..n {
            let m = diag(k) - sub(k) * self.c_prime[k - 1];
            self.c_prime[k] = if k < top { sup(k) / m } else { 0.0 };
            self.rhs[k] = (self.p[k] - sub(k) * self.rhs[k - 1]) / m;
        }
        self.p[top] = self.rhs[top];
        for k in (0..top).rev() {
            self.p[k] = self.rhs[k] - self.c_prime[k] * self.p[k + 1];
        }
    }
}

/// Runs `seq` from a two-mode thermal state.
pub fn simulate_sequence(
    seq: &[CoolingPulse],
    initial: &ThermalState,
    params: &RateModelParams,
    eta: f64,
) -> Result<SequenceResult> {
    params.validate()?;
    initial.validate()?;
    for p in seq {
        p.validate()?;
    }
    let normalised = |nbar: f64| -> Result<Vec<f64>> {
        let mut w = thermal_weights(nbar, params.cutoff)?;
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Ok(w)
    };
    let mut plus = ModeState::new(normalised(initial.n_plus_bar)?);
    let mut minus = ModeState::new(normalised(initial.n_minus_bar)?);

    let mut tables: Vec<((Mode, u32), Vec<f64>)> = Vec::new();
    let mut out = SequenceResult {
        times: vec![0.0],
        n_plus: vec![mean_occupation(&plus.p)],
        n_minus: vec![mean_occupation(&minus.p)],
        final_plus: Vec::new(),
        final_minus: Vec::new(),
        leaked: (0.0, 0.0),
    };
    let mut t = 0.0;
    let mut next_record = params.record_interval;
    for pulse in seq {
        let key = (pulse.mode, pulse.order);
        if !tables.iter().any(|(k, _)| *k == key) {
            let c = CouplingTable::new(eta, -(pulse.order as i32), params.cutoff);
            tables.push((key, c.values().iter().map(|v| v * v).collect()));
        }
        let c_sq = &tables.iter().find(|(k, _)| *k == key).expect("inserted above").1;
        let pre = rate_prefactor(pulse, params);
        let rates: Vec<f64> = c_sq
            .iter()
            .enumerate()
            .map(|(n, c)| if n >= pulse.order as usize { pre * c } else { 0.0 })
            .collect();
        let max_rate = rates.iter().cloned().fold(0.0, f64::max);
        let dt_max = if max_rate > 0.0 { (0.5 / max_rate).min(MAX_SUBSTEP) } else { MAX_SUBSTEP };
        let steps = (pulse.duration / dt_max).ceil().max(1.0) as usize;
        let dt = pulse.duration / steps as f64;
        let extra = if pulse.mode == Mode::Magnetron && pulse.order == 1 {
            params.carrier_heating_rate
        } else {
            0.0
        };
        let t0 = t;
        for i in 1..=steps {
            let (target, spectator) = match pulse.mode {
                Mode::Cyclotron => (&mut plus, &mut minus),
                Mode::Magnetron => (&mut minus, &mut plus),
            };
            target.cool(&rates, pulse.order as usize, dt);
            target.heat(params.heating(pulse.mode) + extra, dt);
            let other = match pulse.mode {
                Mode::Cyclotron => Mode::Magnetron,
                Mode::Magnetron => Mode::Cyclotron,
            };
            spectator.heat(params.heating(other), dt);
            t = t0 + i as f64 * dt;
            if t >= next_record - 1e-12 || i == steps {
                out.times.push(t);
                out.n_plus.push(mean_occupation(&plus.p));
                out.n_minus.push(mean_occupation(&minus.p));
                while next_record <= t + 1e-12 {
                    next_record += params.record_interval;
                }
            }
        }
    }
    out.leaked = (plus.leaked, minus.leaked);
    let worst = plus.leaked.max(minus.leaked);
    if worst > 1e-3 {
        return Err(Error::CutoffExceeded {
            cutoff: params.cutoff,
            leaked: worst,
        });
    }
    out.final_plus = plus.p;
    out.final_minus = minus.p;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const ETA: f64 = 0.1226;

    #[test]
    fn table1_shape() {
        let s = table1_sequence();
        assert_eq!(s.len(), 13);
        assert_relative_eq!(total_duration(&s), 68e-3, max_relative = 1e-12);
        assert_eq!(s[0], CoolingPulse::new(Mode::Cyclotron, 2, 5e-3, 1.0).unwrap());
        assert!(s
            .iter()
            .filter(|p| p.mode == Mode::Magnetron && p.order == 1)
            .all(|p| p.intensity_fraction == 0.52));
        assert_eq!(s.last().unwrap().duration, 1e-3);
    }

    #[test]
    fn sequence_text_round_trip() {
        let s = table1_sequence();
        let parsed = parse_sequence(&format_sequence(&s)).unwrap();
        assert_eq!(parsed.len(), s.len());
        for (a, b) in parsed.iter().zip(&s) {
            assert_eq!(a.mode, b.mode);
            assert_eq!(a.order, b.order);
            assert_relative_eq!(a.duration, b.duration, max_relative = 1e-12);
            assert_relative_eq!(a.intensity_fraction, b.intensity_fraction, max_relative = 1e-12);
        }
        assert!(parse_sequence("cyc 0 5 100").is_err());
        assert!(parse_sequence("axial 1 5 100").is_err());
        assert!(parse_sequence("cyc 1 5").is_err());
        assert_eq!(parse_sequence("# only a comment\n\n").unwrap().len(), 0);
        assert_eq!(parse_sequence("Mag. 2nd 5 100%").unwrap()[0].order, 2);
    }

    #[test]
    fn pump_rate_rules() {
        let params = RateModelParams::default();
        let p = CoolingPulse::new(Mode::Magnetron, 2, 1e-3, 1.0).unwrap();
        assert_eq!(pump_rate(1, &p, &params, ETA), 0.0);
        assert!(pump_rate(10, &p, &params, ETA) > 0.0);
        let half = CoolingPulse { intensity_fraction: 0.5, ..p };
        assert_relative_eq!(
            pump_rate(10, &half, &params, ETA),
            0.5 * pump_rate(10, &p, &params, ETA),
            max_relative = 1e-14
        );
        // Near the first zero of the first-order coupling the rate is tiny.
        let first = CoolingPulse { order: 1, ..p };
        let zero = crate::spectroscopy::first_coupling_zero(ETA, 1, 1000).unwrap();
        assert!(pump_rate(zero + 1, &first, &params, ETA) < 1e-3 * pump_rate(20, &first, &params, ETA));
    }

    fn quiet() -> RateModelParams {
        RateModelParams {
            heating_rate_minus: 0.0,
            cutoff: 400,
            ..Default::default()
        }
    }

    #[test]
    fn empty_sequence_is_identity() {
        let s = ThermalState::new(5.0, 7.0).unwrap();
        let r = simulate_sequence(&[], &s, &quiet(), ETA).unwrap();
        assert_relative_eq!(r.final_state().n_plus_bar, 5.0, max_relative = 1e-9);
        assert_relative_eq!(r.final_state().n_minus_bar, 7.0, max_relative = 1e-9);
    }

    #[test]
    fn heating_rate_is_linear() {
        let s = ThermalState::new(2.0, 3.0).unwrap();
        let params = RateModelParams {
            heating_rate_plus: 100.0,
            heating_rate_minus: 300.0,
            cutoff: 400,
            ..Default::default()
        };
        let pulse = CoolingPulse::new(Mode::Cyclotron, 1, 10e-3, 0.0).unwrap();
        let r = simulate_sequence(&[pulse], &s, &params, ETA).unwrap();
        assert_relative_eq!(r.final_state().n_plus_bar, 3.0, max_relative = 1e-6);
        assert_relative_eq!(r.final_state().n_minus_bar, 6.0, max_relative = 1e-6);
        assert_relative_eq!(r.final_plus.iter().sum::<f64>(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn cooling_is_monotone_and_normalised() {
        let s = ThermalState::new(10.0, 10.0).unwrap();
        let pulse = CoolingPulse::new(Mode::Cyclotron, 1, 2e-3, 1.0).unwrap();
        let r = simulate_sequence(&[pulse], &s, &quiet(), ETA).unwrap();
        assert!(r.n_plus.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert_relative_eq!(r.final_plus.iter().sum::<f64>(), 1.0, max_relative = 1e-9);
        assert_relative_eq!(r.final_state().n_minus_bar, 10.0, max_relative = 1e-9);
        assert!(r.final_state().n_plus_bar < 1.0);
    }

    #[test]
    fn longer_pulses_cool_further() {
        let s = ThermalState::new(20.0, 20.0).unwrap();
        let short = [CoolingPulse::new(Mode::Magnetron, 2, 1e-3, 1.0).unwrap()];
        let long = [CoolingPulse::new(Mode::Magnetron, 2, 2e-3, 1.0).unwrap()];
        let a = simulate_sequence(&short, &s, &quiet(), ETA).unwrap();
        let b = simulate_sequence(&long, &s, &quiet(), ETA).unwrap();
        assert!(b.final_state().n_minus_bar <= a.final_state().n_minus_bar);
    }

    #[test]
    fn insufficient_cutoff_rejected() {
        let s = ThermalState::new(136.0, 0.0).unwrap();
        let params = RateModelParams { cutoff: 100, ..Default::default() };
        assert!(matches!(
            simulate_sequence(&[], &s, &params, ETA),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn leak_detected() {
        let s = ThermalState::new(0.0, 1.0).unwrap();
        let params = RateModelParams {
            heating_rate_minus: 1e5,
            cutoff: 20,
            ..Default::default()
        };
        let pulse = CoolingPulse::new(Mode::Cyclotron, 1, 5e-3, 1.0).unwrap();
        assert!(matches!(
            simulate_sequence(&[pulse], &s, &params, ETA),
            Err(Error::CutoffExceeded { .. })
        ));
    }
}
