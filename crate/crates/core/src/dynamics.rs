//! Stochastic semiclassical cooling dynamics in the radial plane.
//!
//! Each time step first advances the deterministic motion (Lorentz force,
//! radial electrostatic anti-confinement and the optional axialization
//! quadrupole) with one eighth-order Runge–Kutta step, then draws the number
//! of photons scattered during the step and applies the corresponding
//! absorption and spontaneous-emission recoil as an instantaneous kick.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::HBAR;
use crate::laser::{recoil_kick, sample_photon_count, LaserConfig, PhaseState, ScatteringModel};
use crate::rng::{stream, SimRng};
use crate::trap::{amplitudes_unchecked, total_energy, ModeFrequencies, PhononNumbers, TrapConfig};
use crate::{rk8, Error, Result};

mod sweep;

pub use sweep::{sweep, SweepAxis, SweepOutcome, SweepRow};

/// Azimuthal quadrupole drive φ = V_ax/(2R₀²)(x² − y²) sin(ω_d t + φ₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxializationConfig {
    /// V
    pub amplitude: f64,
    /// rad/s
    pub drive_frequency: f64,
    /// rad
    pub phase: f64,
}

impl AxializationConfig {
    /// Drive at the true cyclotron frequency ω_c.
    pub fn resonant(amplitude: f64, freqs: &ModeFrequencies) -> Self {
        AxializationConfig {
            amplitude,
            drive_frequency: freqs.omega_c,
            phase: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::invalid("axialization.amplitude", "must be non-negative"));
        }
        if !(self.drive_frequency > 0.0 && self.drive_frequency.is_finite()) {
            return Err(Error::invalid("axialization.drive_frequency", "must be positive"));
        }
        if !self.phase.is_finite() {
            return Err(Error::invalid("axialization.phase", "must be finite"));
        }
        Ok(())
    }
}

/// Deterministic part of the radial equations of motion,
///
/// ```text
/// ẍ =  ω_c ẏ + (ω_z²/2) x + a_d sin(ω_d t + φ₀) x
/// ÿ = −ω_c ẋ + (ω_z²/2) y − a_d sin(ω_d t + φ₀) y
/// ```
///
/// with a_d = qV_ax/(MR₀²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialDynamics {
    omega_c: f64,
    half_wz2: f64,
    drive_coeff: f64,
    drive_omega: f64,
    drive_phase: f64,
}

impl RadialDynamics {
    pub fn new(trap: &TrapConfig, ax: Option<&AxializationConfig>) -> Result<Self> {
        let freqs = trap.frequencies()?;
        let (drive_coeff, drive_omega, drive_phase) = match ax {
            Some(ax) => {
                ax.validate()?;
                (
                    trap.ion.q_over_m() * ax.amplitude / trap.ring_radius.powi(2),
                    ax.drive_frequency,
                    ax.phase,
                )
            }
            None => (0.0, 0.0, 0.0),
        };
        Ok(RadialDynamics {
            omega_c: freqs.omega_c,
            half_wz2: 0.5 * freqs.omega_z * freqs.omega_z,
            drive_coeff,
            drive_omega,
            drive_phase,
        })
    }

    #[inline]
    pub fn acceleration(&self, t: f64, x: f64, y: f64, vx: f64, vy: f64) -> (f64, f64) {
        let mut ax = self.omega_c * vy + self.half_wz2 * x;
        let mut ay = -self.omega_c * vx + self.half_wz2 * y;
        if self.drive_coeff != 0.0 {
            let s = self.drive_coeff * (self.drive_omega * t + self.drive_phase).sin();
            ax += s * x;
            ay -= s * y;
        }
        (ax, ay)
    }

    #[inline]
    fn derivative(&self, t: f64, u: &[f64; 4]) -> [f64; 4] {
        let (ax, ay) = self.acceleration(t, u[0], u[1], u[2], u[3]);
        [u[2], u[3], ax, ay]
    }

    /// One deterministic step of length `dt`.
    #[inline]
    pub fn step(&self, state: &PhaseState, dt: f64) -> Result<PhaseState> {
        let u = [state.x, state.y, state.vx, state.vy];
        let f = |t: f64, u: &[f64; 4]| self.derivative(t, u);
        let next = rk8::step(&f, state.t, &u, dt);
        let out = PhaseState {
            t: state.t + dt,
            x: next[0],
            y: next[1],
            vx: next[2],
            vy: next[3],
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::StepRejected { t: out.t })
        }
    }
}

/// Radial acceleration at `state` for the given trap and optional drive.
pub fn radial_acceleration(
    state: &PhaseState,
    trap: &TrapConfig,
    ax: Option<&AxializationConfig>,
) -> Result<(f64, f64)> {
    let dyn_ = RadialDynamics::new(trap, ax)?;
    Ok(dyn_.acceleration(state.t, state.x, state.y, state.vx, state.vy))
}

/// One eighth-order step of the drift dynamics (no photon recoil).
pub fn integrate_step(
    state: &PhaseState,
    trap: &TrapConfig,
    ax: Option<&AxializationConfig>,
    dt: f64,
) -> Result<PhaseState> {
    RadialDynamics::new(trap, ax)?.step(state, dt)
}

/// Magnitude of the displacement of the orbit centre produced by the mean
/// radiation-pressure force, 2ħkγ/(Mω_z²), with γ evaluated at `initial`.
///
/// The beam pushes along +x while the radial potential is anti-confining, so
/// the orbit centre sits at x = −offset.
pub fn laser_force_offset(laser: &LaserConfig, initial: &PhaseState, trap: &TrapConfig) -> Result<f64> {
    let freqs = trap.frequencies()?;
    let gamma = ScatteringModel::new(laser).rate(initial.y, initial.vx);
    Ok(force_offset_for_rate(gamma, laser, trap, &freqs))
}

fn force_offset_for_rate(gamma: f64, laser: &LaserConfig, trap: &TrapConfig, freqs: &ModeFrequencies) -> f64 {
    2.0 * HBAR * laser.wavenumber() * gamma / (trap.ion.mass * freqs.omega_z * freqs.omega_z)
}

/// Initial condition used for all cooling runs unless configured otherwise:
/// x = −4 µm, y = 0, ẋ = 1 m/s, ẏ = 2 m/s.
pub fn reference_initial_state() -> PhaseState {
    PhaseState {
        t: 0.0,
        x: -4e-6,
        y: 0.0,
        vx: 1.0,
        vy: 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub trap: TrapConfig,
    pub laser: Option<LaserConfig>,
    pub axialization: Option<AxializationConfig>,
    /// Integration step, s.
    pub dt: f64,
    /// Total integration time, s.
    pub t_end: f64,
    /// Interval (t_a, t_b) used for equilibrium averages, s.
    pub averaging_window: (f64, f64),
    pub initial_state: PhaseState,
    pub seed: u64,
    /// Record every `record_stride`-th step.
    pub record_stride: usize,
    /// Amplitude (m) above which the ion is declared lost.
    pub divergence_bound: f64,
}

impl SimConfig {
    /// 20 ms run at 20 ns steps, averaged over 10–20 ms, starting from
    /// [`reference_initial_state`], with no laser and no drive.
    pub fn new(trap: TrapConfig) -> Self {
        SimConfig {
            trap,
            laser: None,
            axialization: None,
            dt: 20e-9,
            t_end: 20e-3,
            averaging_window: (10e-3, 20e-3),
            initial_state: reference_initial_state(),
            seed: 0,
            record_stride: 50,
            divergence_bound: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.trap.validate()?;
        let freqs = self.trap.frequencies()?;
        if freqs.omega_1 <= 0.0 {
            return Err(Error::DegenerateFrequencies);
        }
        if let Some(l) = &self.laser {
            l.validate()?;
        }
        if let Some(a) = &self.axialization {
            a.validate()?;
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("sim.dt", "must be positive"));
        }
        // ω₊dt must stay well inside the accuracy region of the integrator.
        if self.dt * freqs.omega_plus > 0.5 {
            return Err(Error::invalid(
                "sim.dt",
                format!("omega_plus * dt = {:.3} is too coarse (limit 0.5)", self.dt * freqs.omega_plus),
            ));
        }
        if !(self.t_end > 0.0) {
            return Err(Error::invalid("sim.t_end", "must be positive"));
        }
        let (ta, tb) = self.averaging_window;
        if !(ta < tb && tb <= self.t_end * (1.0 + 1e-12) && ta >= 0.0) {
            return Err(Error::invalid("sim.averaging_window", "need 0 <= t_a < t_b <= t_end"));
        }
        if self.record_stride == 0 {
            return Err(Error::invalid("sim.record_stride", "must be at least 1"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::invalid("sim.divergence_bound", "must be positive"));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::invalid("sim.initial_state", "must be finite"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

/// Sampled time series of one trajectory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub r_plus_sq: Vec<f64>,
    pub r_minus_sq: Vec<f64>,
    pub n_plus: Vec<f64>,
    pub n_minus: Vec<f64>,
    /// Photons scattered since the previous sample.
    pub photons: Vec<u64>,
    pub final_state: PhaseState,
    /// Orbit-centre correction applied to x before computing amplitudes, m.
    pub force_offset: f64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, r_plus_sq: f64, r_minus_sq: f64, phonon_scale: f64, photons: u64) {
        self.times.push(t);
        self.r_plus_sq.push(r_plus_sq);
        self.r_minus_sq.push(r_minus_sq);
        self.n_plus.push(r_plus_sq * phonon_scale);
        self.n_minus.push(r_minus_sq * phonon_scale);
        self.photons.push(photons);
    }
}

/// Integrates one trajectory. Reproducible bit for bit for a fixed config.
pub fn simulate_trajectory(cfg: &SimConfig) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed);
    simulate_with_rng(cfg, &mut rng)
}

pub(crate) fn simulate_with_rng(cfg: &SimConfig, rng: &mut SimRng) -> Result<TrajectoryRecord> {
    let freqs = cfg.trap.frequencies()?;
    let dynamics = RadialDynamics::new(&cfg.trap, cfg.axialization.as_ref())?;
    let ion = &cfg.trap.ion;
    let phonon_scale = ion.mass * freqs.omega_1 / HBAR;

    let scattering = cfg.laser.as_ref().map(ScatteringModel::new);
    let recoil_velocity = cfg.laser.as_ref().map_or(0.0, |l| HBAR * l.wavenumber() / ion.mass);
    let force_offset = match (&cfg.laser, &scattering) {
        (Some(l), Some(s)) => {
            let gamma0 = s.rate(cfg.initial_state.y, cfg.initial_state.vx);
            force_offset_for_rate(gamma0, l, &cfg.trap, &freqs)
        }
        _ => 0.0,
    };

    let steps = cfg.steps();
    let bound = cfg.divergence_bound;
    let bound_sq = bound * bound;
    let mut rec = TrajectoryRecord {
        force_offset,
        ..Default::default()
    };
    let cap = steps / cfg.record_stride + 1;
    rec.times.reserve(cap);
    rec.r_plus_sq.reserve(cap);
    rec.r_minus_sq.reserve(cap);
    rec.n_plus.reserve(cap);
    rec.n_minus.reserve(cap);
    rec.photons.reserve(cap);

    let mut state = cfg.initial_state;
    let record = |rec: &mut TrajectoryRecord, s: &PhaseState, photons: u64| -> Result<()> {
        let a = amplitudes_unchecked(s.x + force_offset, s.y, s.vx, s.vy, &freqs);
        let worst = a.r_plus_sq.max(a.r_minus_sq);
        if !(worst <= bound_sq) {
            return Err(Error::Diverged { t: s.t, amplitude_sq: worst });
        }
        rec.push(s.t, a.r_plus_sq, a.r_minus_sq, phonon_scale, photons);
        Ok(())
    };
    record(&mut rec, &state, 0)?;

    let mut photons_since = 0u64;
    for i in 1..=steps {
        // Keep the time grid exact instead of accumulating dt.
        let t_prev = state.t;
        state = dynamics.step(&state, cfg.dt)?;
        state.t = cfg.initial_state.t + i as f64 * cfg.dt;
        if let Some(s) = &scattering {
            let gamma = s.rate(state.y, state.vx);
            let n = sample_photon_count(gamma, state.t - t_prev, rng);
            if n > 0 {
                let (dvx, dvy) = recoil_kick(n, recoil_velocity, rng);
                state.vx += dvx;
                state.vy += dvy;
                photons_since += n;
            }
        }
        if state.x.abs() > 2.0 * bound || state.y.abs() > 2.0 * bound {
            return Err(Error::Diverged {
                t: state.t,
                amplitude_sq: state.x * state.x + state.y * state.y,
            });
        }
        if i % cfg.record_stride == 0 || i == steps {
            record(&mut rec, &state, photons_since)?;
            photons_since = 0;
        }
    }
    rec.final_state = state;
    Ok(rec)
}

/// Time average of n̄± over the samples with t in [t_a, t_b].
pub fn equilibrium_phonons(rec: &TrajectoryRecord, window: (f64, f64)) -> Result<PhononNumbers> {
    let (ta, tb) = window;
    let (mut sp, mut sm, mut count) = (0.0, 0.0, 0usize);
    for ((&t, &np), &nm) in rec.times.iter().zip(&rec.n_plus).zip(&rec.n_minus) {
        if t >= ta && t <= tb {
            sp += np;
            sm += nm;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::WindowEmpty { start: ta, end: tb });
    }
    Ok(PhononNumbers {
        n_plus: sp / count as f64,
        n_minus: sm / count as f64,
    })
}

/// Runs `cfg` and averages over its configured window.
pub fn simulate_equilibrium(cfg: &SimConfig) -> Result<PhononNumbers> {
    let rec = simulate_trajectory(cfg)?;
    equilibrium_phonons(&rec, cfg.averaging_window)
}

/// Largest relative deviations of the conserved quantities along a
/// laser-free, drive-free record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub energy_drift: f64,
    pub r_plus_sq_drift: f64,
    pub r_minus_sq_drift: f64,
}

/// Drift of the cycle-averaged energy and squared amplitudes relative to the
/// first sample. The energy drift is normalised by the sum of the absolute
/// mode energies, since the magnetron contribution is negative and the total
/// can be close to zero.
pub fn conservation_report(rec: &TrajectoryRecord, trap: &TrapConfig) -> Result<ConservationReport> {
    let freqs = trap.frequencies()?;
    let ion = &trap.ion;
    if rec.is_empty() {
        return Err(Error::WindowEmpty { start: 0.0, end: 0.0 });
    }
    let (p0, m0) = (rec.r_plus_sq[0], rec.r_minus_sq[0]);
    let e0 = total_energy(0.0, p0, m0, &freqs, ion);
    let scale = total_energy(0.0, p0, 0.0, &freqs, ion).abs() + total_energy(0.0, 0.0, m0, &freqs, ion).abs();
    let mut report = ConservationReport {
        energy_drift: 0.0,
        r_plus_sq_drift: 0.0,
        r_minus_sq_drift: 0.0,
    };
    let rel = |v: f64, v0: f64| if v0 != 0.0 { ((v - v0) / v0).abs() } else { v.abs() };
    for (&p, &m) in rec.r_plus_sq.iter().zip(&rec.r_minus_sq) {
        let e = total_energy(0.0, p, m, &freqs, ion);
        let de = if scale > 0.0 { ((e - e0) / scale).abs() } else { 0.0 };
        report.energy_drift = report.energy_drift.max(de);
        report.r_plus_sq_drift = report.r_plus_sq_drift.max(rel(p, p0));
        report.r_minus_sq_drift = report.r_minus_sq_drift.max(rel(m, m0));
    }
    Ok(report)
}

/// Angular frequency of the periodic exchange between the two radial modes,
/// estimated from the mean spacing of the crossings of ⟨r₊²⟩ through its
/// mid-level. Returns `None` if fewer than two crossings are present.
///
/// The returned value is the angular frequency of the ⟨r₊²⟩ oscillation
/// itself (one full cycle = cyclotron → magnetron → cyclotron).
pub fn exchange_frequency(rec: &TrajectoryRecord) -> Option<f64> {
    let series = &rec.r_plus_sq;
    if series.len() < 3 {
        return None;
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mid = 0.5 * (lo + hi);
    let band = 0.1 * (hi - lo);
    // Hysteresis keeps fast residual ripple from producing spurious
    // crossings.
    let mut crossings = Vec::new();
    let mut above = series[0] > mid;
    let mut armed = true;
    for i in 1..series.len() {
        let v = series[i];
        if armed && (v > mid) != above {
            let (t0, t1) = (rec.times[i - 1], rec.times[i]);
            let (v0, v1) = (series[i - 1], v);
            let frac = if v1 != v0 { (mid - v0) / (v1 - v0) } else { 0.5 };
            crossings.push(t0 + frac * (t1 - t0));
            above = v > mid;
            armed = false;
        }
        if !armed && (v - mid).abs() > band {
            armed = true;
            above = v > mid;
        }
    }
    if crossings.len() < 3 {
        return None;
    }
    // Crossings alternate direction; consecutive crossings are half a period
    // apart.
    let span = crossings[crossings.len() - 1] - crossings[0];
    let half_periods = (crossings.len() - 1) as f64;
    Some(std::f64::consts::PI * half_periods / span)
}

/// Draws photon number and kick for a single step; exposed for tests of the
/// splitting scheme.
pub fn apply_recoil<R: Rng + ?Sized>(
    state: &mut PhaseState,
    laser: &LaserConfig,
    trap: &TrapConfig,
    dt: f64,
    rng: &mut R,
) -> u64 {
    let gamma = ScatteringModel::new(laser).rate(state.y, state.vx);
    let n = sample_photon_count(gamma, dt, rng);
    let (dvx, dvy) = recoil_kick(n, HBAR * laser.wavenumber() / trap.ion.mass, rng);
    state.vx += dvx;
    state.vy += dvy;
    n
}
