use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::coupling::CouplingTable;
use super::thermal::{adaptive_cutoff, thermal_weights, MIN_CUTOFF};
use super::{Line, ThermalState};
use crate::{Error, Result};

/// Shelving background seen with the probe off resonance.
pub const DEFAULT_BACKGROUND: f64 = 0.04;

/// Pairs of Fock states evaluated one by one below this count; above it
/// the coupling distribution is binned.
const EXACT_PAIR_LIMIT: usize = 1024;
const MODE_NODES: usize = 96;
const PRODUCT_NODES: usize = 192;
const NEGLIGIBLE_WEIGHT: f64 = 1e-14;

/// Excitation probability versus probe detuning.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectrumScan {
    /// Hz from the carrier.
    pub detuning_hz: Vec<f64>,
    pub excitation: Vec<f64>,
    pub shots: Vec<u32>,
}

impl SpectrumScan {
    pub fn new(detuning_hz: Vec<f64>, excitation: Vec<f64>, shots: Vec<u32>) -> Result<Self> {
        let s = SpectrumScan { detuning_hz, excitation, shots };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.detuning_hz.len();
        if n == 0 {
            return Err(Error::invalid("scan", "no points"));
        }
        if self.excitation.len() != n || self.shots.len() != n {
            return Err(Error::invalid("scan", "column lengths differ"));
        }
        if self.excitation.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("scan.excitation", "probabilities must lie in [0, 1]"));
        }
        if self.detuning_hz.iter().any(|d| !d.is_finite()) {
            return Err(Error::invalid("scan.detuning_hz", "must be finite"));
        }
        if self.shots.iter().any(|&s| s == 0) {
            return Err(Error::invalid("scan.shots", "must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.detuning_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning_hz.is_empty()
    }

    /// Replaces every probability by the fraction of `shots` successes in a
    /// binomial draw.
    pub fn with_binomial_noise<R: Rng + ?Sized>(&self, shots: u32, rng: &mut R) -> Result<Self> {
        let mut out = self.clone();
        for (p, s) in out.excitation.iter_mut().zip(out.shots.iter_mut()) {
            let dist = Binomial::new(shots as u64, *p).map_err(|e| Error::invalid("scan.excitation", e.to_string()))?;
            *p = dist.sample(rng) as f64 / shots as f64;
            *s = shots;
        }
        Ok(out)
    }
}

/// Piecewise-linear assignment of a value to a uniform grid of nodes.
#[derive(Debug, Clone, Copy)]
struct Split {
    lo: u32,
    hi_frac: f64,
}

fn split(value: f64, step: f64, nodes: usize) -> Split {
    if step <= 0.0 {
        return Split { lo: 0, hi_frac: 0.0 };
    }
    let u = (value / step).clamp(0.0, (nodes - 1) as f64);
    let lo = (u.floor() as usize).min(nodes - 2);
    Split {
        lo: lo as u32,
        hi_frac: u - lo as f64,
    }
}

#[derive(Debug, Clone)]
struct ModeGrid {
    assign: Vec<Split>,
    nodes_sq: Vec<f64>,
}

impl ModeGrid {
    fn new(c_sq: &[f64]) -> Self {
        let max = c_sq.iter().cloned().fold(0.0, f64::max);
        let step = max / (MODE_NODES - 1) as f64;
        ModeGrid {
            assign: c_sq.iter().map(|&v| split(v, step, MODE_NODES)).collect(),
            nodes_sq: (0..MODE_NODES).map(|i| i as f64 * step).collect(),
        }
    }

    fn node_weights(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|w| *w = 0.0);
        for (s, &w) in self.assign.iter().zip(p) {
            out[s.lo as usize] += w * (1.0 - s.hi_frac);
            out[s.lo as usize + 1] += w * s.hi_frac;
        }
    }
}

#[derive(Debug, Clone)]
enum LineKind {
    Exact { c_plus_sq: Vec<f64>, c_minus_sq: Vec<f64> },
    Binned { plus: ModeGrid, minus: ModeGrid, product: Vec<Split>, nodes_sq: Vec<f64> },
}

#[derive(Debug, Clone)]
struct PreparedLine {
    position_hz: f64,
    kind: LineKind,
}

fn squared_table(eta: f64, dn: i32, cutoff: usize) -> Vec<f64> {
    CouplingTable::new(eta, dn, cutoff).values().iter().map(|c| c * c).collect()
}

/// Incoherent sum of thermally averaged Rabi lineshapes,
///
/// ```text
/// P(Δ) = b + Σ_lines Σ_{n₊,n₋} p(n₊)p(n₋) · Ω²/(Ω²+δ²) · sin²(½√(Ω²+δ²) t)
/// ```
///
/// with Ω = Ω₀·C₊·C₋ and δ = 2π(Δ − c − line position), clipped to [0, 1].
///
/// The Fock cutoffs are fixed at construction so the model is a smooth
/// function of the thermal means. For large cutoffs the squared couplings of
/// each mode, and then their products, are spread linearly onto uniform
/// grids in Ω²; this preserves the weight and ⟨Ω²⟩ of every line exactly and
/// is exact in the weak-excitation limit.
#[derive(Debug, Clone)]
pub struct SpectrumModel {
    pub eta: f64,
    pub nu_plus_hz: f64,
    pub nu_minus_hz: f64,
    /// s
    pub probe_time: f64,
    pub lines: Vec<Line>,
    cutoff_plus: usize,
    cutoff_minus: usize,
    prepared: Vec<PreparedLine>,
}

impl SpectrumModel {
    pub fn new(
        eta: f64,
        nu_plus_hz: f64,
        nu_minus_hz: f64,
        probe_time: f64,
        lines: Vec<Line>,
        cutoff_plus: usize,
        cutoff_minus: usize,
    ) -> Result<Self> {
        if lines.is_empty() {
            return Err(Error::invalid("spectrum.lines", "at least one line required"));
        }
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid("spectrum.eta", "must be non-negative"));
        }
        if !(probe_time > 0.0) {
            return Err(Error::invalid("spectrum.probe_time", "must be positive"));
        }
        let cutoff_plus = cutoff_plus.max(MIN_CUTOFF);
        let cutoff_minus = cutoff_minus.max(MIN_CUTOFF);
        let exact = (cutoff_plus + 1) * (cutoff_minus + 1) <= EXACT_PAIR_LIMIT;
        let prepared = lines
            .iter()
            .map(|&line| {
                let (dp, dm) = line.phonon_change();
                let c_plus_sq = squared_table(eta, dp, cutoff_plus);
                let c_minus_sq = squared_table(eta, dm, cutoff_minus);
                let kind = if exact {
                    LineKind::Exact { c_plus_sq, c_minus_sq }
                } else {
                    let plus = ModeGrid::new(&c_plus_sq);
                    let minus = ModeGrid::new(&c_minus_sq);
                    let max = plus.nodes_sq[MODE_NODES - 1] * minus.nodes_sq[MODE_NODES - 1];
                    let step = max / (PRODUCT_NODES - 1) as f64;
                    let mut product = Vec::with_capacity(MODE_NODES * MODE_NODES);
                    for &a in &plus.nodes_sq {
                        for &b in &minus.nodes_sq {
                            product.push(split(a * b, step, PRODUCT_NODES));
                        }
                    }
                    let nodes_sq = (0..PRODUCT_NODES).map(|i| i as f64 * step).collect();
                    LineKind::Binned { plus, minus, product, nodes_sq }
                };
                PreparedLine {
                    position_hz: line.position_hz(nu_plus_hz, nu_minus_hz),
                    kind,
                }
            })
            .collect();
        Ok(SpectrumModel {
            eta,
            nu_plus_hz,
            nu_minus_hz,
            probe_time,
            lines,
            cutoff_plus,
            cutoff_minus,
            prepared,
        })
    }

    /// Cutoffs large enough for any state with means up to the given values.
    pub fn with_bounds(
        eta: f64,
        nu_plus_hz: f64,
        nu_minus_hz: f64,
        probe_time: f64,
        lines: Vec<Line>,
        max_state: ThermalState,
    ) -> Result<Self> {
        SpectrumModel::new(
            eta,
            nu_plus_hz,
            nu_minus_hz,
            probe_time,
            lines,
            adaptive_cutoff(max_state.n_plus_bar),
            adaptive_cutoff(max_state.n_minus_bar),
        )
    }

    pub fn cutoffs(&self) -> (usize, usize) {
        (self.cutoff_plus, self.cutoff_minus)
    }

    /// Per line, the distribution of Ω² as (Ω²/Ω₀², weight) pairs.
    fn distributions(&self, state: &ThermalState) -> Result<Vec<Vec<(f64, f64)>>> {
        state.validate()?;
        let pp = thermal_weights(state.n_plus_bar, self.cutoff_plus)?;
        let pm = thermal_weights(state.n_minus_bar, self.cutoff_minus)?;
        let mut wp = vec![0.0; MODE_NODES];
        let mut wm = vec![0.0; MODE_NODES];
        let mut wprod = vec![0.0; PRODUCT_NODES];
        Ok(self
            .prepared
            .iter()
            .map(|pl| match &pl.kind {
                LineKind::Exact { c_plus_sq, c_minus_sq } => {
                    let mut out = Vec::with_capacity(pp.len() * pm.len());
                    for (a, &p1) in c_plus_sq.iter().zip(&pp) {
                        for (b, &p2) in c_minus_sq.iter().zip(&pm) {
                            let w = p1 * p2;
                            let c = a * b;
                            if w > NEGLIGIBLE_WEIGHT && c > 0.0 {
                                out.push((c, w));
                            }
                        }
                    }
                    out
                }
                LineKind::Binned { plus, minus, product, nodes_sq } => {
                    plus.node_weights(&pp, &mut wp);
                    minus.node_weights(&pm, &mut wm);
                    wprod.iter_mut().for_each(|w| *w = 0.0);
                    for (i, &a) in wp.iter().enumerate() {
                        if a == 0.0 {
                            continue;
                        }
                        let row = &product[i * MODE_NODES..(i + 1) * MODE_NODES];
                        for (s, &b) in row.iter().zip(&wm) {
                            let w = a * b;
                            wprod[s.lo as usize] += w * (1.0 - s.hi_frac);
                            wprod[s.lo as usize + 1] += w * s.hi_frac;
                        }
                    }
                    nodes_sq
                        .iter()
                        .zip(&wprod)
                        .filter(|(c, w)| **w > NEGLIGIBLE_WEIGHT && **c > 0.0)
                        .map(|(&c, &w)| (c, w))
                        .collect()
                }
            })
            .collect())
    }

    /// Excitation probability at each detuning (Hz from the carrier).
    pub fn evaluate(
        &self,
        detuning_hz: &[f64],
        omega0: f64,
        state: &ThermalState,
        background: f64,
        centre_hz: f64,
    ) -> Result<Vec<f64>> {
        if !(omega0 >= 0.0 && omega0.is_finite()) {
            return Err(Error::invalid("spectrum.omega0", "must be non-negative"));
        }
        let dists = self.distributions(state)?;
        let t = self.probe_time;
        let w0sq = omega0 * omega0;
        Ok(detuning_hz
            .iter()
            .map(|&d| {
                let mut p = 0.0;
                for (pl, dist) in self.prepared.iter().zip(&dists) {
                    let delta = std::f64::consts::TAU * (d - centre_hz - pl.position_hz);
                    let dsq = delta * delta;
                    for &(c, w) in dist {
                        let osq = w0sq * c;
                        if osq == 0.0 {
                            continue;
                        }
                        let gen_sq = osq + dsq;
                        let s = (0.5 * gen_sq.sqrt() * t).sin();
                        p += w * osq / gen_sq * s * s;
                    }
                }
                (p + background).clamp(0.0, 1.0)
            })
            .collect())
    }

    /// Noise-free scan with a uniform shot count.
    pub fn synthesize(
        &self,
        detuning_hz: Vec<f64>,
        omega0: f64,
        state: &ThermalState,
        background: f64,
        centre_hz: f64,
        shots: u32,
    ) -> Result<SpectrumScan> {
        let p = self.evaluate(&detuning_hz, omega0, state, background, centre_hz)?;
        let n = p.len();
        SpectrumScan::new(detuning_hz, p, vec![shots; n])
    }
}

/// Resonant Rabi flopping on one line, averaged over a two-mode thermal state:
///
/// ```text
/// P(t) = Σ p(n₊)p(n₋) · ½(1 − e^{−t/τ} cos Ω_{n₊n₋} t)
/// ```
///
/// Pairs whose target Fock state would be negative contribute nothing.
#[derive(Debug, Clone)]
pub struct FlopModel {
    pub eta: f64,
    pub line: Line,
    /// τ_e, s; `f64::INFINITY` for no decay.
    pub decay_time: f64,
    /// Fixed (cyclotron, magnetron) cutoffs, or adaptive when `None`.
    pub cutoffs: Option<(usize, usize)>,
}

impl FlopModel {
    pub fn new(eta: f64, line: Line, decay_time: f64) -> Self {
        FlopModel {
            eta,
            line,
            decay_time,
            cutoffs: None,
        }
    }

    pub fn probabilities(&self, times: &[f64], omega0: f64, state: &ThermalState) -> Result<Vec<f64>> {
        state.validate()?;
        if !(self.decay_time > 0.0) {
            return Err(Error::invalid("flop.decay_time", "must be positive"));
        }
        if times.iter().any(|&t| !(t >= 0.0)) {
            return Err(Error::invalid("flop.time", "must be non-negative"));
        }
        let (np, nm) = self
            .cutoffs
            .unwrap_or((adaptive_cutoff(state.n_plus_bar), adaptive_cutoff(state.n_minus_bar)));
        let (np, nm) = (np.max(MIN_CUTOFF), nm.max(MIN_CUTOFF));
        let pp = thermal_weights(state.n_plus_bar, np)?;
        let pm = thermal_weights(state.n_minus_bar, nm)?;
        let (dp, dm) = self.line.phonon_change();
        let cp = CouplingTable::new(self.eta, dp, np);
        let cm = CouplingTable::new(self.eta, dm, nm);
        let mut terms = Vec::new();
        for (i, &a) in pp.iter().enumerate() {
            if i as i64 + (dp as i64) < 0 {
                continue;
            }
            for (j, &b) in pm.iter().enumerate() {
                if j as i64 + (dm as i64) < 0 {
                    continue;
                }
                let w = a * b;
                if w > NEGLIGIBLE_WEIGHT {
                    terms.push((omega0 * (cp.get(i) * cm.get(j)).abs(), w));
                }
            }
        }
        Ok(times
            .iter()
            .map(|&t| {
                let decay = if self.decay_time.is_finite() { (-t / self.decay_time).exp() } else { 1.0 };
                let s: f64 = terms.iter().map(|&(om, w)| w * 0.5 * (1.0 - decay * (om * t).cos())).sum();
                s.clamp(0.0, 1.0)
            })
            .collect())
    }
}

/// Single evaluation of the thermal two-mode Rabi formula with adaptive
/// cutoffs.
pub fn two_mode_rabi(t: f64, omega0: f64, state: &ThermalState, line: Line, decay_time: f64, eta: f64) -> Result<f64> {
    Ok(FlopModel::new(eta, line, decay_time).probabilities(&[t], omega0, state)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::spectroscopy::sideband_coupling;
    use approx::assert_relative_eq;
    use std::f64::consts::TAU;

    const ETA: f64 = 0.1226;

    fn brute_force(
        d: f64,
        omega0: f64,
        t: f64,
        state: &ThermalState,
        lines: &[Line],
        nu: (f64, f64),
        cut: (usize, usize),
    ) -> f64 {
        let pp = thermal_weights(state.n_plus_bar, cut.0).unwrap();
        let pm = thermal_weights(state.n_minus_bar, cut.1).unwrap();
        let mut s = 0.0;
        for l in lines {
            let (dp, dm) = l.phonon_change();
            let delta = TAU * (d - l.position_hz(nu.0, nu.1));
            for (i, a) in pp.iter().enumerate() {
                for (j, b) in pm.iter().enumerate() {
                    let om = omega0 * sideband_coupling(i, dp, ETA) * sideband_coupling(j, dm, ETA);
                    let g = (om * om + delta * delta).sqrt();
                    if g > 0.0 {
                        s += a * b * om * om / (g * g) * (0.5 * g * t).sin().powi(2);
                    }
                }
            }
        }
        s
    }

    #[test]
    fn zero_rabi_gives_background() {
        let m = SpectrumModel::new(ETA, 677e3, 52e3, 20e-6, Line::single_mode_set(1, 1), 20, 20).unwrap();
        let s = ThermalState::new(1.0, 1.0).unwrap();
        let p = m.evaluate(&[-1e5, 0.0, 3e5], 0.0, &s, DEFAULT_BACKGROUND, 0.0).unwrap();
        assert!(p.iter().all(|&v| v == DEFAULT_BACKGROUND));
    }

    #[test]
    fn exact_path_matches_brute_force() {
        let lines = Line::single_mode_set(2, 2);
        let m = SpectrumModel::new(ETA, 677e3, 52e3, 35e-6, lines.clone(), 25, 35).unwrap();
        let s = ThermalState::new(0.35, 1.7).unwrap();
        let om = TAU * 14.13e3;
        let axis: Vec<f64> = (-40..=40).map(|i| i as f64 * 2.5e3).collect();
        let p = m.evaluate(&axis, om, &s, 0.0, 0.0).unwrap();
        for (d, v) in axis.iter().zip(&p) {
            let b = brute_force(*d, om, 35e-6, &s, &lines, (677e3, 52e3), (25, 35));
            assert!((v - b).abs() < 1e-12, "{d}: {v} vs {b}");
        }
    }

    #[test]
    fn binned_path_close_to_brute_force() {
        let lines = vec![Line::CARRIER, Line::new(1, 0), Line::new(0, 1), Line::new(0, -2)];
        let s = ThermalState::new(20.0, 30.0).unwrap();
        let cut = (adaptive_cutoff(20.0), adaptive_cutoff(30.0));
        let m = SpectrumModel::new(ETA, 677e3, 52e3, 19e-6, lines.clone(), cut.0, cut.1).unwrap();
        let om = TAU * 26e3;
        let axis: Vec<f64> = (-30..=30).map(|i| i as f64 * 4e3).chain([677e3, 690e3]).collect();
        let p = m.evaluate(&axis, om, &s, 0.0, 0.0).unwrap();
        let mut worst: f64 = 0.0;
        for (d, v) in axis.iter().zip(&p) {
            let b = brute_force(*d, om, 19e-6, &s, &lines, (677e3, 52e3), cut);
            worst = worst.max((v - b).abs());
        }
        assert!(worst < 2e-3, "worst deviation {worst}");
    }

    #[test]
    fn probabilities_in_unit_interval() {
        let s = ThermalState::new(96.0, 136.0).unwrap();
        let m = SpectrumModel::with_bounds(ETA, 677e3, 52e3, 40e-6, Line::single_mode_set(3, 4), s).unwrap();
        let axis: Vec<f64> = (-300..=300).map(|i| i as f64 * 5e3).collect();
        let p = m.evaluate(&axis, TAU * 60e3, &s, 0.5, 0.0).unwrap();
        assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn truncation_checked() {
        let m = SpectrumModel::new(ETA, 677e3, 52e3, 20e-6, vec![Line::CARRIER], 15, 15).unwrap();
        let s = ThermalState::new(50.0, 0.0).unwrap();
        assert!(matches!(
            m.evaluate(&[0.0], 1e5, &s, 0.0, 0.0),
            Err(Error::TruncationInsufficient { .. })
        ));
    }

    #[test]
    fn flop_limits() {
        let s0 = ThermalState::new(0.0, 0.0).unwrap();
        let om = TAU * 20e3;
        assert_eq!(two_mode_rabi(0.0, om, &s0, Line::CARRIER, f64::INFINITY, ETA).unwrap(), 0.0);
        let t = 13e-6;
        let om00 = om * sideband_coupling(0, 0, ETA).powi(2);
        let expected = 0.5 * (1.0 - (om00 * t).cos());
        assert_relative_eq!(
            two_mode_rabi(t, om, &s0, Line::CARRIER, f64::INFINITY, ETA).unwrap(),
            expected,
            max_relative = 1e-12
        );
        // Red sideband of the ground state is dark.
        assert_eq!(two_mode_rabi(t, om, &s0, Line::new(-1, 0), f64::INFINITY, ETA).unwrap(), 0.0);
    }

    #[test]
    fn decay_damps_to_half() {
        let s = ThermalState::new(0.5, 0.5).unwrap();
        let p = two_mode_rabi(1.0, TAU * 20e3, &s, Line::new(1, 0), 1e-4, ETA).unwrap();
        // Only pairs that can make the transition contribute.
        assert_relative_eq!(p, 0.5, epsilon = 1e-3);
    }

    #[test]
    fn sideband_asymmetry_weak_pulse() {
        // Red/blue peak ratio → n̄/(n̄+1) for small Ω₀t.
        let nbar = 2.0;
        let s = ThermalState::new(nbar, 0.0).unwrap();
        let om = TAU * 1e3;
        let t = 5e-6;
        let red = two_mode_rabi(t, om, &s, Line::new(-1, 0), f64::INFINITY, 0.05).unwrap();
        let blue = two_mode_rabi(t, om, &s, Line::new(1, 0), f64::INFINITY, 0.05).unwrap();
        assert_relative_eq!(red / blue, nbar / (nbar + 1.0), max_relative = 2e-2);
    }

    #[test]
    fn binomial_noise_reproducible() {
        let m = SpectrumModel::new(ETA, 677e3, 52e3, 20e-6, vec![Line::CARRIER], 15, 15).unwrap();
        let s = ThermalState::new(0.3, 0.3).unwrap();
        let scan = m.synthesize(vec![-1e3, 0.0, 1e3], TAU * 14e3, &s, 0.04, 0.0, 150).unwrap();
        let a = scan.with_binomial_noise(150, &mut stream(3)).unwrap();
        let b = scan.with_binomial_noise(150, &mut stream(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.excitation.iter().all(|p| (p * 150.0).fract() < 1e-9 || (p * 150.0).fract() > 1.0 - 1e-9));
    }
}
