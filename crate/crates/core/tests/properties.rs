use std::f64::consts::TAU;

use penning_core::analytic::{doppler_limit_magnetron, simultaneous_cooling_window, DopplerLimitInputs};
use penning_core::constants::{CA_COOLING_LINEWIDTH, CA_COOLING_WAVELENGTH};
use penning_core::laser::{sample_recoil_kick, scattering_rate};
use penning_core::rng::stream;
use penning_core::sbc::{format_sequence, parse_sequence, simulate_sequence, CoolingPulse, RateModelParams};
use penning_core::spectroscopy::{Line, Mode, SpectrumModel, ThermalState};
use penning_core::{IonSpecies, LaserConfig, PhaseState};
use proptest::prelude::*;

fn beam(power: f64, waist: f64, offset: f64) -> LaserConfig {
    LaserConfig::calcium_397(power, waist, offset, CA_COOLING_LINEWIDTH / 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scattering_rate_is_bounded_by_half_linewidth(
        power in 1e-9..1e-2f64,
        waist in 10e-6..500e-6f64,
        offset in -500e-6..500e-6f64,
        y in -1e-3..1e-3f64,
        vx in -100.0..100.0f64,
    ) {
        let state = PhaseState { t: 0.0, x: 0.0, y, vx, vy: 0.0 };
        let r = scattering_rate(&state, &beam(power, waist, offset));
        prop_assert!(r >= 0.0);
        prop_assert!(r <= 0.5 * CA_COOLING_LINEWIDTH);
    }

    #[test]
    fn absorption_kick_is_along_the_beam(n in 0u64..50, seed in any::<u64>()) {
        let ion = IonSpecies::calcium40();
        let laser = beam(1e-6, 100e-6, 50e-6);
        let (dvx, dvy) = sample_recoil_kick(n, &laser, &ion, &mut stream(seed));
        let unit = penning_core::constants::HBAR * TAU / CA_COOLING_WAVELENGTH / ion.mass;
        // Emission adds at most one recoil per photon in any direction.
        prop_assert!((dvx - n as f64 * unit).abs() <= n as f64 * unit * (1.0 + 1e-12));
        prop_assert!(dvy.abs() <= n as f64 * unit * (1.0 + 1e-12));
    }

    #[test]
    fn magnetron_limit_exists_exactly_below_the_boundary(
        gradient in 1e-6..200e-6f64,
        nu_minus in 1e3..150e3f64,
        detuning_frac in 0.05..3.0f64,
    ) {
        let delta = detuning_frac * CA_COOLING_LINEWIDTH;
        let k = TAU / CA_COOLING_WAVELENGTH;
        let wm = TAU * nu_minus;
        let p = DopplerLimitInputs::new(gradient, delta, CA_COOLING_LINEWIDTH, k, TAU * 700e3, wm);
        let boundary = simultaneous_cooling_window(gradient, delta, CA_COOLING_LINEWIDTH, k).unwrap();
        prop_assume!((wm / boundary - 1.0).abs() > 1e-9);
        prop_assert_eq!(doppler_limit_magnetron(&p).unwrap().is_stable(), wm < boundary);
    }

    #[test]
    fn sideband_cooling_conserves_probability(
        n_plus in 0.0..5.0f64,
        n_minus in 0.0..5.0f64,
        order in 1u32..3,
        ms in 0.1..3.0f64,
        heating in 0.0..1000.0f64,
    ) {
        let params = RateModelParams { cutoff: 200, heating_rate_minus: heating, ..RateModelParams::default() };
        let seq = [
            CoolingPulse::new(Mode::Cyclotron, order, ms * 1e-3, 1.0).unwrap(),
            CoolingPulse::new(Mode::Magnetron, order, ms * 1e-3, 0.5).unwrap(),
        ];
        let r = simulate_sequence(&seq, &ThermalState::new(n_plus, n_minus).unwrap(), &params, 0.12).unwrap();
        // The ladder reflects at the cutoff; `leaked` only measures the flux
        // that reached it.
        prop_assert!(r.leaked.0 >= 0.0 && r.leaked.1 >= 0.0);
        let sp: f64 = r.final_plus.iter().sum();
        let sm: f64 = r.final_minus.iter().sum();
        prop_assert!((sp - 1.0).abs() < 1e-9, "{}", sp);
        prop_assert!((sm - 1.0).abs() < 1e-9, "{}", sm);
        prop_assert!(r.final_plus.iter().chain(&r.final_minus).all(|&p| p >= -1e-15));
    }

    #[test]
    fn spectrum_is_a_probability(
        n_plus in 0.0..3.0f64,
        n_minus in 0.0..3.0f64,
        rabi_khz in 1.0..40.0f64,
        background in 0.0..0.2f64,
        detuning in -800e3..800e3f64,
    ) {
        let m = SpectrumModel::new(0.12, 677e3, 52e3, 100e-6, Line::single_mode_set(1, 1), 25, 25).unwrap();
        let s = ThermalState::new(n_plus, n_minus).unwrap();
        let p = m.evaluate(&[detuning], TAU * rabi_khz * 1e3, &s, background, 0.0).unwrap()[0];
        prop_assert!((background..=1.0).contains(&p), "{}", p);
    }

    #[test]
    fn sequence_text_round_trips(
        pulses in prop::collection::vec((any::<bool>(), 1u32..5, 1u32..200, 1u32..=100), 1..12)
    ) {
        let seq: Vec<CoolingPulse> = pulses
            .iter()
            .map(|&(cyc, order, tenth_ms, pct)| {
                let mode = if cyc { Mode::Cyclotron } else { Mode::Magnetron };
                CoolingPulse::new(mode, order, tenth_ms as f64 * 1e-4, pct as f64 / 100.0).unwrap()
            })
            .collect();
        let back = parse_sequence(&format_sequence(&seq)).unwrap();
        prop_assert_eq!(back.len(), seq.len());
        for (a, b) in seq.iter().zip(&back) {
            prop_assert_eq!(a.mode, b.mode);
            prop_assert_eq!(a.order, b.order);
            prop_assert!((a.duration - b.duration).abs() < 1e-12);
            prop_assert!((a.intensity_fraction - b.intensity_fraction).abs() < 1e-12);
        }
    }
}
