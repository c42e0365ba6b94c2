use std::f64::consts::TAU;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use penning_core::constants::CA_COOLING_LINEWIDTH;
use penning_core::dynamics::{reference_initial_state, simulate_trajectory, AxializationConfig, RadialDynamics, SimConfig};
use penning_core::laser::scattering_rate;
use penning_core::sbc::{simulate_sequence, table1_sequence, RateModelParams};
use penning_core::spectroscopy::{lamb_dicke, CouplingTable, Line, SpectrumModel, ThermalState};
use penning_core::{IonSpecies, LaserConfig, TrapConfig};

fn trap() -> TrapConfig {
    TrapConfig::from_frequencies_hz(729e3, 265e3, 0.01, 0.01, IonSpecies::calcium40()).unwrap()
}

fn dynamics(c: &mut Criterion) {
    let trap = trap();
    let f = trap.frequencies().unwrap();
    let ax = AxializationConfig::resonant(1.0, &f);
    let dynamics = RadialDynamics::new(&trap, Some(&ax)).unwrap();
    let state = reference_initial_state();
    c.bench_function("rk8 step with drive", |b| b.iter(|| dynamics.step(black_box(&state), 20e-9).unwrap()));

    let laser = LaserConfig::calcium_397(8e-6, 100e-6, 130e-6, CA_COOLING_LINEWIDTH / 2.0);
    c.bench_function("scattering rate", |b| b.iter(|| scattering_rate(black_box(&state), &laser)));

    let mut cfg = SimConfig::new(trap);
    cfg.laser = Some(laser);
    cfg.axialization = Some(ax);
    cfg.t_end = 1e-3;
    cfg.averaging_window = (0.5e-3, 1e-3);
    let mut group = c.benchmark_group("trajectory");
    group.sample_size(10);
    group.bench_function("1 ms cooled and driven", |b| b.iter(|| simulate_trajectory(black_box(&cfg)).unwrap()));
    group.finish();
}

fn spectroscopy(c: &mut Criterion) {
    let f = trap().frequencies().unwrap();
    let eta = lamb_dicke(&f, &IonSpecies::calcium40(), 729e-9).unwrap();
    c.bench_function("coupling table to n = 2000", |b| b.iter(|| CouplingTable::new(black_box(eta), 1, 2000)));

    let axis: Vec<f64> = (-300..=300).map(|i| i as f64 * 2.5e3).collect();
    let cold = SpectrumModel::new(eta, f.nu_plus_hz(), f.nu_minus_hz(), 280e-6, Line::single_mode_set(1, 2), 25, 35).unwrap();
    let s = ThermalState::new(0.35, 1.7).unwrap();
    c.bench_function("cold spectrum, exact pairs", |b| {
        b.iter(|| cold.evaluate(black_box(&axis), TAU * 14.13e3, &s, 0.04, 0.0).unwrap())
    });
    let hot = SpectrumModel::with_bounds(
        eta,
        f.nu_plus_hz(),
        f.nu_minus_hz(),
        50e-6,
        Line::single_mode_set(3, 4),
        ThermalState::new(290.0, 410.0).unwrap(),
    )
    .unwrap();
    let s = ThermalState::new(96.0, 136.0).unwrap();
    c.bench_function("Doppler-cooled spectrum, binned", |b| {
        b.iter(|| hot.evaluate(black_box(&axis), TAU * 26e3, &s, 0.04, 0.0).unwrap())
    });
}

fn sideband_cooling(c: &mut Criterion) {
    let f = trap().frequencies().unwrap();
    let eta = lamb_dicke(&f, &IonSpecies::calcium40(), 729e-9).unwrap();
    let seq = table1_sequence();
    let initial = ThermalState::new(96.0, 136.0).unwrap();
    let params = RateModelParams::default();
    let mut group = c.benchmark_group("sideband cooling");
    group.sample_size(10);
    group.bench_function("68 ms table sequence", |b| {
        b.iter(|| simulate_sequence(black_box(&seq), &initial, &params, eta).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dynamics, spectroscopy, sideband_cooling);
criterion_main!(benches);
