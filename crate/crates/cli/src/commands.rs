use std::f64::consts::TAU;
use std::fs;

use penning_core::analytic::{
    doppler_limit_cyclotron, doppler_limit_magnetron, limit_curve, simultaneous_cooling_window, CoolingLimit,
    DopplerLimitInputs,
};
use penning_core::dynamics::{conservation_report, equilibrium_phonons, simulate_trajectory, sweep, SweepAxis, SweepOutcome};
use penning_core::fit::{FitOptions, FitResult};
use penning_core::sbc::{parse_sequence, population_above, simulate_sequence, table1_sequence, total_duration};
use penning_core::spectroscopy::{
    adaptive_cutoff, comb_model, first_coupling_zero, fit_flops, fit_spectrum, gaussian_comb_thermometry, lamb_dicke,
    CombParams, FlopData, FlopFitSetup, FlopModel, Line, Mode, SpectrumFitSetup, SpectrumModel, SpectrumScan,
    ThermalState, FLOP_PARAMETERS, SPECTRUM_PARAMETERS,
};
use penning_core::Error as CoreError;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Artifacts, Cell};
use crate::svg::{line_plot, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sweep,
    Limits,
    Fit,
    Sbc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Limits => "limits",
            Command::Fit => "fit",
            Command::Sbc => "sbc",
        }
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: std::path::PathBuf,
    /// One human-readable line.
    pub summary: String,
}

/// Validates `cfg` and runs `command` on a pool of `jobs` workers
/// (available parallelism when `None`).
pub fn run(command: Command, cfg: &RunConfig, jobs: Option<usize>) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Validation {
                key: "--jobs".into(),
                message: "must be at least 1".into(),
            });
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Validation {
        key: "--jobs".into(),
        message: e.to_string(),
    })?;
    let mut out = Artifacts::create(cfg)?;
    let summary = pool.install(|| match command {
        Command::Simulate => simulate(cfg, &mut out),
        Command::Sweep => run_sweep(cfg, &mut out),
        Command::Limits => limits(cfg, &mut out),
        Command::Fit => fit(cfg, &mut out),
        Command::Sbc => sbc(cfg, &mut out),
    })?;
    let manifest = out.finish(command.name())?;
    Ok(Outcome { manifest, summary })
}

fn simulate(cfg: &RunConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let sim = cfg.sim_config()?;
    let rec = simulate_trajectory(&sim)?;
    let rows = (0..rec.len()).map(|i| {
        vec![
            Cell::F(rec.times[i]),
            Cell::F(rec.r_plus_sq[i]),
            Cell::F(rec.r_minus_sq[i]),
            Cell::F(rec.n_plus[i]),
            Cell::F(rec.n_minus[i]),
            Cell::U(rec.photons[i]),
        ]
    });
    out.csv(
        "trajectory.csv",
        &["t_s", "r_plus_sq_m2", "r_minus_sq_m2", "n_plus", "n_minus", "photons"],
        rows,
    )?;
    let photons: u64 = rec.photons.iter().sum();
    let mut summary = json!({
        "command": "simulate",
        "samples": rec.len(),
        "photons": photons,
        "force_offset_m": rec.force_offset,
        "final_state": rec.final_state,
    });
    let line = if sim.laser.is_some() {
        let eq = equilibrium_phonons(&rec, sim.averaging_window)?;
        summary["equilibrium"] = json!({ "n_plus": eq.n_plus, "n_minus": eq.n_minus, "window_s": [sim.averaging_window.0, sim.averaging_window.1] });
        format!("equilibrium n+ = {:.3}, n- = {:.3}", eq.n_plus, eq.n_minus)
    } else {
        let r = conservation_report(&rec, &sim.trap)?;
        summary["conservation"] = json!({
            "energy_drift": r.energy_drift,
            "r_plus_sq_drift": r.r_plus_sq_drift,
            "r_minus_sq_drift": r.r_minus_sq_drift,
        });
        format!("laser off: relative energy drift {:.3e}", r.energy_drift)
    };
    out.json("summary.json", &summary)?;
    if cfg.output.svg {
        let series = [
            Series::new("cyclotron", rec.times.iter().zip(&rec.n_plus).map(|(t, n)| (t * 1e3, *n)).collect()),
            Series::new("magnetron", rec.times.iter().zip(&rec.n_minus).map(|(t, n)| (t * 1e3, *n)).collect()),
        ];
        out.svg("trajectory.svg", line_plot("Mean phonon numbers", "t (ms)", "n", &series, true))?;
    }
    Ok(line)
}

fn mean_and_sem(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn run_sweep(cfg: &RunConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let template = cfg.sim_config()?;
    let axis = SweepAxis::from_key(&cfg.sweep.axis).expect("validated");
    let rows = sweep(&template, axis, &cfg.sweep.values, cfg.sweep.replicas as usize)?;
    let csv_rows = rows.iter().map(|r| {
        let (status, np, nm, t, msg) = match &r.outcome {
            SweepOutcome::Equilibrium(n) => ("ok", Cell::F(n.n_plus), Cell::F(n.n_minus), Cell::Empty, String::new()),
            SweepOutcome::Diverged { t } => ("diverged", Cell::Empty, Cell::Empty, Cell::F(*t), String::new()),
            SweepOutcome::Failed(m) => ("failed", Cell::Empty, Cell::Empty, Cell::Empty, m.clone()),
        };
        vec![
            Cell::U(r.value_index as u64),
            Cell::F(r.value),
            Cell::U(r.replica as u64),
            Cell::U(r.seed),
            Cell::S(status.into()),
            np,
            nm,
            t,
            Cell::S(msg),
        ]
    });
    out.csv(
        "sweep.csv",
        &["value_index", "value", "replica", "seed", "status", "n_plus", "n_minus", "diverged_at_s", "message"],
        csv_rows,
    )?;
    let mut summary_rows = Vec::new();
    let mut means = Vec::new();
    for (vi, &value) in cfg.sweep.values.iter().enumerate() {
        let ok: Vec<_> = rows
            .iter()
            .filter(|r| r.value_index == vi)
            .filter_map(|r| match &r.outcome {
                SweepOutcome::Equilibrium(n) => Some(*n),
                _ => None,
            })
            .collect();
        let (mp, sp) = mean_and_sem(&ok.iter().map(|n| n.n_plus).collect::<Vec<_>>());
        let (mm, sm) = mean_and_sem(&ok.iter().map(|n| n.n_minus).collect::<Vec<_>>());
        means.push((value, mp, mm));
        summary_rows.push(vec![
            Cell::F(value),
            Cell::U(cfg.sweep.replicas),
            Cell::U(ok.len() as u64),
            Cell::F(mp),
            Cell::F(sp),
            Cell::F(mm),
            Cell::F(sm),
        ]);
    }
    out.csv(
        "sweep_summary.csv",
        &["value", "replicas", "equilibrated", "n_plus_mean", "n_plus_sem", "n_minus_mean", "n_minus_sem"],
        summary_rows,
    )?;
    if cfg.output.svg {
        let series = [
            Series::new("cyclotron", means.iter().map(|m| (m.0, m.1)).collect()),
            Series::new("magnetron", means.iter().map(|m| (m.0, m.2)).collect()),
        ];
        out.svg(
            "sweep.svg",
            line_plot("Equilibrium phonon numbers", &cfg.sweep.axis, "n", &series, true),
        )?;
    }
    let diverged = rows.iter().filter(|r| matches!(r.outcome, SweepOutcome::Diverged { .. })).count();
    Ok(format!(
        "{} trajectories over {} values of {}, {} diverged",
        rows.len(),
        cfg.sweep.values.len(),
        cfg.sweep.axis,
        diverged
    ))
}

fn limit_value(l: CoolingLimit, correction: f64) -> f64 {
    l.value().map_or(f64::INFINITY, |v| v * correction)
}

fn limits(cfg: &RunConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let trap = cfg.trap_config()?;
    let freqs = trap.frequencies()?;
    let beam = cfg.beam();
    let mut inputs = DopplerLimitInputs::from_config(&beam, &freqs)?;
    let correction = if cfg.limits.axial_beam_correction { 1.3 } else { 1.0 };
    if cfg.limits.axial_beam_correction {
        inputs = inputs.with_axial_beam_correction();
    }
    let np = doppler_limit_cyclotron(&inputs)?;
    let nm = doppler_limit_magnetron(&inputs)?;
    let boundary = simultaneous_cooling_window(inputs.gradient, inputs.detuning, inputs.linewidth, inputs.wavenumber)?;
    let n = cfg.limits.points as usize;
    let (lo, hi) = (cfg.limits.nu_minus_min, cfg.limits.nu_minus_max.min(0.5 * freqs.omega_c / TAU * (1.0 - 1e-9)));
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let curve = limit_curve(freqs.omega_c / TAU, &grid, inputs.gradient, inputs.detuning, inputs.linewidth, inputs.wavenumber)?;
    out.csv(
        "limits.csv",
        &["nu_minus_hz", "nbar_plus", "nbar_minus", "stable_flag"],
        curve.iter().map(|p| {
            vec![
                Cell::F(p.nu_minus_hz),
                Cell::F(limit_value(p.n_plus, correction)),
                Cell::F(limit_value(p.n_minus, correction)),
                Cell::U(p.stable() as u64),
            ]
        }),
    )?;
    let show = |l: CoolingLimit| l.value().map_or(json!("unstable"), |v| json!(v));
    out.json(
        "limits.json",
        &json!({
            "command": "limits",
            "gradient_m": inputs.gradient,
            "nu_plus_hz": freqs.nu_plus_hz(),
            "nu_minus_hz": freqs.nu_minus_hz(),
            "n_plus": show(np),
            "n_minus": show(nm),
            "boundary_nu_hz": boundary / TAU,
            "both_cool": freqs.omega_minus < boundary && boundary < freqs.omega_plus,
        }),
    )?;
    if cfg.output.svg {
        let series = [
            Series::new("cyclotron", curve.iter().map(|p| (p.nu_minus_hz / 1e3, limit_value(p.n_plus, correction))).collect()),
            Series::new("magnetron", curve.iter().map(|p| (p.nu_minus_hz / 1e3, limit_value(p.n_minus, correction))).collect()),
        ];
        out.svg("limits.svg", line_plot("Doppler limits", "magnetron frequency (kHz)", "n", &series, true))?;
    }
    let fmt = |l: CoolingLimit| l.value().map_or("unstable".to_string(), |v| format!("{v:.3}"));
    Ok(format!("Doppler limits n+ = {}, n- = {}", fmt(np), fmt(nm)))
}

/// Reads a three-column CSV (x, excitation, shots), skipping `#` lines.
fn read_scan(cfg: &RunConfig) -> Result<(Vec<f64>, Vec<f64>, Vec<u32>), CliError> {
    if cfg.fit.data.is_empty() {
        return Err(CliError::Validation {
            key: "fit.data".into(),
            message: "no data file given".into(),
        });
    }
    let path = cfg.resolve(&cfg.fit.data);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let (mut x, mut p, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(&path, e))?;
        let bad = |what: &str| CliError::io(&path, format!("data row {}: {what}", i + 1));
        if rec.len() < 3 {
            return Err(bad("expected three columns"));
        }
        x.push(rec[0].parse::<f64>().map_err(|_| bad("bad x value"))?);
        p.push(rec[1].parse::<f64>().map_err(|_| bad("bad excitation"))?);
        s.push(rec[2].parse::<u32>().map_err(|_| bad("bad shot count"))?);
    }
    Ok((x, p, s))
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        starts: cfg.fit.starts as usize,
        max_evaluations: cfg.fit.max_evaluations as usize,
        ..FitOptions::default()
    }
}

fn parameter_json(fit: &FitResult, free: &[bool]) -> serde_json::Value {
    json!(fit
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| json!({ "name": n, "value": fit.values[i], "sigma": fit.sigmas[i], "free": free[i] }))
        .collect::<Vec<_>>())
}

fn fit(cfg: &RunConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let trap = cfg.trap_config()?;
    let freqs = trap.frequencies()?;
    let (x, p, shots) = read_scan(cfg)?;
    let f = &cfg.fit;
    let opts = fit_options(cfg);
    let eta = lamb_dicke(&freqs, &trap.ion, f.probe_wavelength)?;
    let guess = ThermalState::new(f.n_plus, f.n_minus)?;
    let max_state = ThermalState::new(
        f.max_n_plus.unwrap_or(4.0 * f.n_plus + 5.0),
        f.max_n_minus.unwrap_or(4.0 * f.n_minus + 5.0),
    )?;
    let is_free = |name: &str| f.free.iter().any(|n| n == name);
    let (model_curve, report, line) = match f.kind.as_str() {
        "spectrum" => {
            let scan = SpectrumScan::new(x.clone(), p.clone(), shots)?;
            let lines = Line::single_mode_set(f.max_order_plus as i32, f.max_order_minus as i32);
            let model = SpectrumModel::with_bounds(eta, freqs.nu_plus_hz(), freqs.nu_minus_hz(), f.probe_time, lines, max_state)?;
            let mut setup = SpectrumFitSetup::new(guess, f.rabi_frequency, f.background, f.centre);
            for (flag, name) in setup.free.iter_mut().zip(SPECTRUM_PARAMETERS) {
                *flag = is_free(name);
            }
            let fit = fit_spectrum(&scan, &model, &setup, &opts)?;
            let v = &fit.values;
            let state = ThermalState::new(v[0], v[1])?;
            let curve = model.evaluate(&x, v[2], &state, v[3], v[4])?;
            let line = format!(
                "n+ = {:.4} ± {:.4}, n- = {:.4} ± {:.4}, Omega0/2pi = {:.4} ± {:.4} kHz",
                v[0],
                fit.sigmas[0],
                v[1],
                fit.sigmas[1],
                v[2] / TAU / 1e3,
                fit.sigmas[2] / TAU / 1e3
            );
            let report = json!({
                "kind": "spectrum",
                "eta": eta,
                "fock_cutoffs": model.cutoffs(),
                "parameters": parameter_json(&fit, &setup.free),
                "residual": fit.residual,
                "degrees_of_freedom": x.len() as i64 - setup.free.iter().filter(|f| **f).count() as i64,
                "converged": fit.converged,
                "evaluations": fit.evaluations,
                "best_start": fit.best_start,
            });
            (curve, report, line)
        }
        "flop" => {
            let data = FlopData::new(x.clone(), p.clone(), shots)?;
            let mut model = FlopModel::new(eta, cfg.flop_line(), f.decay_time.unwrap_or(f64::INFINITY));
            model.cutoffs = Some((adaptive_cutoff(max_state.n_plus_bar), adaptive_cutoff(max_state.n_minus_bar)));
            let mut setup = FlopFitSetup::new(guess, f.rabi_frequency);
            for (flag, name) in setup.free.iter_mut().zip(FLOP_PARAMETERS) {
                *flag = is_free(name);
            }
            let fit = fit_flops(&data, &model, &setup, &opts)?;
            let v = &fit.values;
            let curve = model.probabilities(&x, v[2], &ThermalState::new(v[0], v[1])?)?;
            let line = format!(
                "n+ = {:.4} ± {:.4}, n- = {:.4} ± {:.4}, Omega0/2pi = {:.4} ± {:.4} kHz",
                v[0],
                fit.sigmas[0],
                v[1],
                fit.sigmas[1],
                v[2] / TAU / 1e3,
                fit.sigmas[2] / TAU / 1e3
            );
            let report = json!({
                "kind": "flop",
                "eta": eta,
                "line": [model.line.plus, model.line.minus],
                "parameters": parameter_json(&fit, &setup.free),
                "residual": fit.residual,
                "converged": fit.converged,
                "evaluations": fit.evaluations,
                "best_start": fit.best_start,
            });
            (curve, report, line)
        }
        _ => {
            let scan = SpectrumScan::new(x.clone(), p.clone(), shots)?;
            let mode = Mode::parse(&f.comb_mode).expect("validated");
            let mode_omega = match mode {
                Mode::Cyclotron => freqs.omega_plus,
                Mode::Magnetron => freqs.omega_minus,
            };
            let spacing = mode_omega / TAU;
            let r = gaussian_comb_thermometry(&scan, spacing, mode_omega, freqs.omega_1, trap.ion.mass, f.probe_wavelength)?;
            let v = &r.fit.values;
            let curve = comb_model(
                &x,
                &CombParams {
                    amplitude: v[0],
                    sigma_hz: v[1],
                    width_hz: v[2],
                    centre_hz: v[3],
                    background: v[4],
                    spacing_hz: spacing,
                },
            );
            let report = json!({
                "kind": "comb",
                "mode": mode.label(),
                "spacing_hz": spacing,
                "parameters": parameter_json(&r.fit, &[true; 5]),
                "sigma_hz": r.sigma_hz,
                "sigma_hz_err": r.sigma_hz_err,
                "temperature_k": r.temperature,
                "nbar": r.nbar,
                "residual": r.fit.residual,
                "converged": r.fit.converged,
            });
            let line = format!("{} envelope sigma = {:.1} Hz, T = {:.3e} K, n = {:.1}", mode.label(), r.sigma_hz, r.temperature, r.nbar);
            (curve, report, line)
        }
    };
    out.json("fit.json", &report)?;
    out.csv(
        "fit_curve.csv",
        &["x", "data", "model"],
        x.iter().zip(&p).zip(&model_curve).map(|((x, d), m)| vec![Cell::F(*x), Cell::F(*d), Cell::F(*m)]),
    )?;
    if cfg.output.svg {
        let xl = if f.kind == "flop" { "pulse length (us)" } else { "detuning (kHz)" };
        let scale = if f.kind == "flop" { 1e6 } else { 1e-3 };
        let series = [
            Series::new("data", x.iter().zip(&p).map(|(x, p)| (x * scale, *p)).collect()),
            Series::new("fit", x.iter().zip(&model_curve).map(|(x, p)| (x * scale, *p)).collect()),
        ];
        out.svg("fit.svg", line_plot("Excitation", xl, "P", &series, false))?;
    }
    Ok(line)
}

fn sbc(cfg: &RunConfig, out: &mut Artifacts) -> Result<String, CliError> {
    let trap = cfg.trap_config()?;
    let freqs = trap.frequencies()?;
    let s = &cfg.sbc;
    let seq = if s.sequence == "table1" {
        table1_sequence()
    } else {
        let path = cfg.resolve(&s.sequence);
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        parse_sequence(&text)?
    };
    if seq.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "sbc.sequence",
            reason: "no pulses".into(),
        }
        .into());
    }
    let eta = lamb_dicke(&freqs, &trap.ion, s.probe_wavelength)?;
    let params = cfg.rate_params();
    let initial = ThermalState::new(s.n_plus, s.n_minus)?;
    let r = simulate_sequence(&seq, &initial, &params, eta)?;
    out.csv(
        "sbc.csv",
        &["t_s", "n_plus", "n_minus"],
        (0..r.times.len()).map(|i| vec![Cell::F(r.times[i]), Cell::F(r.n_plus[i]), Cell::F(r.n_minus[i])]),
    )?;
    out.csv(
        "sbc_final.csv",
        &["n", "p_plus", "p_minus"],
        (0..r.final_plus.len()).map(|n| vec![Cell::U(n as u64), Cell::F(r.final_plus[n]), Cell::F(r.final_minus[n])]),
    )?;
    let fin = r.final_state();
    let zero = first_coupling_zero(eta, 1, params.cutoff);
    out.json(
        "sbc.json",
        &json!({
            "command": "sbc",
            "eta": eta,
            "pulses": seq.len(),
            "duration_s": total_duration(&seq),
            "final_n_plus": fin.n_plus_bar,
            "final_n_minus": fin.n_minus_bar,
            "leaked": [r.leaked.0, r.leaked.1],
            "first_order_coupling_zero": zero,
            "magnetron_population_above_zero": zero.map(|n| population_above(&r.final_minus, n)),
        }),
    )?;
    if cfg.output.svg {
        let series = [
            Series::new("cyclotron", r.times.iter().zip(&r.n_plus).map(|(t, n)| (t * 1e3, *n)).collect()),
            Series::new("magnetron", r.times.iter().zip(&r.n_minus).map(|(t, n)| (t * 1e3, *n)).collect()),
        ];
        out.svg("sbc.svg", line_plot("Sideband cooling", "t (ms)", "n", &series, true))?;
    }
    Ok(format!("after {:.1} ms: n+ = {:.3}, n- = {:.3}", total_duration(&seq) * 1e3, fin.n_plus_bar, fin.n_minus_bar))
}
