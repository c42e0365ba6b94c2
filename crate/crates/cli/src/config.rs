//! Run configuration.
//!
//! A configuration file is TOML written as `section.key = value` lines (or
//! the equivalent `[section]` tables). Numbers are SI. A quantity may also be
//! given as a string with a unit, `laser.waist = "100 um"`; keys in rad/s
//! additionally accept ordinary frequencies, `laser.detuning = "10.8 MHz"`.
//!
//! Every key can be overridden from the environment: `laser.waist` is read
//! from `PENNING_LASER_WAIST`. Precedence is defaults, file, environment,
//! command-line flags.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::PathBuf;

use penning_core::dynamics::{AxializationConfig, SimConfig, SweepAxis};
use penning_core::laser::default_cross_section;
use penning_core::sbc::RateModelParams;
use penning_core::spectroscopy::{Line, Mode};
use penning_core::{IonSpecies, LaserConfig, PhaseState, TrapConfig};
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};

use crate::error::CliError;

/// Prefix of environment overrides.
pub const ENV_PREFIX: &str = "PENNING_";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub ion: IonSettings,
    pub trap: TrapSettings,
    pub laser: LaserSettings,
    pub axialization: AxializationSettings,
    pub sim: SimSettings,
    pub sweep: SweepSettings,
    pub limits: LimitsSettings,
    pub fit: FitSettings,
    pub sbc: SbcSettings,
    pub output: OutputSettings,
    /// Directory that relative data paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IonSettings {
    pub mass_u: f64,
    pub charge_e: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrapSettings {
    pub b: f64,
    pub v0: f64,
    pub d0: f64,
    pub r0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaserSettings {
    pub enabled: bool,
    pub power: f64,
    pub waist: f64,
    pub offset: f64,
    pub detuning: f64,
    pub linewidth: f64,
    pub wavelength: f64,
    /// `None` means λ²/2π.
    pub cross_section: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxializationSettings {
    pub amplitude: f64,
    /// `None` drives at ω_c.
    pub frequency: Option<f64>,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub dt: f64,
    pub t_end: f64,
    pub window_start: f64,
    pub window_end: f64,
    pub record_stride: u64,
    pub divergence_bound: f64,
    pub initial: PhaseState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub axis: String,
    pub values: Vec<f64>,
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitsSettings {
    pub nu_minus_min: f64,
    pub nu_minus_max: f64,
    pub points: u64,
    pub axial_beam_correction: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    /// `spectrum`, `flop` or `comb`.
    pub kind: String,
    pub data: String,
    pub probe_time: f64,
    pub probe_wavelength: f64,
    pub max_order_plus: u64,
    pub max_order_minus: u64,
    pub n_plus: f64,
    pub n_minus: f64,
    pub rabi_frequency: f64,
    pub background: f64,
    pub centre: f64,
    pub free: Vec<String>,
    /// Largest n̄ the model must support; sets the Fock cutoffs.
    pub max_n_plus: Option<f64>,
    pub max_n_minus: Option<f64>,
    pub line_plus: i64,
    pub line_minus: i64,
    pub decay_time: Option<f64>,
    pub comb_mode: String,
    pub starts: u64,
    pub max_evaluations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SbcSettings {
    pub sequence: String,
    pub n_plus: f64,
    pub n_minus: f64,
    pub rabi_frequency: f64,
    pub effective_linewidth: f64,
    pub heating_plus: f64,
    pub heating_minus: f64,
    pub carrier_heating: f64,
    pub cutoff: u64,
    pub record_interval: f64,
    pub probe_wavelength: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: String,
    pub svg: bool,
}

impl Default for RunConfig {
    /// The 729 kHz / 265 kHz reference trap at 100 V with an 8 µW beam of
    /// 100 µm waist offset by 130 µm, red detuned by Γ/2, and 1 V of
    /// axialization.
    fn default() -> Self {
        let linewidth = TAU * 21.6e6;
        let sbc = RateModelParams::default();
        RunConfig {
            seed: 0,
            ion: IonSettings {
                mass_u: 39.9626,
                charge_e: 1.0,
            },
            trap: TrapSettings {
                b: 1.8971419896864439,
                v0: 100.0,
                d0: 0.018664142150506165,
                r0: 0.01,
            },
            laser: LaserSettings {
                enabled: true,
                power: 8e-6,
                waist: 100e-6,
                offset: 130e-6,
                detuning: linewidth / 2.0,
                linewidth,
                wavelength: 397e-9,
                cross_section: None,
            },
            axialization: AxializationSettings {
                amplitude: 1.0,
                frequency: None,
                phase: 0.0,
            },
            sim: SimSettings {
                dt: 20e-9,
                t_end: 20e-3,
                window_start: 10e-3,
                window_end: 20e-3,
                record_stride: 50,
                divergence_bound: 1e-3,
                initial: penning_core::dynamics::reference_initial_state(),
            },
            sweep: SweepSettings {
                axis: "axialization.amplitude".into(),
                values: vec![0.0, 0.25, 0.5, 1.0, 2.0],
                replicas: 5,
            },
            limits: LimitsSettings {
                nu_minus_min: 1e3,
                nu_minus_max: 120e3,
                points: 120,
                axial_beam_correction: false,
            },
            fit: FitSettings {
                kind: "spectrum".into(),
                data: String::new(),
                probe_time: 280e-6,
                probe_wavelength: 729e-9,
                max_order_plus: 1,
                max_order_minus: 2,
                n_plus: 1.0,
                n_minus: 1.0,
                rabi_frequency: TAU * 15e3,
                background: 0.04,
                centre: 0.0,
                free: vec!["n_plus_bar".into(), "n_minus_bar".into(), "omega0".into()],
                max_n_plus: None,
                max_n_minus: None,
                line_plus: 1,
                line_minus: 0,
                decay_time: None,
                comb_mode: "magnetron".into(),
                starts: 4,
                max_evaluations: 4000,
            },
            sbc: SbcSettings {
                sequence: "table1".into(),
                n_plus: 96.0,
                n_minus: 136.0,
                rabi_frequency: sbc.rabi_frequency,
                effective_linewidth: sbc.effective_linewidth,
                heating_plus: sbc.heating_rate_plus,
                heating_minus: sbc.heating_rate_minus,
                carrier_heating: sbc.carrier_heating_rate,
                cutoff: sbc.cutoff as u64,
                record_interval: sbc.record_interval,
                probe_wavelength: 729e-9,
            },
            output: OutputSettings {
                dir: "out".into(),
                svg: false,
            },
            base_dir: None,
        }
    }
}

/// Physical unit of a numeric key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    None,
    Metre,
    Second,
    Watt,
    Volt,
    Tesla,
    Hertz,
    /// Also accepts Hz-type suffixes, converted with 2π.
    RadPerSecond,
    Radian,
    PerSecond,
}

impl Unit {
    fn symbol(self) -> &'static str {
        match self {
            Unit::None => "",
            Unit::Metre => "m",
            Unit::Second => "s",
            Unit::Watt => "W",
            Unit::Volt => "V",
            Unit::Tesla => "T",
            Unit::Hertz => "Hz",
            Unit::RadPerSecond => "rad/s",
            Unit::Radian => "rad",
            Unit::PerSecond => "1/s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float(Unit),
    /// Float or the string `auto`.
    AutoFloat(Unit),
    Int,
    SignedInt,
    Bool,
    Text,
    Floats(Unit),
    Texts,
}

/// Typed value of a key.
#[derive(Debug, Clone, PartialEq)]
enum Setting {
    Float(f64),
    Auto,
    Int(u64),
    Signed(i64),
    Bool(bool),
    Text(String),
    Floats(Vec<f64>),
    Texts(Vec<String>),
}

impl Setting {
    fn float(&self) -> f64 {
        match self {
            Setting::Float(v) => *v,
            _ => unreachable!("type checked at parse"),
        }
    }
    fn auto_float(&self) -> Option<f64> {
        match self {
            Setting::Float(v) => Some(*v),
            _ => None,
        }
    }
    fn int(&self) -> u64 {
        match self {
            Setting::Int(v) => *v,
            _ => unreachable!("type checked at parse"),
        }
    }
    fn signed(&self) -> i64 {
        match self {
            Setting::Signed(v) => *v,
            _ => unreachable!("type checked at parse"),
        }
    }
    fn bool(&self) -> bool {
        match self {
            Setting::Bool(v) => *v,
            _ => unreachable!("type checked at parse"),
        }
    }
    fn text(&self) -> String {
        match self {
            Setting::Text(v) => v.clone(),
            _ => unreachable!("type checked at parse"),
        }
    }
    fn floats(&self) -> Vec<f64> {
        match self {
            Setting::Floats(v) => v.clone(),
            _ => unreachable!("type checked at parse"),
        }
    }
    fn texts(&self) -> Vec<String> {
        match self {
            Setting::Texts(v) => v.clone(),
            _ => unreachable!("type checked at parse"),
        }
    }

    /// Canonical TOML spelling.
    fn render(&self) -> String {
        match self {
            Setting::Float(v) => float_literal(*v),
            Setting::Auto => "\"auto\"".into(),
            Setting::Int(v) => v.to_string(),
            Setting::Signed(v) => v.to_string(),
            Setting::Bool(v) => v.to_string(),
            Setting::Text(s) => quote(s),
            Setting::Floats(v) => format!("[{}]", v.iter().map(|x| float_literal(*x)).collect::<Vec<_>>().join(", ")),
            Setting::Texts(v) => format!("[{}]", v.iter().map(|s| quote(s)).collect::<Vec<_>>().join(", ")),
        }
    }
}

/// Shortest round-tripping float literal that TOML reads as a float.
fn float_literal(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn quote(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

struct Key {
    name: &'static str,
    kind: Kind,
    /// Left out of the config hash (output plumbing only).
    hashed: bool,
    doc: &'static str,
    get: fn(&RunConfig) -> Setting,
    set: fn(&mut RunConfig, &Setting),
}

macro_rules! key {
    ($name:literal, $kind:expr, $doc:literal, |$c:ident| $field:expr, $conv:ident, $wrap:expr) => {
        Key {
            name: $name,
            kind: $kind,
            hashed: true,
            doc: $doc,
            get: |$c| $wrap($field.clone()),
            set: |$c, v| $field = v.$conv(),
        }
    };
}

fn f(v: f64) -> Setting {
    Setting::Float(v)
}
fn auto(v: Option<f64>) -> Setting {
    v.map_or(Setting::Auto, Setting::Float)
}

use Kind::*;

static KEYS: &[Key] = &[
    key!("run.seed", Int, "master seed; --seed overrides", |c| c.seed, int, Setting::Int),
    key!("ion.mass_u", Float(Unit::None), "ion mass in atomic mass units", |c| c.ion.mass_u, float, f),
    key!("ion.charge_e", Float(Unit::None), "ion charge in elementary charges", |c| c.ion.charge_e, float, f),
    key!("trap.b", Float(Unit::Tesla), "magnetic field", |c| c.trap.b, float, f),
    key!("trap.v0", Float(Unit::Volt), "trap voltage", |c| c.trap.v0, float, f),
    key!("trap.d0", Float(Unit::Metre), "trap dimension D0", |c| c.trap.d0, float, f),
    key!("trap.r0", Float(Unit::Metre), "ring electrode radius R0", |c| c.trap.r0, float, f),
    key!("laser.enabled", Bool, "cooling beam on", |c| c.laser.enabled, bool, Setting::Bool),
    key!("laser.power", Float(Unit::Watt), "beam power P0", |c| c.laser.power, float, f),
    key!("laser.waist", Float(Unit::Metre), "1/e^2 intensity radius w0", |c| c.laser.waist, float, f),
    key!("laser.offset", Float(Unit::Metre), "beam offset y0", |c| c.laser.offset, float, f),
    key!("laser.detuning", Float(Unit::RadPerSecond), "detuning, positive below resonance", |c| c.laser.detuning, float, f),
    key!("laser.linewidth", Float(Unit::RadPerSecond), "transition linewidth", |c| c.laser.linewidth, float, f),
    key!("laser.wavelength", Float(Unit::Metre), "cooling wavelength", |c| c.laser.wavelength, float, f),
    key!("laser.cross_section", AutoFloat(Unit::None), "resonant cross-section in m^2, auto = lambda^2/2pi", |c| c.laser.cross_section, auto_float, auto),
    key!("axialization.amplitude", Float(Unit::Volt), "drive amplitude, 0 = off", |c| c.axialization.amplitude, float, f),
    key!("axialization.frequency", AutoFloat(Unit::RadPerSecond), "drive frequency, auto = omega_c", |c| c.axialization.frequency, auto_float, auto),
    key!("axialization.phase", Float(Unit::Radian), "drive phase", |c| c.axialization.phase, float, f),
    key!("sim.dt", Float(Unit::Second), "integration step", |c| c.sim.dt, float, f),
    key!("sim.t_end", Float(Unit::Second), "integration time", |c| c.sim.t_end, float, f),
    key!("sim.window_start", Float(Unit::Second), "start of the averaging window", |c| c.sim.window_start, float, f),
    key!("sim.window_end", Float(Unit::Second), "end of the averaging window", |c| c.sim.window_end, float, f),
    key!("sim.record_stride", Int, "steps between recorded samples", |c| c.sim.record_stride, int, Setting::Int),
    key!("sim.divergence_bound", Float(Unit::Metre), "amplitude at which the ion counts as lost", |c| c.sim.divergence_bound, float, f),
    key!("sim.x0", Float(Unit::Metre), "initial x", |c| c.sim.initial.x, float, f),
    key!("sim.y0", Float(Unit::Metre), "initial y", |c| c.sim.initial.y, float, f),
    key!("sim.vx0", Float(Unit::None), "initial vx in m/s", |c| c.sim.initial.vx, float, f),
    key!("sim.vy0", Float(Unit::None), "initial vy in m/s", |c| c.sim.initial.vy, float, f),
    key!("sweep.axis", Text, "swept key", |c| c.sweep.axis, text, Setting::Text),
    key!("sweep.values", Floats(Unit::None), "values of the swept key, in its SI unit", |c| c.sweep.values, floats, Setting::Floats),
    key!("sweep.replicas", Int, "trajectories per value", |c| c.sweep.replicas, int, Setting::Int),
    key!("limits.nu_minus_min", Float(Unit::Hertz), "lowest magnetron frequency of the curve", |c| c.limits.nu_minus_min, float, f),
    key!("limits.nu_minus_max", Float(Unit::Hertz), "highest magnetron frequency of the curve", |c| c.limits.nu_minus_max, float, f),
    key!("limits.points", Int, "points on the curve", |c| c.limits.points, int, Setting::Int),
    key!("limits.axial_beam_correction", Bool, "apply the 1.3 factor for an axial beam", |c| c.limits.axial_beam_correction, bool, Setting::Bool),
    key!("fit.kind", Text, "spectrum, flop or comb", |c| c.fit.kind, text, Setting::Text),
    key!("fit.data", Text, "CSV of the measured scan", |c| c.fit.data, text, Setting::Text),
    key!("fit.probe_time", Float(Unit::Second), "probe pulse length of a spectrum", |c| c.fit.probe_time, float, f),
    key!("fit.probe_wavelength", Float(Unit::Metre), "probe wavelength", |c| c.fit.probe_wavelength, float, f),
    key!("fit.max_order_plus", Int, "cyclotron sideband orders in the spectrum model", |c| c.fit.max_order_plus, int, Setting::Int),
    key!("fit.max_order_minus", Int, "magnetron sideband orders in the spectrum model", |c| c.fit.max_order_minus, int, Setting::Int),
    key!("fit.n_plus", Float(Unit::None), "initial cyclotron n", |c| c.fit.n_plus, float, f),
    key!("fit.n_minus", Float(Unit::None), "initial magnetron n", |c| c.fit.n_minus, float, f),
    key!("fit.rabi_frequency", Float(Unit::RadPerSecond), "initial carrier Rabi frequency", |c| c.fit.rabi_frequency, float, f),
    key!("fit.background", Float(Unit::None), "initial shelving background", |c| c.fit.background, float, f),
    key!("fit.centre", Float(Unit::Hertz), "initial carrier offset", |c| c.fit.centre, float, f),
    key!("fit.free", Texts, "parameters left free", |c| c.fit.free, texts, Setting::Texts),
    key!("fit.max_n_plus", AutoFloat(Unit::None), "largest cyclotron n the model supports, auto = 4 n_plus + 5", |c| c.fit.max_n_plus, auto_float, auto),
    key!("fit.max_n_minus", AutoFloat(Unit::None), "largest magnetron n the model supports, auto = 4 n_minus + 5", |c| c.fit.max_n_minus, auto_float, auto),
    key!("fit.line_plus", SignedInt, "cyclotron order of the flopped line", |c| c.fit.line_plus, signed, Setting::Signed),
    key!("fit.line_minus", SignedInt, "magnetron order of the flopped line", |c| c.fit.line_minus, signed, Setting::Signed),
    key!("fit.decay_time", AutoFloat(Unit::Second), "flop decay time, auto = none", |c| c.fit.decay_time, auto_float, auto),
    key!("fit.comb_mode", Text, "mode whose sidebands form the comb", |c| c.fit.comb_mode, text, Setting::Text),
    key!("fit.starts", Int, "multi-start count", |c| c.fit.starts, int, Setting::Int),
    key!("fit.max_evaluations", Int, "evaluation budget per simplex run", |c| c.fit.max_evaluations, int, Setting::Int),
    key!("sbc.sequence", Text, "pulse table file, or table1", |c| c.sbc.sequence, text, Setting::Text),
    key!("sbc.n_plus", Float(Unit::None), "initial cyclotron n", |c| c.sbc.n_plus, float, f),
    key!("sbc.n_minus", Float(Unit::None), "initial magnetron n", |c| c.sbc.n_minus, float, f),
    key!("sbc.rabi_frequency", Float(Unit::RadPerSecond), "full-intensity carrier Rabi frequency", |c| c.sbc.rabi_frequency, float, f),
    key!("sbc.effective_linewidth", Float(Unit::RadPerSecond), "quench-broadened linewidth", |c| c.sbc.effective_linewidth, float, f),
    key!("sbc.heating_plus", Float(Unit::PerSecond), "cyclotron heating, phonons/s", |c| c.sbc.heating_plus, float, f),
    key!("sbc.heating_minus", Float(Unit::PerSecond), "magnetron heating, phonons/s", |c| c.sbc.heating_minus, float, f),
    key!("sbc.carrier_heating", Float(Unit::PerSecond), "extra magnetron heating in first-order magnetron pulses", |c| c.sbc.carrier_heating, float, f),
    key!("sbc.cutoff", Int, "highest Fock state per mode", |c| c.sbc.cutoff, int, Setting::Int),
    key!("sbc.record_interval", Float(Unit::Second), "spacing of the recorded series", |c| c.sbc.record_interval, float, f),
    key!("sbc.probe_wavelength", Float(Unit::Metre), "sideband laser wavelength", |c| c.sbc.probe_wavelength, float, f),
    Key {
        name: "output.dir",
        kind: Text,
        hashed: false,
        doc: "artifact directory; --out overrides",
        get: |c| Setting::Text(c.output.dir.clone()),
        set: |c, v| c.output.dir = v.text(),
    },
    Key {
        name: "output.svg",
        kind: Bool,
        hashed: false,
        doc: "also render SVG plots; --svg sets it",
        get: |c| Setting::Bool(c.output.svg),
        set: |c, v| c.output.svg = v.bool(),
    },
];

fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Environment variable that overrides `key`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_ascii_uppercase().replace('.', "_"))
}

/// Names of all keys, in documentation order.
pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.name)
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone)]
enum Origin<'a> {
    File { text: &'a str, span: Range<usize> },
    Env(String),
}

impl Origin<'_> {
    fn error(&self, message: String) -> CliError {
        match self {
            Origin::File { text, span } => {
                let (line, column) = line_column(text, span.start);
                CliError::Parse { line, column, message }
            }
            Origin::Env(var) => CliError::Validation {
                key: var.clone(),
                message,
            },
        }
    }
}

/// 1-based line and column (in characters) of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn scale_for_prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        _ => return None,
    })
}

/// Byte offset where the unit starts in `"5ms"` or `"1.5e-3 s"`. An `e`
/// counts as an exponent when a digit or sign follows it.
fn unit_start(s: &str) -> usize {
    let b = s.as_bytes();
    for (i, c) in s.char_indices() {
        if c.is_whitespace() {
            return i;
        }
        if c.is_alphabetic() || !c.is_ascii() {
            let exponent = (c == 'e' || c == 'E')
                && i > 0
                && matches!(b.get(i + 1), Some(d) if d.is_ascii_digit() || *d == b'-' || *d == b'+');
            if !exponent {
                return i;
            }
        }
    }
    s.len()
}

/// Parses `"<number> <unit>"` (space optional) for a key of unit `unit`.
fn parse_quantity(s: &str, unit: Unit) -> Result<f64, String> {
    let s = s.trim();
    let split = unit_start(s);
    let (num, rest) = s.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| format!("expected a number with an optional unit, found \"{s}\""))?;
    let suffix = rest.trim();
    if suffix.is_empty() {
        return Ok(value);
    }
    let mut candidates = vec![(unit.symbol(), 1.0)];
    if unit == Unit::RadPerSecond {
        candidates.push(("Hz", TAU));
    }
    for (sym, factor) in candidates {
        if sym.is_empty() {
            continue;
        }
        if let Some(prefix) = suffix.strip_suffix(sym) {
            // "m" alone as a prefix of "m" is metres, not milli-nothing.
            if let Some(scale) = scale_for_prefix(prefix) {
                return Ok(value * scale * factor);
            }
        }
    }
    let expected = match unit {
        Unit::None => "no unit".to_string(),
        Unit::RadPerSecond => "rad/s or Hz".to_string(),
        u => u.symbol().to_string(),
    };
    Err(format!("unit \"{suffix}\" does not fit this key (expected {expected})"))
}

fn float_of(v: &DeValue<'_>) -> Option<f64> {
    match v {
        DeValue::Float(x) => x.as_str().replace('_', "").parse().ok(),
        DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix()).ok().map(|n| n as f64),
        _ => None,
    }
}

fn convert(kind: Kind, v: &DeValue<'_>) -> Result<Setting, String> {
    let type_error = |want: &str| format!("expected {want}, found {}", v.type_str());
    match kind {
        Float(unit) | AutoFloat(unit) => {
            if let Some(x) = float_of(v) {
                return Ok(Setting::Float(x));
            }
            match v {
                DeValue::String(s) if matches!(kind, AutoFloat(_)) && s.trim() == "auto" => Ok(Setting::Auto),
                DeValue::String(s) => parse_quantity(s, unit).map(Setting::Float),
                _ => Err(type_error("a number")),
            }
        }
        Int => match v {
            DeValue::Integer(i) => u64::from_str_radix(&i.as_str().replace('_', ""), i.radix())
                .map(Setting::Int)
                .map_err(|_| "expected a non-negative integer".into()),
            _ => Err(type_error("an integer")),
        },
        SignedInt => match v {
            DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix())
                .map(Setting::Signed)
                .map_err(|_| "integer out of range".into()),
            _ => Err(type_error("an integer")),
        },
        Bool => v.as_bool().map(Setting::Bool).ok_or_else(|| type_error("true or false")),
        Text => v.as_str().map(|s| Setting::Text(s.to_string())).ok_or_else(|| type_error("a string")),
        Floats(unit) => {
            let items = v.as_array().ok_or_else(|| type_error("an array of numbers"))?;
            items
                .iter()
                .map(|item| match convert(Float(unit), item.get_ref())? {
                    Setting::Float(x) => Ok(x),
                    _ => Err("expected a number".into()),
                })
                .collect::<Result<Vec<_>, String>>()
                .map(Setting::Floats)
        }
        Texts => {
            let items = v.as_array().ok_or_else(|| type_error("an array of strings"))?;
            items
                .iter()
                .map(|item| item.get_ref().as_str().map(str::to_string).ok_or_else(|| "expected a string".to_string()))
                .collect::<Result<Vec<_>, String>>()
                .map(Setting::Texts)
        }
    }
}

impl RunConfig {
    /// Applies a configuration document on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        let doc = DeTable::parse(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            CliError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        for (section, value) in doc.get_ref().iter() {
            let here = Origin::File {
                text,
                span: section.span(),
            };
            let DeValue::Table(table) = value.get_ref() else {
                return Err(here.error(format!("`{}` must be written as section.key", section.get_ref())));
            };
            for (name, v) in table.iter() {
                let full = format!("{}.{}", section.get_ref(), name.get_ref());
                let at_key = Origin::File { text, span: name.span() };
                let key = find_key(&full).ok_or_else(|| at_key.error(format!("unknown key `{full}`")))?;
                let at_value = Origin::File { text, span: v.span() };
                let setting = convert(key.kind, v.get_ref()).map_err(|m| at_value.error(format!("{full}: {m}")))?;
                (key.set)(self, &setting);
            }
        }
        Ok(())
    }

    /// Applies `PENNING_*` variables. Unknown variables with the prefix are
    /// rejected.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut vars: Vec<(String, String)> = vars
            .into_iter()
            .filter(|(k, _)| k.as_ref().starts_with(ENV_PREFIX))
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        vars.sort();
        for (var, raw) in vars {
            let origin = Origin::Env(var.clone());
            let key = KEYS
                .iter()
                .find(|k| env_name(k.name) == var)
                .ok_or_else(|| origin.error("no configuration key with this name".into()))?;
            // Unquoted text is taken as a string.
            let parsed = DeValue::parse(&raw).ok();
            let setting = match parsed.as_ref().map(|p| convert(key.kind, p.get_ref())) {
                Some(Ok(s)) => s,
                _ => convert(key.kind, &DeValue::String(raw.clone().into())).map_err(|m| origin.error(m))?,
            };
            (key.set)(self, &setting);
        }
        Ok(())
    }

    /// Checks every invariant and that the core configurations build.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |key: &str, message: &str| {
            Err(CliError::Validation {
                key: key.to_string(),
                message: message.to_string(),
            })
        };
        self.sim_config()?;
        if self.sim.window_end <= self.sim.window_start || self.sim.window_end > self.sim.t_end {
            return invalid("sim.window_end", "window must satisfy window_start < window_end <= t_end");
        }
        if self.sim.record_stride == 0 {
            return invalid("sim.record_stride", "must be at least 1");
        }
        if SweepAxis::from_key(&self.sweep.axis).is_none() {
            let known: Vec<&str> = SweepAxis::ALL.iter().map(|a| a.key()).collect();
            return invalid("sweep.axis", &format!("must be one of {}", known.join(", ")));
        }
        if self.sweep.values.is_empty() {
            return invalid("sweep.values", "at least one value required");
        }
        if self.sweep.replicas == 0 {
            return invalid("sweep.replicas", "must be at least 1");
        }
        if !(self.limits.nu_minus_min > 0.0 && self.limits.nu_minus_max > self.limits.nu_minus_min) {
            return invalid("limits.nu_minus_max", "need 0 < nu_minus_min < nu_minus_max");
        }
        if self.limits.points < 2 {
            return invalid("limits.points", "must be at least 2");
        }
        if !["spectrum", "flop", "comb"].contains(&self.fit.kind.as_str()) {
            return invalid("fit.kind", "must be spectrum, flop or comb");
        }
        let names: &[&str] = match self.fit.kind.as_str() {
            "flop" => &penning_core::spectroscopy::FLOP_PARAMETERS,
            _ => &penning_core::spectroscopy::SPECTRUM_PARAMETERS,
        };
        if let Some(bad) = self.fit.free.iter().find(|n| !names.contains(&n.as_str())) {
            return invalid("fit.free", &format!("unknown parameter `{bad}` (expected one of {})", names.join(", ")));
        }
        if Mode::parse(&self.fit.comb_mode).is_none() {
            return invalid("fit.comb_mode", "must be cyclotron or magnetron");
        }
        if self.fit.starts == 0 {
            return invalid("fit.starts", "must be at least 1");
        }
        if self.fit.max_order_plus > 4 || self.fit.max_order_minus > 4 {
            return invalid("fit.max_order_plus", "sideband orders are limited to 4");
        }
        if !(self.fit.probe_time > 0.0) {
            return invalid("fit.probe_time", "must be positive");
        }
        self.rate_params().validate()?;
        if self.output.dir.is_empty() {
            return invalid("output.dir", "must not be empty");
        }
        Ok(())
    }

    pub fn ion(&self) -> Result<IonSpecies, CliError> {
        Ok(IonSpecies::new(
            "ion",
            self.ion.mass_u * penning_core::constants::AMU,
            self.ion.charge_e * penning_core::constants::E_CHARGE,
        )?)
    }

    pub fn trap_config(&self) -> Result<TrapConfig, CliError> {
        Ok(TrapConfig::new(self.trap.b, self.trap.v0, self.trap.d0, self.trap.r0, self.ion()?)?)
    }

    /// The beam, regardless of `laser.enabled`.
    pub fn beam(&self) -> LaserConfig {
        let l = &self.laser;
        LaserConfig {
            wavelength: l.wavelength,
            power: l.power,
            waist: l.waist,
            offset: l.offset,
            detuning: l.detuning,
            linewidth: l.linewidth,
            cross_section: l.cross_section.unwrap_or_else(|| default_cross_section(l.wavelength)),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let trap = self.trap_config()?;
        let freqs = trap.frequencies()?;
        let mut cfg = SimConfig::new(trap);
        cfg.laser = self.laser.enabled.then(|| self.beam());
        cfg.axialization = (self.axialization.amplitude != 0.0).then(|| AxializationConfig {
            amplitude: self.axialization.amplitude,
            drive_frequency: self.axialization.frequency.unwrap_or(freqs.omega_c),
            phase: self.axialization.phase,
        });
        if let Some(ax) = &cfg.axialization {
            ax.validate()?;
        }
        cfg.dt = self.sim.dt;
        cfg.t_end = self.sim.t_end;
        cfg.averaging_window = (self.sim.window_start, self.sim.window_end);
        cfg.initial_state = self.sim.initial;
        cfg.seed = self.seed;
        cfg.record_stride = self.sim.record_stride.max(1) as usize;
        cfg.divergence_bound = self.sim.divergence_bound;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rate_params(&self) -> RateModelParams {
        let s = &self.sbc;
        RateModelParams {
            rabi_frequency: s.rabi_frequency,
            effective_linewidth: s.effective_linewidth,
            heating_rate_plus: s.heating_plus,
            heating_rate_minus: s.heating_minus,
            carrier_heating_rate: s.carrier_heating,
            cutoff: s.cutoff as usize,
            record_interval: s.record_interval,
        }
    }

    pub fn flop_line(&self) -> Line {
        Line::new(self.fit.line_plus as i32, self.fit.line_minus as i32)
    }

    /// `path` relative to the configuration file, if one was loaded.
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = PathBuf::from(path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.dir)
    }

    /// Every key with its effective value, one `key = value` line each,
    /// followed by a comment with its meaning.
    pub fn effective_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in KEYS {
            let s = k.name.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            let _ = writeln!(out, "{} = {}  # {}", k.name, (k.get)(self).render(), k.doc);
        }
        out
    }

    /// SHA-256 over the canonical values of every key that affects results,
    /// excluding the seed and output settings.
    pub fn config_hash(&self) -> String {
        let mut h = Sha256::new();
        for k in KEYS.iter().filter(|k| k.hashed && k.name != "run.seed") {
            h.update(k.name.as_bytes());
            h.update(b"=");
            h.update((k.get)(self).render().as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Defaults overlaid with `text`, then validated.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Markdown table of all keys with defaults, for the documentation.
pub fn key_reference() -> String {
    let d = RunConfig::default();
    let mut out = String::from("| key | default | unit | meaning |\n|---|---|---|---|\n");
    for k in KEYS {
        let unit = match k.kind {
            Float(u) | AutoFloat(u) | Floats(u) => u.symbol(),
            _ => "",
        };
        let _ = writeln!(out, "| `{}` | `{}` | {} | {} |", k.name, (k.get)(&d).render(), unit, k.doc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn default_trap_has_reference_frequencies() {
        let f = RunConfig::default().trap_config().unwrap().frequencies().unwrap();
        assert!((f.nu_plus_hz() - 677.1e3).abs() < 200.0);
        assert!((f.nu_minus_hz() - 51.9e3).abs() < 200.0);
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = parse_config("laser.waist = 50e-6\nsweep.replicas = 3\n").unwrap();
        let b = parse_config("[laser]\nwaist = 50e-6\n[sweep]\nreplicas = 3\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.laser.waist, 50e-6);
    }

    #[test]
    fn units_are_converted() {
        let c = parse_config("laser.waist = \"100 um\"\nlaser.detuning = \"10.8 MHz\"\nlaser.power = \"8 uW\"").unwrap();
        assert!((c.laser.waist - 100e-6).abs() < 1e-18);
        assert!((c.laser.detuning - TAU * 10.8e6).abs() < 1e-3);
        assert!((c.laser.power - 8e-6).abs() < 1e-20);
        assert_eq!(parse_quantity("5ms", Unit::Second), Ok(5e-3));
        assert_eq!(parse_quantity("2.5e-3s", Unit::Second), Ok(2.5e-3));
        assert_eq!(parse_quantity("1E3 um", Unit::Metre), Ok(1e3 * 1e-6));
        assert!(parse_quantity("ms", Unit::Second).is_err());
        let e = parse_config("laser.waist = \"100 V\"").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 1, column: 15, .. }), "{e:?}");
    }

    #[test]
    fn unknown_key_reports_position() {
        let e = parse_config("laser.power = 1e-6\n  laser.colour = 3\n").unwrap_err();
        match e {
            CliError::Parse { line, column, message } => {
                assert_eq!((line, column), (2, 9));
                assert!(message.contains("laser.colour"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_position() {
        let e = parse_config("trap.b = 1.9\ntrap.v0 = = 3\n").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 2, .. }), "{e:?}");
    }

    #[test]
    fn wrong_type_rejected() {
        assert!(matches!(parse_config("sweep.replicas = 2.5"), Err(CliError::Parse { .. })));
        assert!(matches!(parse_config("laser.enabled = 1"), Err(CliError::Parse { .. })));
        assert!(matches!(parse_config("seed = 3"), Err(CliError::Parse { .. })));
    }

    #[test]
    fn unstable_voltage_is_a_validation_error() {
        let trap = RunConfig::default().trap_config().unwrap();
        let text = format!("trap.v0 = {}", 1.5 * trap.stability_voltage_limit());
        match parse_config(&text).unwrap_err() {
            CliError::Core(penning_core::Error::StabilityViolation { .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn env_overrides_file() {
        let mut c = RunConfig::default();
        c.apply_text("laser.waist = 50e-6").unwrap();
        c.apply_env([("PENNING_LASER_WAIST", "70 um"), ("PENNING_SWEEP_AXIS", "laser.offset"), ("HOME", "/x")])
            .unwrap();
        assert!((c.laser.waist - 70e-6).abs() < 1e-18);
        assert_eq!(c.sweep.axis, "laser.offset");
        assert!(c.apply_env([("PENNING_LASER_COLOUR", "red")]).is_err());
    }

    #[test]
    fn effective_text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("laser.waist = 3.3e-5\nfit.free = [\"omega0\"]\naxialization.frequency = 1e6").unwrap();
        let echoed = c.effective_text();
        let again = parse_config(&echoed).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn hash_ignores_seed_and_output_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.seed = 9;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.laser.power *= 2.0;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn every_key_has_an_env_name() {
        let names: std::collections::HashSet<String> = keys().map(env_name).collect();
        assert_eq!(names.len(), KEYS.len());
        assert_eq!(env_name("laser.cross_section"), "PENNING_LASER_CROSS_SECTION");
    }
}
