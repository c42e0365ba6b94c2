use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{equilibrium_phonons, simulate_with_rng, AxializationConfig, SimConfig};
use crate::laser::LaserConfig;
use crate::rng::{derive_stream_seed, stream};
use crate::trap::PhononNumbers;
use crate::{Error, Result};

/// Parameter varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Axialization amplitude V_ax, V. A resonant drive is created if the
    /// template has none.
    AxialVoltage,
    /// Beam waist w₀, m.
    Waist,
    /// Beam offset y₀, m.
    Offset,
    /// Beam power P₀, W.
    Power,
    /// Laser detuning δ, rad/s.
    Detuning,
    /// Trap voltage V₀, V.
    TrapVoltage,
    /// Master seed; each value restarts the stream derivation.
    Seed,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::AxialVoltage,
        SweepAxis::Waist,
        SweepAxis::Offset,
        SweepAxis::Power,
        SweepAxis::Detuning,
        SweepAxis::TrapVoltage,
        SweepAxis::Seed,
    ];

    /// Configuration key of the swept parameter.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::AxialVoltage => "axialization.amplitude",
            SweepAxis::Waist => "laser.waist",
            SweepAxis::Offset => "laser.offset",
            SweepAxis::Power => "laser.power",
            SweepAxis::Detuning => "laser.detuning",
            SweepAxis::TrapVoltage => "trap.v0",
            SweepAxis::Seed => "seed",
        }
    }

    pub fn from_key(key: &str) -> Option<SweepAxis> {
        SweepAxis::ALL.into_iter().find(|a| a.key() == key)
    }

    fn apply(self, cfg: &mut SimConfig, value: f64) -> Result<()> {
        fn laser(cfg: &mut SimConfig, axis: SweepAxis) -> Result<&mut LaserConfig> {
            cfg.laser
                .as_mut()
                .ok_or_else(|| Error::invalid("sweep.axis", format!("{} needs a laser in the template", axis.key())))
        }
        match self {
            SweepAxis::AxialVoltage => match cfg.axialization.as_mut() {
                Some(ax) => ax.amplitude = value,
                None => {
                    let freqs = cfg.trap.frequencies()?;
                    cfg.axialization = Some(AxializationConfig::resonant(value, &freqs));
                }
            },
            SweepAxis::Waist => laser(cfg, self)?.waist = value,
            SweepAxis::Offset => laser(cfg, self)?.offset = value,
            SweepAxis::Power => laser(cfg, self)?.power = value,
            SweepAxis::Detuning => laser(cfg, self)?.detuning = value,
            SweepAxis::TrapVoltage => cfg.trap.trap_voltage = value,
            SweepAxis::Seed => {
                if !(value >= 0.0 && value.fract() == 0.0 && value < u64::MAX as f64) {
                    return Err(Error::invalid("sweep.values", "seed values must be non-negative integers"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepOutcome {
    Equilibrium(PhononNumbers),
    /// The ion left the divergence bound at time `t`.
    Diverged { t: f64 },
    /// Any other numerical failure, kept as data.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value_index: usize,
    pub value: f64,
    pub replica: usize,
    pub seed: u64,
    pub outcome: SweepOutcome,
}

/// Runs one trajectory per (value, replica) pair and averages each over the
/// template's window. Cells run in parallel on the current rayon pool; rows
/// come back in (value, replica) order regardless of scheduling.
///
/// Configuration errors in a cell (for example a trap voltage beyond the
/// stability limit) abort the sweep. Divergence and other numerical failures
/// are recorded in the row.
pub fn sweep(template: &SimConfig, axis: SweepAxis, values: &[f64], replicas: usize) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep.values", "at least one value required"));
    }
    if replicas == 0 {
        return Err(Error::invalid("sweep.replicas", "must be at least 1"));
    }
    let mut cells = Vec::with_capacity(values.len() * replicas);
    for (vi, &value) in values.iter().enumerate() {
        let mut cfg = template.clone();
        axis.apply(&mut cfg, value)?;
        cfg.validate()?;
        let (master, value_index) = match axis {
            SweepAxis::Seed => (value as u64, 0),
            _ => (template.seed, vi as u64),
        };
        for r in 0..replicas {
            let seed = derive_stream_seed(master, value_index, r as u64);
            cells.push((vi, value, r, seed, cfg.clone()));
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(value_index, value, replica, seed, mut cfg)| {
            cfg.seed = seed;
            let mut rng = stream(seed);
            let outcome = match simulate_with_rng(&cfg, &mut rng)
                .and_then(|rec| equilibrium_phonons(&rec, cfg.averaging_window))
            {
                Ok(n) => SweepOutcome::Equilibrium(n),
                Err(Error::Diverged { t, .. }) => SweepOutcome::Diverged { t },
                Err(e) => SweepOutcome::Failed(e.to_string()),
            };
            SweepRow {
                value_index,
                value,
                replica,
                seed,
                outcome,
            }
        })
        .collect())
}
