use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use penning_cli::{error::exit, load, run, CliError, Command, RunConfig};

/// Laser cooling of a single ion in a Penning trap: simulations, Doppler
/// limits, thermometry fits and sideband-cooling sequences.
#[derive(Parser, Debug)]
#[command(name = "penning", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, short, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides output.dir.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    svg: bool,
    /// Sets any configuration key, e.g. `--set laser.power=10uW`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Integrates one trajectory.
    Simulate,
    /// Equilibrium phonon numbers over a parameter grid.
    Sweep {
        /// Swept key, e.g. axialization.amplitude.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values in SI units.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Trajectories per value, each with its own seed stream.
        #[arg(long)]
        replicas: Option<u64>,
    },
    /// Closed-form Doppler limits versus magnetron frequency.
    Limits,
    /// Fits a spectrum, a flop or a sideband comb.
    Fit {
        /// Data file; overrides fit.data.
        data: Option<PathBuf>,
    },
    /// Runs a sideband-cooling sequence.
    Sbc,
    /// Prints the effective configuration and exits.
    Config {
        /// Lists every key with its default and unit instead.
        #[arg(long)]
        keys: bool,
    },
}

fn set_key(cfg: &mut RunConfig, assignment: &str) -> Result<(), CliError> {
    let Some((key, value)) = assignment.split_once('=') else {
        return Err(CliError::Validation {
            key: "--set".into(),
            message: format!("expected KEY=VALUE, got {assignment:?}"),
        });
    };
    let (key, value) = (key.trim(), value.trim());
    // Bare words are strings.
    let mut attempt = cfg.clone();
    match attempt.apply_text(&format!("{key} = {value}")) {
        Ok(()) => {
            *cfg = attempt;
            Ok(())
        }
        Err(CliError::Parse { .. }) => cfg.apply_text(&format!("{key} = {}", toml_string(value))),
        Err(e) => Err(e),
    }
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialises")
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = load(cli.config.as_deref(), std::env::vars())?;
    for s in &cli.set {
        set_key(&mut cfg, s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    if cli.svg {
        cfg.output.svg = true;
    }
    match &cli.command {
        Sub::Sweep { axis, values, replicas } => {
            if let Some(a) = axis {
                cfg.sweep.axis = a.clone();
            }
            if let Some(v) = values {
                cfg.sweep.values = v.clone();
            }
            if let Some(r) = replicas {
                cfg.sweep.replicas = *r;
            }
        }
        Sub::Fit { data: Some(d) } => {
            // Given on the command line, so relative to the working directory.
            cfg.fit.data = std::path::absolute(d)
                .map_err(|e| CliError::io(d, e))?
                .to_string_lossy()
                .into_owned();
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| {
        let command = match cli.command {
            Sub::Simulate => Command::Simulate,
            Sub::Sweep { .. } => Command::Sweep,
            Sub::Limits => Command::Limits,
            Sub::Fit { .. } => Command::Fit,
            Sub::Sbc => Command::Sbc,
            Sub::Config { keys } => {
                if keys {
                    print!("{}", penning_cli::config::key_reference());
                } else {
                    print!("{}", cfg.effective_text());
                }
                return Ok(());
            }
        };
        let outcome = run(command, &cfg, cli.jobs)?;
        println!("{}", outcome.summary);
        println!("manifest: {}", outcome.manifest.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
