//! Command-line front end: configuration loading, the subcommands and their
//! artifacts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod svg;

use std::path::Path;

pub use commands::{run, Command, Outcome};
pub use config::{parse_config, RunConfig};
pub use error::CliError;

/// Builds a configuration from defaults, an optional file and `PENNING_*`
/// variables from `env`, in that order. Relative paths inside the file
/// resolve against the file's directory.
pub fn load<I, K, V>(config_path: Option<&Path>, env: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = (K, V)>,
    K: AsRef<str>,
    V: AsRef<str>,
{
    let mut cfg = RunConfig::default();
    if let Some(path) = config_path {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        cfg.apply_text(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
    }
    cfg.apply_env(env)?;
    Ok(cfg)
}
