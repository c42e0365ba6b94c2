//! Artifact writing. Every CSV starts with a `# penning <version>
//! config_hash=<hex> seed=<n>` line followed by a single header row; floats
//! are written with 17 significant digits so identical runs give identical
//! bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    S(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format_float(*v),
            Cell::I(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

/// `{:.16e}`, with `nan`, `inf` and `-inf` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the artifacts of one run and writes the manifest last.
pub struct Artifacts {
    dir: PathBuf,
    comment: String,
    config_hash: String,
    seed: u64,
    written: Vec<(String, String)>,
}

impl Artifacts {
    /// Creates the output directory and writes the effective configuration.
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        let dir = cfg.output_dir();
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let config_hash = cfg.config_hash();
        let mut a = Artifacts {
            comment: format!("# penning {VERSION} config_hash={config_hash} seed={}", cfg.seed),
            dir,
            config_hash,
            seed: cfg.seed,
            written: Vec::new(),
        };
        let echo = format!("{}\n{}", a.comment, cfg.effective_text());
        a.write("config.effective.toml", echo.as_bytes())?;
        Ok(a)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, columns: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<Cell>>,
    {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| CliError::io(name, e);
        w.write_record(columns).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            w.write_record(row.iter().map(Cell::render)).map_err(io)?;
        }
        let body = w.into_inner().map_err(|e| CliError::io(name, e))?;
        let mut bytes = Vec::with_capacity(body.len() + self.comment.len() + 1);
        bytes.extend_from_slice(self.comment.as_bytes());
        bytes.push(b'\n');
        bytes.extend_from_slice(&body);
        self.write(name, &bytes)
    }

    /// Pretty JSON with the config hash and seed added at the top level.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::io(name, e))?;
        if let Some(obj) = v.as_object_mut() {
            obj.insert("penning_version".into(), json!(VERSION));
            obj.insert("config_hash".into(), json!(self.config_hash));
            obj.insert("seed".into(), json!(self.seed));
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::io(name, e))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn svg(&mut self, name: &str, body: String) -> Result<(), CliError> {
        let marked = body.replacen(
            "<svg ",
            &format!("<!-- penning {VERSION} config_hash={} seed={} -->\n<svg ", self.config_hash, self.seed),
            1,
        );
        self.write(name, marked.as_bytes())
    }

    /// Writes `manifest.json` listing every artifact with its SHA-256.
    pub fn finish(mut self, command: &str) -> Result<PathBuf, CliError> {
        let files: Vec<_> = self
            .written
            .iter()
            .map(|(name, sha)| json!({ "file": name, "sha256": sha }))
            .collect();
        let manifest = json!({
            "tool": "penning",
            "version": VERSION,
            "command": command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "artifacts": files,
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io("manifest.json", e))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        self.written.clear();
        Ok(path)
    }
}
