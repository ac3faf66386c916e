//! Flat `key=value` run configuration with flag overrides, provenance
//! echoes, and output-directory hygiene.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::errors::{io_data, CliError, Result};

/// Parsed configuration file: one `key=value` per line, `#` comments and
/// blank lines ignored. Values stay as text until a command asks for them
/// with a concrete type.
#[derive(Debug, Default)]
pub struct FileConfig {
    map: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| io_data(path, e))?;
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    i + 1
                )));
            };
            let key = key.trim().to_string();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::usage(format!(
                    "{}:{}: duplicate key {key:?}",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(FileConfig { map })
    }

    /// Rejects keys this command does not understand, so typos surface
    /// instead of silently falling back to defaults.
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        for key in self.map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(CliError::usage(format!(
                    "unknown config key {key:?} (known: {})",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::usage(format!("config key {key}={raw:?} does not parse"))
            }),
        }
    }
}

/// Resolves one setting: an explicit flag wins, then the config file, then
/// the built-in default.
pub fn effective<T: FromStr>(
    flag: Option<T>,
    cfg: &FileConfig,
    key: &str,
    default: T,
) -> Result<T> {
    if let Some(v) = flag {
        return Ok(v);
    }
    Ok(cfg.get::<T>(key)?.unwrap_or(default))
}

/// Accumulates the effective settings of a run and writes them beside the
/// outputs as sorted `key=value` lines.
#[derive(Debug, Default)]
pub struct RunEcho {
    entries: BTreeMap<String, String>,
}

impl RunEcho {
    pub fn new() -> Self {
        RunEcho::default()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        let path = out_dir.join("run_config.txt");
        std::fs::write(&path, text).map_err(|e| io_data(&path, e))
    }
}

/// Creates the output directory, refusing to reuse a non-empty one unless
/// `--force` was given.
pub fn prepare_out_dir(path: &Path, force: bool) -> Result<()> {
    if path.exists() {
        if !path.is_dir() {
            return Err(CliError::data(format!(
                "{} exists and is not a directory",
                path.display()
            )));
        }
        let occupied = std::fs::read_dir(path)
            .map_err(|e| io_data(path, e))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(CliError::data(format!(
                "output directory {} is not empty; pass --force to overwrite",
                path.display()
            )));
        }
        return Ok(());
    }
    std::fs::create_dir_all(path).map_err(|e| io_data(path, e))
}

/// Writes a text artifact inside the output directory.
pub fn write_artifact(out_dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = out_dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_data(&path, e))
}
