//! File helpers that attach the path to every error.

use std::fs;
use std::path::{Path, PathBuf};

use prpm_core::eventlog::parse_log;
use prpm_core::EventLog;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, Result};

pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::config(e.to_string()).at(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(e.to_string()).at(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(e.to_string()).at(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::data(e.to_string()).at(path))
}

pub fn read_log(path: &Path) -> Result<EventLog> {
    let file = fs::File::open(path).map_err(|e| CliError::data(e.to_string()).at(path))?;
    parse_log(std::io::BufReader::new(file)).map_err(|e| CliError::from(e).at(path))
}

pub fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::data(e.to_string()).at(dir))?;
    }
    fs::File::create(path).map_err(|e| CliError::data(e.to_string()).at(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| CliError::data(e.to_string()).at(path))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialize");
    s.push('\n');
    s
}

/// Writes JSON to `out`, or to stdout when no path is given.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = to_json(value);
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::data(e.to_string()).at(dir))
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::config(format!("{flag} is required")))
}
