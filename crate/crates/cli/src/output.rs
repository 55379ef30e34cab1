//! Input reading, atomic output and run metadata.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

/// Writes `contents` to a temporary file next to `path`, then renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let fail = |e: &dyn std::fmt::Display| CliError::failure(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    tmp.write_all(contents).map_err(|e| fail(&e))?;
    tmp.as_file().sync_all().map_err(|e| fail(&e))?;
    tmp.persist(path).map_err(|e| fail(&e.error))?;
    Ok(())
}

/// `path` with `suffix` appended to the full file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

#[derive(Clone, Debug, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: Option<u64>,
    /// SHA-256 of the resolved configuration serialized as JSON.
    pub config_hash: String,
    pub config: serde_json::Value,
}

impl Meta {
    pub fn new(command: &'static str, seed: Option<u64>, config: &impl Serialize) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        let bytes = serde_json::to_vec(&config).expect("config serializes");
        Self {
            tool: "dmpnn",
            version: VERSION,
            command,
            seed,
            config_hash: hex::encode(Sha256::digest(&bytes)),
            config,
        }
    }

    pub fn write_sidecar(&self, output: &Path) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(self).expect("meta serializes");
        text.push('\n');
        write_atomic(&sidecar(output, ".meta.json"), text.as_bytes())
    }
}

/// Prints one JSON document on standard output.
/// A closed stdout (say, piped into `head`) is not an error worth a panic.
pub fn emit(value: &impl Serialize) {
    use std::io::Write;
    let line = serde_json::to_string(value).expect("result serializes");
    let _ = writeln!(std::io::stdout().lock(), "{line}");
}
