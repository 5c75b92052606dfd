//! File helpers shared by agent bundles and experiment outputs.

use std::fs;
use std::io::Write;
use std::path::Path;

use neurocore::Checkpoint;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, WinneError};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| WinneError::Io(e.error))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)
        .map_err(|e| WinneError::Persist(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&s)?)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, ckpt.to_json().as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let s = fs::read_to_string(path)
        .map_err(|e| WinneError::Persist(format!("{}: {e}", path.display())))?;
    Ok(Checkpoint::from_json(&s)?)
}
