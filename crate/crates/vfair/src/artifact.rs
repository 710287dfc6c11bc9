//! Write-once artifacts with provenance sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::{Error, Result};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SIDECAR_SUFFIX: &str = ".prov.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteOutcome {
    Created,
    Unchanged,
    Replaced,
}

/// Writes `bytes` to `path` through a temporary file and a rename. An
/// existing file with the same bytes is left untouched; one with different
/// bytes is only replaced when `force` is set.
pub fn write_atomic(path: &Path, bytes: &[u8], force: bool) -> Result<WriteOutcome> {
    let existed = match fs::read(path) {
        Ok(current) if current == bytes => return Ok(WriteOutcome::Unchanged),
        Ok(_) if !force => {
            return Err(Error::Overwrite {
                path: path.to_path_buf(),
            })
        }
        Ok(_) => true,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(Error::io(path, e)),
    };
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes)
        .and_then(|()| f.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })?;
    Ok(if existed {
        WriteOutcome::Replaced
    } else {
        WriteOutcome::Created
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: String,
    pub sha256: String,
}

/// Sidecar stored next to every artifact as `<file>.prov.json`. Paths are
/// relative to the run directory so that sidecars do not depend on where
/// the run lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact: String,
    pub stage: String,
    pub config_hash: String,
    pub seed: u64,
    pub fold: Option<u32>,
    pub toolkit_version: String,
    pub sha256: String,
    pub inputs: Vec<InputRef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("provenance serializes");
        out.push(b'\n');
        out
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(SIDECAR_SUFFIX);
    artifact.with_file_name(name)
}

pub fn is_sidecar(path: &Path) -> bool {
    path.to_string_lossy().ends_with(SIDECAR_SUFFIX)
}

pub fn input_ref(run_dir: &Path, path: &Path, bytes: &[u8]) -> InputRef {
    InputRef {
        path: relative(run_dir, path),
        sha256: sha256_hex(bytes),
    }
}

pub(crate) fn relative(base: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
