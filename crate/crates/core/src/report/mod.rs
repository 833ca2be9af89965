//! Output files: fixed-precision JSON, GeoJSON layers, CSV, SVG plots, the
//! HTML report and a manifest of content digests.

pub mod geojson;
pub mod html;
pub mod json;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run.log.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub complete: bool,
    pub files: Vec<ManifestEntry>,
}

fn output_err(path: &Path, e: std::io::Error) -> Error {
    Error::Output(format!("{}: {e}", path.display()))
}

/// Fails if `root` already holds files and `overwrite` is not set.
pub fn check_writable(root: &Path, overwrite: bool) -> Result<()> {
    let occupied = match fs::read_dir(root) {
        Ok(mut it) => it.next().is_some(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => false,
        Err(e) => return Err(output_err(root, e)),
    };
    if occupied && !overwrite {
        return Err(Error::Output(format!(
            "{} already contains outputs; rerun with overwrite enabled",
            root.display()
        )));
    }
    if root.exists() && !root.is_dir() {
        return Err(Error::Output(format!("{} is not a directory", root.display())));
    }
    Ok(())
}

/// Writer for one stage's output directory. Every written file is recorded
/// in the manifest together with its digest.
pub struct OutputDir {
    root: PathBuf,
    stage: String,
    entries: Vec<ManifestEntry>,
}

impl OutputDir {
    /// Clears previous outputs (only with `overwrite`) and creates `root`.
    pub fn create(root: &Path, stage: &str, overwrite: bool) -> Result<Self> {
        check_writable(root, overwrite)?;
        if root.exists() {
            fs::remove_dir_all(root).map_err(|e| output_err(root, e))?;
        }
        fs::create_dir_all(root).map_err(|e| output_err(root, e))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            stage: stage.to_string(),
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn write_raw(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| output_err(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| output_err(&path, e))
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let result = self.write_raw(rel, bytes);
        self.entries.push(ManifestEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            complete: result.is_ok(),
        });
        result
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        let s = json::to_string(value)?;
        self.write(rel, s.as_bytes())
    }

    /// Writes a file that is not listed in the manifest (run logs carry
    /// timestamps and are not reproducible).
    pub fn write_untracked(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        self.write_raw(rel, bytes)
    }

    fn write_manifest(&mut self, complete: bool) -> Result<Manifest> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stage: self.stage.clone(),
            complete,
            files: self.entries.clone(),
        };
        self.write_raw(MANIFEST_FILE, json::to_string(&manifest)?.as_bytes())?;
        Ok(manifest)
    }

    pub fn finish(mut self) -> Result<Manifest> {
        self.write_manifest(true)
    }

    /// Records a failed stage: the manifest marks the run incomplete.
    pub fn abort(mut self) {
        let _ = self.write_manifest(false);
    }
}

/// Verifies every manifest entry against the file on disk.
pub fn verify_manifest(root: &Path) -> Result<Manifest> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::Output(format!("{}: {e}", path.display())))?;
    for entry in &manifest.files {
        let p = root.join(&entry.path);
        let data = fs::read(&p).map_err(|e| Error::io(&p, e))?;
        if sha256_hex(&data) != entry.sha256 {
            return Err(Error::Output(format!("digest mismatch for {}", entry.path)));
        }
    }
    Ok(manifest)
}

/// CSV text with a header row; numbers are pre-formatted by the caller.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// Fixed-precision number for CSV cells; empty when absent.
pub fn num(v: Option<f64>) -> String {
    v.and_then(json::fmt_f64).unwrap_or_default()
}
