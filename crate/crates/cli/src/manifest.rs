//! Run-directory manifest: every artifact with its size and SHA-256, so a
//! run can be verified and reproduced from its persisted outputs alone.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use fair_core::Result;

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    files: Vec<ManifestEntry>,
}

fn collect(dir: &Path, base: &Path, out: &mut Vec<ManifestEntry>) -> Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.filter_map(|e| e.ok()).collect();
    entries.sort_by_key(|e| e.path());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect(&path, base, out)?;
        } else if path.file_name().map(|n| n != "manifest.json").unwrap_or(true) {
            let bytes = std::fs::read(&path)?;
            let mut hasher = Sha256::new();
            hasher.update(&bytes);
            out.push(ManifestEntry {
                path: path
                    .strip_prefix(base)
                    .unwrap_or(&path)
                    .to_string_lossy()
                    .to_string(),
                bytes: bytes.len() as u64,
                sha256: format!("{:x}", hasher.finalize()),
            });
        }
    }
    Ok(())
}

/// Writes `manifest.json` listing every file under `dir` (except itself).
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect(dir, dir, &mut files)?;
    let manifest = Manifest { files };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}
