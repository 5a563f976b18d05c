//! Run manifests: inputs, resolved configuration, outputs and hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use peacock_lab::io::SCHEMA_VERSION;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, display: String) -> Option<Self> {
        fs::read(path).ok().map(|b| Self {
            path: display,
            sha256: sha256_hex(&b),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub version: &'a str,
    /// Fully resolved parameters; rerunning with them reproduces the
    /// outputs bitwise.
    pub config: &'a C,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub exit_code: u8,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

fn collect(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = fs::read_dir(dir) else { return };
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            collect(&p, base, out);
        } else if p.strip_prefix(base).ok() != Some(Path::new(MANIFEST_FILE)) {
            out.push(p);
        }
    }
}

/// Writes `<out>/manifest.json`, hashing every other file under `out`.
#[allow(clippy::too_many_arguments)]
pub fn write<C: Serialize>(
    out: &Path,
    command: &str,
    config: &C,
    seed: Option<u64>,
    threads: Option<usize>,
    exit_code: u8,
    inputs: &[&Path],
) -> std::io::Result<()> {
    let config_json = serde_json::to_vec(config).map_err(std::io::Error::other)?;
    let mut files = Vec::new();
    collect(out, out, &mut files);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        config_sha256: sha256_hex(&config_json),
        seed,
        threads,
        exit_code,
        inputs: inputs
            .iter()
            .filter_map(|p| FileDigest::of(p, p.display().to_string()))
            .collect(),
        outputs: files
            .iter()
            .filter_map(|p| {
                let rel = p.strip_prefix(out).unwrap_or(p).display().to_string();
                FileDigest::of(p, rel)
            })
            .collect(),
    };
    fs::create_dir_all(out)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::write(out.join(MANIFEST_FILE), text)
}
