//! Run manifest: config echo, input hash, timestamps and checksums of every output file.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    /// Absent for the manifest itself.
    pub sha256: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub mode: &'static str,
    pub config: &'a C,
    pub config_path: String,
    pub input_sha256: String,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: u8,
    pub status: String,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}

/// Every regular file in `dir` other than the manifest, sorted by name, with checksums.
pub fn list_outputs(dir: &Path) -> std::io::Result<Vec<FileEntry>> {
    let mut names: Vec<String> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_NAME)
        .collect();
    names.sort();
    let mut out = Vec::with_capacity(names.len() + 1);
    for name in names {
        let (sha, bytes) = sha256_file(&dir.join(&name))?;
        out.push(FileEntry { path: name, bytes, sha256: Some(sha) });
    }
    Ok(out)
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
