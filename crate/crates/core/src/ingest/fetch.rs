//! Dataset file retrieval with checksum verification.
//!
//! Files already present and matching the manifest are never re-downloaded,
//! so CI can run fully offline against a pre-populated cache. Interrupted
//! downloads resume from a `.part` file via HTTP range requests. Checksums
//! are recorded on first fetch when no manifest entry exists yet.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Newline-delimited `sha256  filename` manifest.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChecksumManifest {
    pub entries: BTreeMap<String, String>,
}

impl ChecksumManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (hash, name) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::parse("checksum manifest", i, "missing filename"))?;
            if hash.len() != 64 || !hash.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(Error::parse("checksum manifest", i, "bad sha256 digest"));
            }
            entries.insert(name.trim().to_string(), hash.to_ascii_lowercase());
        }
        Ok(ChecksumManifest { entries })
    }

    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(name, hash)| format!("{hash}  {name}\n"))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Per-file outcome of a fetch run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchStatus {
    /// Present and checksum-verified without touching the network.
    CacheHit,
    /// Downloaded (or resumed) and verified.
    Downloaded,
    /// Present but no manifest entry existed; checksum recorded.
    Recorded,
}

#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub file: String,
    pub status: FetchStatus,
    pub sha256: String,
}

fn download(base_url: &str, name: &str, dest: &Path) -> Result<()> {
    let url = format!("{}/{}", base_url.trim_end_matches('/'), name);
    let part = dest.with_extension(format!(
        "{}part",
        dest.extension()
            .map(|e| format!("{}.", e.to_string_lossy()))
            .unwrap_or_default()
    ));
    let resume_from = part.metadata().map(|m| m.len()).unwrap_or(0);

    let mut req = ureq::get(&url);
    if resume_from > 0 {
        req = req.header("Range", format!("bytes={resume_from}-"));
    }
    let response = req.call().map_err(|e| Error::Network {
        url: url.clone(),
        message: e.to_string(),
    })?;
    let status = response.status();
    let append = resume_from > 0 && status == 206;
    let mut reader = response.into_body().into_reader();
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&part)?;
    std::io::copy(&mut reader, &mut file).map_err(|e| Error::Network {
        url,
        message: e.to_string(),
    })?;
    drop(file);
    fs::rename(&part, dest)?;
    Ok(())
}

/// Fetches `names` from `base_url` into `dest_dir`, verifying each file
/// against `manifest`. With `offline = true`, a missing file is a network
/// error and nothing is downloaded. Checksum and network failures are
/// reported per file via distinct error variants.
pub fn fetch_dataset(
    base_url: &str,
    names: &[String],
    dest_dir: &Path,
    manifest: &mut ChecksumManifest,
    offline: bool,
) -> Result<Vec<FetchOutcome>> {
    fs::create_dir_all(dest_dir)?;
    let mut outcomes = Vec::with_capacity(names.len());
    for name in names {
        let dest: PathBuf = dest_dir.join(name);
        let expected = manifest.entries.get(name).cloned();

        let mut downloaded = false;
        if !dest.exists() {
            if offline {
                return Err(Error::Network {
                    url: format!("{base_url}/{name}"),
                    message: "file missing from cache and offline mode is set".into(),
                });
            }
            download(base_url, name, &dest)?;
            downloaded = true;
        }

        let actual = sha256_file(&dest)?;
        let status = match &expected {
            Some(hash) if *hash == actual => {
                if downloaded {
                    FetchStatus::Downloaded
                } else {
                    FetchStatus::CacheHit
                }
            }
            Some(hash) => {
                return Err(Error::ChecksumMismatch {
                    file: name.clone(),
                    expected: hash.clone(),
                    actual,
                });
            }
            None => {
                manifest.entries.insert(name.clone(), actual.clone());
                if downloaded {
                    FetchStatus::Downloaded
                } else {
                    FetchStatus::Recorded
                }
            }
        };
        outcomes.push(FetchOutcome {
            file: name.clone(),
            status,
            sha256: actual,
        });
    }
    Ok(outcomes)
}
