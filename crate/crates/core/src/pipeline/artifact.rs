//! Versioned stage artifacts.
//!
//! Each stage writes its outputs atomically (temp + rename) and records a
//! `<stage>.meta.json` with the config hash, the hashes of every input
//! artifact it consumed, and the hashes of every output it produced.
//! Downstream stages verify both sides of that chain, so a report can never
//! silently mix artifacts from different configurations or stale files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::fetch::sha256_file;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub config_hash: String,
    /// filename -> sha256 of consumed artifacts (and raw data for ingest).
    pub inputs: BTreeMap<String, String>,
    /// filename -> sha256 of produced artifacts.
    pub outputs: BTreeMap<String, String>,
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects output files into a meta record and writes it.
pub fn finish_stage(
    out_dir: &Path,
    stage: &str,
    config_hash: &str,
    inputs: BTreeMap<String, String>,
    output_files: &[&str],
) -> Result<StageMeta> {
    let mut outputs = BTreeMap::new();
    for name in output_files {
        outputs.insert(name.to_string(), sha256_file(&out_dir.join(name))?);
    }
    let meta = StageMeta {
        stage: stage.to_string(),
        config_hash: config_hash.to_string(),
        inputs,
        outputs,
    };
    write_atomic(
        &out_dir.join(format!("{stage}.meta.json")),
        &serde_json::to_vec_pretty(&meta)?,
    )?;
    Ok(meta)
}

/// Abbreviates a hash for error messages.
pub(crate) fn short(hash: &str) -> &str {
    &hash[..hash.len().min(12)]
}

pub fn load_meta(out_dir: &Path, stage: &str) -> Result<StageMeta> {
    let path = out_dir.join(format!("{stage}.meta.json"));
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: stage.to_string(),
            path,
        });
    }
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Resolves one artifact produced by `stage`, verifying that it exists,
/// that its producer ran under the same config, and that its bytes still
/// match the recorded hash. Returns the path and the artifact's hash for
/// the consumer's own meta record.
pub fn require_artifact(
    out_dir: &Path,
    stage: &str,
    file: &str,
    config_hash: &str,
) -> Result<(PathBuf, String)> {
    let meta = load_meta(out_dir, stage)?;
    if meta.config_hash != config_hash {
        return Err(Error::HashMismatch(format!(
            "{file} was produced by `{stage}` under config {} but the current config is {}",
            short(&meta.config_hash),
            short(config_hash)
        )));
    }
    let recorded = meta
        .outputs
        .get(file)
        .ok_or_else(|| Error::MissingArtifact {
            stage: stage.to_string(),
            path: out_dir.join(file),
        })?;
    let path = out_dir.join(file);
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: stage.to_string(),
            path,
        });
    }
    let actual = sha256_file(&path)?;
    if actual != *recorded {
        return Err(Error::HashMismatch(format!(
            "{file} changed on disk since `{stage}` produced it"
        )));
    }
    Ok((path, actual))
}
