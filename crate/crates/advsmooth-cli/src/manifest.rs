//! Run manifests: every subcommand leaves a `manifest.json` next to its
//! artifacts recording the effective config (after any seed override), the
//! hash of the config file as given, and the SHA-256 of every artifact it
//! wrote. A run is therefore reproducible from its manifest alone: re-running
//! the echoed config must reproduce files with the listed hashes (up to
//! fields that record wall-clock time, which the training metrics include).

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::configs::SCHEMA_VERSION;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    /// Config file as passed on the command line.
    pub config_path: String,
    /// SHA-256 of the config file bytes as given (before any override).
    pub config_sha256: String,
    /// Effective config after applying the seed override, echoed in full.
    pub config: serde_json::Value,
    pub seed_override: Option<u64>,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Serialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Hash a just-written artifact back in so the manifest records what
/// actually landed on disk.
pub fn artifact_record(dir: &Path, file: &str) -> Result<ArtifactRecord, CliError> {
    let path = dir.join(file);
    let bytes = std::fs::read(&path)
        .map_err(|e| CliError::config(path.display().to_string(), format!("unreadable: {e}")))?;
    Ok(ArtifactRecord {
        file: file.to_string(),
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

impl RunManifest {
    pub fn new(
        subcommand: &'static str,
        config_path: &Path,
        config_sha256: String,
        config: serde_json::Value,
        seed_override: Option<u64>,
    ) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config_path: config_path.display().to_string(),
            config_sha256,
            config,
            seed_override,
            artifacts: Vec::new(),
        }
    }

    pub fn push_artifact(&mut self, dir: &Path, file: &str) -> Result<(), CliError> {
        self.artifacts.push(artifact_record(dir, file)?);
        Ok(())
    }

    /// Write `manifest.json` into `dir` (the manifest does not list itself).
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::config("manifest", e))?;
        std::fs::write(&path, json)
            .map_err(|e| CliError::config(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_the_known_empty_and_abc_digests() {
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips_artifact_hashes() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("out.csv"), b"theta1,theta2,value\n").unwrap();
        let mut m = RunManifest::new(
            "surface",
            Path::new("cfg.json"),
            sha256_hex(b"{}"),
            serde_json::json!({}),
            Some(7),
        );
        m.push_artifact(dir.path(), "out.csv").unwrap();
        m.write(dir.path()).unwrap();

        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["subcommand"], "surface");
        assert_eq!(v["seed_override"], 7);
        assert_eq!(v["artifacts"][0]["file"], "out.csv");
        assert_eq!(
            v["artifacts"][0]["sha256"],
            sha256_hex(b"theta1,theta2,value\n").as_str()
        );
    }
}
