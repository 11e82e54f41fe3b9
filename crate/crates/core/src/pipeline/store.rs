//! Artifact directory with a JSON manifest of content hashes.
//!
//! Every file written through the store is hashed. A stage is recorded with a
//! key derived from its configuration and the hashes of its inputs, so a
//! rerun can tell whether its outputs are still current.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::container::{decode_matrix, encode_matrix, sha256_hex};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    /// File name to sha256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub generator: String,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self { format: 1, generator: format!("meshfree-rom {}", env!("CARGO_PKG_VERSION")), stages: BTreeMap::new() }
    }
}

#[derive(Debug)]
pub struct ArtifactStore {
    dir: PathBuf,
    manifest: Manifest,
}

impl ArtifactStore {
    /// Opens `dir`, creating it and an empty manifest if needed.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        if dir.join(MANIFEST).exists() {
            return Self::open(dir);
        }
        let store = Self { dir: dir.to_path_buf(), manifest: Manifest::default() };
        store.write_manifest()?;
        Ok(store)
    }

    /// Opens an existing store.
    pub fn open(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Format(format!("no manifest in {}: {e}", dir.display())))?;
        let manifest = serde_json::from_str(&text)?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_manifest(&self) -> Result<()> {
        let tmp = self.dir.join(format!("{MANIFEST}.tmp"));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(&tmp, text)?;
        std::fs::rename(tmp, self.dir.join(MANIFEST))?;
        Ok(())
    }

    /// Writes `bytes` to `name` and returns its hash.
    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<String> {
        std::fs::write(self.path(name), bytes)?;
        Ok(sha256_hex(bytes))
    }

    /// True when `stage` was recorded with `key` and all its files still hash correctly.
    pub fn is_current(&self, stage: &str, key: &str) -> bool {
        match self.manifest.stages.get(stage) {
            Some(rec) if rec.key == key => rec
                .files
                .iter()
                .all(|(name, hash)| std::fs::read(self.path(name)).map(|b| &sha256_hex(&b) == hash).unwrap_or(false)),
            _ => false,
        }
    }

    pub fn stage(&self, stage: &str) -> Option<&StageRecord> {
        self.manifest.stages.get(stage)
    }

    /// Records a finished stage and rewrites the manifest.
    pub fn commit(&mut self, stage: &str, key: String, files: BTreeMap<String, String>) -> Result<()> {
        self.manifest.stages.insert(stage.to_string(), StageRecord { key, files });
        self.write_manifest()
    }

    /// Reads `name`, checking it against the hash recorded by any stage.
    pub fn read_verified(&self, name: &str) -> Result<Vec<u8>> {
        let bytes = std::fs::read(self.path(name))?;
        let expected = self
            .manifest
            .stages
            .values()
            .find_map(|s| s.files.get(name))
            .ok_or_else(|| Error::Format(format!("{name} is not recorded in the manifest")))?;
        if &sha256_hex(&bytes) != expected {
            return Err(Error::Format(format!("{name} does not match its manifest hash")));
        }
        Ok(bytes)
    }

    pub fn read_matrix(&self, name: &str) -> Result<DMatrix<f64>> {
        decode_matrix(&self.read_verified(name)?)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, name: &str) -> Result<T> {
        Ok(serde_json::from_slice(&self.read_verified(name)?)?)
    }

    /// Hashes of every recorded file, for comparing runs.
    pub fn file_hashes(&self) -> BTreeMap<String, String> {
        self.manifest.stages.values().flat_map(|s| s.files.clone()).collect()
    }
}

/// Collects the files written by one stage.
#[derive(Debug, Default)]
pub struct StageFiles {
    files: BTreeMap<String, String>,
}

impl StageFiles {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn matrix(&mut self, store: &ArtifactStore, name: &str, m: &DMatrix<f64>) -> Result<()> {
        let hash = store.write_bytes(name, &encode_matrix(m)?)?;
        self.files.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, store: &ArtifactStore, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.bytes(store, name, text.as_bytes())
    }

    pub fn bytes(&mut self, store: &ArtifactStore, name: &str, bytes: &[u8]) -> Result<()> {
        let hash = store.write_bytes(name, bytes)?;
        self.files.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn into_map(self) -> BTreeMap<String, String> {
        self.files
    }
}

/// Stable key from any serializable description of a stage's inputs.
pub fn stage_key<T: Serialize>(inputs: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(inputs)?.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commit_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::create(dir.path()).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 0.1]);
        let mut files = StageFiles::new();
        files.matrix(&store, "a.pdnn", &m).unwrap();
        files.json(&store, "a.json", &vec![1, 2, 3]).unwrap();
        assert!(!store.is_current("a", "k1"));
        store.commit("a", "k1".into(), files.into_map()).unwrap();
        assert!(store.is_current("a", "k1"));
        assert!(!store.is_current("a", "k2"));

        let reopened = ArtifactStore::open(dir.path()).unwrap();
        assert_eq!(reopened.read_matrix("a.pdnn").unwrap(), m);
        assert_eq!(reopened.read_json::<Vec<i32>>("a.json").unwrap(), vec![1, 2, 3]);
        assert_eq!(reopened.manifest(), store.manifest());

        std::fs::write(dir.path().join("a.pdnn"), b"tampered").unwrap();
        assert!(!reopened.is_current("a", "k1"));
        assert!(reopened.read_matrix("a.pdnn").is_err());
        assert!(reopened.read_verified("missing").is_err());
    }

    #[test]
    fn keys_depend_on_content() {
        assert_eq!(stage_key(&(1, "x")).unwrap(), stage_key(&(1, "x")).unwrap());
        assert_ne!(stage_key(&(1, "x")).unwrap(), stage_key(&(2, "x")).unwrap());
    }

    #[test]
    fn open_requires_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ArtifactStore::open(dir.path()).is_err());
    }
}
