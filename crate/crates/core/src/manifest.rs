//! Artifact manifests: a content-addressed registry of every file a serving
//! process loads, plus per-command run records. Manifests never contain
//! timestamps or host details — two runs with the same inputs, configs and
//! seeds must produce byte-identical manifests.
//!
//! The manifest hash (SHA-256 of the canonical JSON encoding) is the
//! identity of an artifact set: serving echoes it in every response so a
//! client can detect which generation of artifacts answered.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Standard artifact file names inside a run directory.
pub const FEATURES_FILE: &str = "features.json";
pub const DSR_CKPT_FILE: &str = "dsr.ckpt";
pub const DPR_CKPT_FILE: &str = "dpr.ckpt";
pub const INDEX_FILE: &str = "index.eidx";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Streaming file hash; does not load the file into memory.
pub fn sha256_hex_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// File-name -> SHA-256 registry for one artifact directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub schema_version: u32,
    pub files: BTreeMap<String, String>,
}

impl ArtifactManifest {
    /// Hash the named files under `dir`.
    pub fn collect(dir: &Path, names: &[&str]) -> Result<ArtifactManifest> {
        let mut files = BTreeMap::new();
        for &name in names {
            let path = dir.join(name);
            let digest = sha256_hex_file(&path)
                .map_err(|e| Error::data(format!("hashing {}: {e}", path.display())))?;
            files.insert(name.to_string(), digest);
        }
        Ok(ArtifactManifest { schema_version: MANIFEST_SCHEMA_VERSION, files })
    }

    /// Identity hash: SHA-256 of the compact canonical JSON encoding.
    /// BTreeMap keys make the encoding independent of insertion order.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = path.with_extension("tmp");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ArtifactManifest> {
        let path = dir.join(MANIFEST_FILE);
        let body = fs::read_to_string(&path)?;
        let manifest: ArtifactManifest = serde_json::from_str(&body)?;
        if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::data(format!(
                "unsupported manifest schema_version {}",
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }

    /// Re-hash every registered file and compare. Any missing file or digest
    /// drift is an error naming the offender.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (name, expected) in &self.files {
            let path = dir.join(name);
            let actual = sha256_hex_file(&path)
                .map_err(|_| Error::data(format!("manifest names missing file {name}")))?;
            if &actual != expected {
                return Err(Error::data(format!(
                    "artifact {name} does not match its manifest digest \
                     (expected {expected}, found {actual})"
                )));
            }
        }
        Ok(())
    }
}

/// Record of one CLI invocation: the command, its full config, and hashes of
/// everything read and written. No clocks, no hostnames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(command: &str, seed: u64, config: serde_json::Value) -> RunRecord {
        RunRecord {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn add_input(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.inputs.insert(name.to_string(), sha256_hex_file(&dir.join(name))?);
        Ok(())
    }

    pub fn add_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs.insert(name.to_string(), sha256_hex_file(&dir.join(name))?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        let mut body = serde_json::to_string_pretty(self)?;
        body.push('\n');
        fs::write(&tmp, body)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// FIPS 180-2 test vectors.
    #[test]
    fn sha256_known_vectors() {
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
    fn file_hash_matches_buffer_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blob");
        let data: Vec<u8> = (0..3_000_000u32).map(|i| (i % 251) as u8).collect();
        fs::write(&path, &data).unwrap();
        assert_eq!(sha256_hex_file(&path).unwrap(), sha256_hex(&data));
    }

    #[test]
    fn manifest_roundtrip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.bin"), b"alpha").unwrap();
        fs::write(dir.path().join("b.bin"), b"beta").unwrap();
        let manifest = ArtifactManifest::collect(dir.path(), &["a.bin", "b.bin"]).unwrap();
        manifest.write(dir.path()).unwrap();
        let loaded = ArtifactManifest::load(dir.path()).unwrap();
        assert_eq!(loaded, manifest);
        loaded.verify(dir.path()).unwrap();

        // Tampering must be caught and must name the file.
        fs::write(dir.path().join("b.bin"), b"poisoned").unwrap();
        let err = loaded.verify(dir.path()).unwrap_err();
        assert!(err.to_string().contains("b.bin"), "got: {err}");

        // A missing file must be caught too.
        fs::remove_file(dir.path().join("a.bin")).unwrap();
        assert!(loaded.verify(dir.path()).is_err());
    }

    #[test]
    fn manifest_hash_is_canonical() {
        let mut m1 = ArtifactManifest { schema_version: MANIFEST_SCHEMA_VERSION, files: BTreeMap::new() };
        m1.files.insert("z.bin".into(), "00".into());
        m1.files.insert("a.bin".into(), "ff".into());
        let mut m2 = ArtifactManifest { schema_version: MANIFEST_SCHEMA_VERSION, files: BTreeMap::new() };
        m2.files.insert("a.bin".into(), "ff".into());
        m2.files.insert("z.bin".into(), "00".into());
        assert_eq!(m1.hash(), m2.hash());
        let mut m3 = m2.clone();
        m3.files.insert("a.bin".into(), "fe".into());
        assert_ne!(m1.hash(), m3.hash());
    }

    #[test]
    fn manifest_file_bytes_are_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        for d in [&d1, &d2] {
            fs::write(d.path().join("x.bin"), b"payload").unwrap();
            ArtifactManifest::collect(d.path(), &["x.bin"]).unwrap().write(d.path()).unwrap();
        }
        assert_eq!(
            fs::read(d1.path().join(MANIFEST_FILE)).unwrap(),
            fs::read(d2.path().join(MANIFEST_FILE)).unwrap()
        );
    }

    #[test]
    fn run_record_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("in.jsonl"), b"{}\n").unwrap();
        fs::write(dir.path().join("out.bin"), b"\x00\x01").unwrap();
        let mut rec = RunRecord::new("train-thing", 42, serde_json::json!({"lr": 0.001}));
        rec.add_input(dir.path(), "in.jsonl").unwrap();
        rec.add_output(dir.path(), "out.bin").unwrap();
        let path = dir.path().join("runs").join("train-thing.json");
        rec.write(&path).unwrap();
        let body = fs::read_to_string(&path).unwrap();
        let back: RunRecord = serde_json::from_str(&body).unwrap();
        assert_eq!(back, rec);
        assert_eq!(back.inputs.len(), 1);
        assert_eq!(back.outputs.len(), 1);
    }
}
