//! Output collection and the per-run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::hex;
use super::io::write_file;
use crate::error::Result;

pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub name: String,
    pub seconds: f64,
}

/// Everything needed to reproduce a run. Timings are the only
/// nondeterministic content, which is why the manifest itself is excluded
/// from byte-identity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub package: String,
    pub version: String,
    pub threads: usize,
    pub seeds: BTreeMap<String, u64>,
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageTiming>,
}

/// Buffers outputs in memory so they are written once, at the end.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
    stages: Vec<StageTiming>,
    seeds: BTreeMap<String, u64>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(name.into(), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.keys().map(String::as_str)
    }

    /// Runs `f` and records its wall-clock time under `name`.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f(self);
        self.stages.push(StageTiming {
            name: name.to_string(),
            seconds: t.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes every buffered file plus the manifest; returns the written paths.
    pub fn write(self, dir: &Path, command: &str, config_sha256: String, threads: usize) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut files = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            write_file(&path, bytes)?;
            files.push(FileEntry {
                path: name.clone(),
                bytes: bytes.len(),
                sha256: hex(&Sha256::digest(bytes)),
            });
            written.push(path);
        }
        let manifest = RunManifest {
            command: command.to_string(),
            config_sha256,
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            seeds: self.seeds,
            files,
            stages: self.stages,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        let path = dir.join(MANIFEST_NAME);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(written)
    }
}
