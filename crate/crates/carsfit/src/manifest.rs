//! Run manifests: one per command invocation, enough to rerun it and check
//! that every output is reproduced byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::Command;
use crate::error::{Error, Result};
use crate::formats::{read_versioned, sha256_file, write_json};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    /// Fully resolved command, defaults included and paths absolute.
    pub command: Command,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of every input file, keyed by absolute path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every reproducible output, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    /// Outputs that hold wall-clock measurements and are not compared.
    pub volatile: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

/// Files a command read and wrote, collected while it runs.
#[derive(Debug, Default, Clone)]
pub struct RunRecord {
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    pub volatile: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunRecord {
    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, name: &str) {
        self.outputs.push(name.into());
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }
}

fn hash_map<'a>(
    paths: impl IntoIterator<Item = (String, &'a Path)>,
) -> Result<BTreeMap<String, String>> {
    paths
        .into_iter()
        .map(|(key, path)| Ok((key, sha256_file(path)?)))
        .collect()
}

impl RunManifest {
    pub fn build(command: Command, record: RunRecord, out_dir: &Path) -> Result<Self> {
        let inputs = hash_map(
            record
                .inputs
                .iter()
                .map(|p| (p.display().to_string(), p.as_path())),
        )?;
        let out_paths: Vec<(String, PathBuf)> = record
            .outputs
            .iter()
            .map(|name| (name.clone(), out_dir.join(name)))
            .collect();
        let outputs = hash_map(out_paths.iter().map(|(k, p)| (k.clone(), p.as_path())))?;
        Ok(RunManifest {
            schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command,
            seeds: record.seeds,
            inputs,
            outputs,
            volatile: record.volatile,
            timings: record.timings,
        })
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        write_json(&out_dir.join(MANIFEST_FILE), self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_versioned(path, "manifest", MANIFEST_SCHEMA)
    }

    /// Inputs whose current contents no longer match the recorded hash.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|(path, hash)| {
                sha256_file(Path::new(path.as_str())).map_or(true, |h| &h != *hash)
            })
            .map(|(p, _)| p.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub out_dir: PathBuf,
    pub matched: Vec<String>,
    /// Outputs whose hash differs from the manifest, or that are missing.
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Compares the outputs recorded in `original` with those in `replayed`.
pub fn compare_outputs(
    original: &RunManifest,
    replayed: &RunManifest,
    out_dir: &Path,
) -> ReplayReport {
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    for (name, hash) in &original.outputs {
        if replayed.outputs.get(name) == Some(hash) {
            matched.push(name.clone());
        } else {
            mismatched.push(name.clone());
        }
    }
    ReplayReport {
        out_dir: out_dir.to_path_buf(),
        matched,
        mismatched,
    }
}

pub fn ensure_inputs_unchanged(manifest: &RunManifest) -> Result<()> {
    let changed = manifest.changed_inputs();
    if changed.is_empty() {
        Ok(())
    } else {
        Err(Error::Replay(format!(
            "inputs changed since the recorded run: {}",
            changed.join(", ")
        )))
    }
}
