//! Run manifests and line-oriented file helpers. Every subcommand leaves a
//! `run.json` next to its outputs holding the exact config text, the seed,
//! and a content hash per output file, so a run can be audited or compared
//! byte for byte without rerunning it.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use medcurate_core::gateway::GatewayStats;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_MANIFEST_NAME: &str = "run.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    /// The config file as read, embedded verbatim.
    pub config_text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u64>,
    /// Output file name -> sha256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gateway: Option<GatewayStats>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_text: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            seed,
            config_sha256: hex::encode(Sha256::digest(config_text.as_bytes())),
            config_text: config_text.to_string(),
            counters: BTreeMap::new(),
            outputs: BTreeMap::new(),
            gateway: None,
        }
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_string(), value);
    }

    /// Hashes `name` under `dir` and records it. File names are stored
    /// relative to the output directory so manifests compare across
    /// machines.
    pub fn record_output(&mut self, dir: &Path, name: &str) -> anyhow::Result<()> {
        let digest = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(RUN_MANIFEST_NAME);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(&path, bytes)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Writes one JSON object per line. An empty slice still produces the file,
/// so reruns always emit the same set of outputs.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut out = std::io::BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL file, skipping blank lines; parse failures carry the
/// 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).with_context(|| {
            format!("{} line {}: malformed record", path.display(), idx + 1)
        })?;
        rows.push(row);
    }
    Ok(rows)
}
