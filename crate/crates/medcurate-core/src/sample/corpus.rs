//! JSONL corpus files and their sidecar manifests.
//!
//! A corpus is UTF-8 JSON Lines, one sample per line, LF line endings, keys
//! in struct declaration order. Writing a corpus also writes
//! `<path>.manifest.json` recording the sample count, counts per modality
//! and per task, and the sha256 of the corpus bytes, so downstream stages
//! can verify inputs without reparsing.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{validate, VqaSample};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed sample: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: sample {id:?} violates schema: {reasons}")]
    Invalid {
        path: PathBuf,
        line: usize,
        id: String,
        reasons: String,
    },
    #[error("duplicate sample id {id:?}")]
    DuplicateId { id: String },
    #[error("manifest serialization failed: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

/// Sidecar summary written next to every corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub count: u64,
    pub by_modality: BTreeMap<String, u64>,
    pub by_task: BTreeMap<String, u64>,
    /// Hex sha256 of the corpus file bytes.
    pub sha256: String,
}

/// Streaming corpus writer. Samples are validated and checked for id
/// collisions as they are appended; [`CorpusWriter::finish`] writes the
/// sidecar manifest and returns it.
pub struct CorpusWriter {
    path: PathBuf,
    out: BufWriter<File>,
    hasher: Sha256,
    seen_ids: BTreeSet<String>,
    count: u64,
    by_modality: BTreeMap<String, u64>,
    by_task: BTreeMap<String, u64>,
}

impl CorpusWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let path = path.into();
        let file = File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(CorpusWriter {
            path,
            out: BufWriter::new(file),
            hasher: Sha256::new(),
            seen_ids: BTreeSet::new(),
            count: 0,
            by_modality: BTreeMap::new(),
            by_task: BTreeMap::new(),
        })
    }

    /// Appends one sample. Rejects schema violations and duplicate ids.
    pub fn append(&mut self, sample: &VqaSample) -> Result<(), CorpusError> {
        let result = validate(sample);
        if !result.is_pass() {
            return Err(CorpusError::Invalid {
                path: self.path.clone(),
                line: self.count as usize + 1,
                id: sample.id.clone(),
                reasons: result.codes().join(", "),
            });
        }
        if !self.seen_ids.insert(sample.id.clone()) {
            return Err(CorpusError::DuplicateId { id: sample.id.clone() });
        }
        let mut line = serde_json::to_vec(sample)?;
        line.push(b'\n');
        self.out.write_all(&line).map_err(|e| CorpusError::io(&self.path, e))?;
        self.hasher.update(&line);
        self.count += 1;
        *self.by_modality.entry(sample.modality.to_string()).or_insert(0) += 1;
        *self.by_task.entry(sample.task.to_string()).or_insert(0) += 1;
        Ok(())
    }

    /// Flushes the corpus, writes `<path>.manifest.json`, and returns the
    /// manifest.
    pub fn finish(mut self) -> Result<CorpusManifest, CorpusError> {
        self.out.flush().map_err(|e| CorpusError::io(&self.path, e))?;
        let manifest = CorpusManifest {
            count: self.count,
            by_modality: self.by_modality,
            by_task: self.by_task,
            sha256: hex::encode(self.hasher.finalize()),
        };
        let manifest_path = manifest_path_for(&self.path);
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        std::fs::write(&manifest_path, bytes).map_err(|e| CorpusError::io(&manifest_path, e))?;
        Ok(manifest)
    }
}

/// `corpus.jsonl` gets `corpus.jsonl.manifest.json`.
pub fn manifest_path_for(corpus_path: &Path) -> PathBuf {
    let mut name = corpus_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    corpus_path.with_file_name(name)
}

/// Writes all of `samples` to `path` and returns the manifest.
pub fn write_corpus<'a>(
    path: impl Into<PathBuf>,
    samples: impl IntoIterator<Item = &'a VqaSample>,
) -> Result<CorpusManifest, CorpusError> {
    let mut writer = CorpusWriter::create(path)?;
    for sample in samples {
        writer.append(sample)?;
    }
    writer.finish()
}

/// Iterator over samples in a corpus file. Parse and validation failures
/// surface as errors carrying the 1-based line number.
pub struct CorpusReader {
    path: PathBuf,
    lines: io::Lines<BufReader<File>>,
    line_no: usize,
}

impl CorpusReader {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let path = path.into();
        let file = File::open(&path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(CorpusReader { path, lines: BufReader::new(file).lines(), line_no: 0 })
    }
}

impl Iterator for CorpusReader {
    type Item = Result<VqaSample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(CorpusError::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let sample: VqaSample = match serde_json::from_str(&line) {
                Ok(sample) => sample,
                Err(source) => {
                    return Some(Err(CorpusError::Malformed {
                        path: self.path.clone(),
                        line: self.line_no,
                        source,
                    }))
                }
            };
            let result = validate(&sample);
            if !result.is_pass() {
                return Some(Err(CorpusError::Invalid {
                    path: self.path.clone(),
                    line: self.line_no,
                    id: sample.id,
                    reasons: result.codes().join(", "),
                }));
            }
            return Some(Ok(sample));
        }
    }
}

/// Reads a whole corpus into memory.
pub fn read_corpus(path: impl Into<PathBuf>) -> Result<Vec<VqaSample>, CorpusError> {
    CorpusReader::open(path)?.collect()
}
