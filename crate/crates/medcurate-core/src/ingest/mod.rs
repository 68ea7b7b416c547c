//! Dataset registry and annotation-style adapters.
//!
//! Source datasets are registered once with a name, modality, annotation
//! style, and a manifest path; the registry persists to a JSON file so
//! pipeline runs agree on what a dataset name means. Ingesting a dataset
//! parses its manifest (CSV or JSONL, chosen by file extension) into
//! neutral [`IngestRecord`]s. Rows that fail to parse are never dropped
//! silently: they come back as [`RejectEntry`] values and the row counts
//! always reconcile, `rows_in == records + rejects`.

mod adapters;
mod volume;

pub use adapters::ingest_dataset;
pub use volume::{sample_slice_indices, serialize_volume, VolumeSource};

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{MediaRef, ModalityTag};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("dataset {name:?} is already registered")]
    DuplicateDataset { name: String },
    #[error("manifest {path} is not readable")]
    UnreadableManifest { path: PathBuf },
    #[error("{path}: manifest is missing required field {field:?}")]
    SchemaMismatch { path: PathBuf, field: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("label dataset {dataset:?} registered without a vocabulary")]
    VocabularyMissing { dataset: String },
    #[error("registry file {path} is corrupt: {source}")]
    CorruptRegistry {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("volume header {path} is invalid: {message}")]
    BadVolumeHeader { path: PathBuf, message: String },
    #[error("volume {dir}: header says depth {header} but {found} slices present")]
    DepthMismatch { dir: PathBuf, header: u32, found: usize },
    #[error("volume {dir} contains no slice images")]
    NoSlices { dir: PathBuf },
    #[error("slice spec wants {k} slices from a depth-{depth} volume (need 2 <= k <= depth)")]
    BadSliceSpec { k: u32, depth: u32 },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// How a dataset's manifest rows are annotated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationStyle {
    Caption,
    Mask,
    Label,
    Volume,
    Video,
}

/// One registered source dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRegistration {
    pub name: String,
    pub modality: ModalityTag,
    pub style: AnnotationStyle,
    /// Manifest file, relative to the registry root.
    pub manifest_path: String,
    /// Full label set for classification datasets; required when `style`
    /// is `Label`, ignored otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_vocabulary: Option<Vec<String>>,
}

/// Axis-aligned box in pixel coordinates, `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl BoundingBox {
    /// Checks the box is non-degenerate and inside a `width` x `height`
    /// image.
    pub fn check_within(&self, width: u32, height: u32) -> Result<(), String> {
        if self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(format!(
                "invalid bounding box: ({},{})-({},{}) is degenerate",
                self.x0, self.y0, self.x1, self.y1
            ));
        }
        if self.x1 > width || self.y1 > height {
            return Err(format!(
                "invalid bounding box: ({},{})-({},{}) exceeds {}x{} image",
                self.x0, self.y0, self.x1, self.y1, width, height
            ));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.x0 + self.x1) as f64 / 2.0,
            (self.y0 + self.y1) as f64 / 2.0,
        )
    }
}

/// Source annotation carried by an ingested row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "style", rename_all = "lowercase")]
pub enum Annotation {
    Caption { text: String },
    MaskRegion {
        bbox: BoundingBox,
        /// Anatomical name for the region when the source provides one.
        #[serde(skip_serializing_if = "Option::is_none")]
        region_label: Option<String>,
        image_width: u32,
        image_height: u32,
    },
    ClassLabel { label: String, vocabulary: Vec<String> },
    VolumeAnnotation {
        #[serde(skip_serializing_if = "Option::is_none")]
        question: Option<String>,
        answer: String,
    },
    VideoCaption { text: String },
}

/// One parsed source row, ready for synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRecord {
    pub dataset: String,
    pub key: String,
    pub media: MediaRef,
    pub annotation: Annotation,
}

/// A row the adapter could not turn into a record, with the reason kept for
/// audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectEntry {
    pub key: String,
    pub reason: String,
}

/// Everything one ingest run produced. `rows_in` counts data rows seen in
/// the manifest and always equals `records.len() + rejects.len()`.
#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub rows_in: u64,
    pub records: Vec<IngestRecord>,
    pub rejects: Vec<RejectEntry>,
}

/// Number of slices to sample and the depth to sample them from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceSampleSpec {
    pub k: u32,
    pub depth: u32,
}

impl SliceSampleSpec {
    pub fn new(k: u32, depth: u32) -> Result<Self, IngestError> {
        if k < 2 || k > depth {
            return Err(IngestError::BadSliceSpec { k, depth });
        }
        Ok(SliceSampleSpec { k, depth })
    }
}

/// Persistent name -> registration map, stored as pretty JSON. Relative
/// manifest paths resolve against the registry file's directory.
#[derive(Debug)]
pub struct Registry {
    path: PathBuf,
    root: PathBuf,
    datasets: BTreeMap<String, DatasetRegistration>,
}

impl Registry {
    /// Opens an existing registry file, or starts an empty registry that
    /// will be created at `path` on first registration.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, IngestError> {
        let path = path.into();
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let datasets = if path.exists() {
            let bytes = std::fs::read(&path)
                .map_err(|source| IngestError::Io { path: path.clone(), source })?;
            serde_json::from_slice(&bytes)
                .map_err(|source| IngestError::CorruptRegistry { path: path.clone(), source })?
        } else {
            BTreeMap::new()
        };
        Ok(Registry { path, root, datasets })
    }

    /// Registers a dataset and persists the registry. The name must be
    /// unused and the manifest readable; label datasets must carry a
    /// vocabulary.
    pub fn register(&mut self, reg: DatasetRegistration) -> Result<&DatasetRegistration, IngestError> {
        if self.datasets.contains_key(&reg.name) {
            return Err(IngestError::DuplicateDataset { name: reg.name });
        }
        if reg.style == AnnotationStyle::Label && reg.label_vocabulary.is_none() {
            return Err(IngestError::VocabularyMissing { dataset: reg.name });
        }
        let manifest = self.root.join(&reg.manifest_path);
        if std::fs::File::open(&manifest).is_err() {
            return Err(IngestError::UnreadableManifest { path: manifest });
        }
        let name = reg.name.clone();
        self.datasets.insert(name.clone(), reg);
        self.persist()?;
        Ok(&self.datasets[&name])
    }

    pub fn get(&self, name: &str) -> Option<&DatasetRegistration> {
        self.datasets.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetRegistration> {
        self.datasets.values()
    }

    /// Directory that relative manifest and media paths resolve against.
    pub fn root(&self) -> &Path {
        &self.root
    }

    fn persist(&self) -> Result<(), IngestError> {
        let mut bytes = serde_json::to_vec_pretty(&self.datasets).expect("registry serializes");
        bytes.push(b'\n');
        std::fs::write(&self.path, bytes)
            .map_err(|source| IngestError::Io { path: self.path.clone(), source })
    }
}
