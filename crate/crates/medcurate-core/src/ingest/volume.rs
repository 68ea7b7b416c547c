//! 3D volume handling: slice directories, evenly spaced sampling, and RGB
//! slice-series export.
//!
//! A volume on disk is a directory of 2D slice images in lexicographic
//! filename order plus a `volume.json` header recording depth and voxel
//! spacing. Native DICOM or NIfTI parsing is deliberately out of scope;
//! converting to slice directories is the caller's job.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{IngestError, SliceSampleSpec};
use crate::sample::MediaRef;

pub const VOLUME_HEADER: &str = "volume.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VolumeHeader {
    depth: u32,
    spacing: [f64; 3],
}

/// An opened volume directory, header checked against the slice files.
#[derive(Debug, Clone)]
pub struct VolumeSource {
    dir: PathBuf,
    depth: u32,
    spacing: [f64; 3],
    slice_files: Vec<PathBuf>,
}

impl VolumeSource {
    /// Opens `dir`, reads `volume.json`, and lists slice files in
    /// lexicographic order. Fails if the header is missing or malformed, no
    /// slices are present, or the slice count disagrees with the header
    /// depth.
    pub fn open(dir: &Path) -> Result<Self, IngestError> {
        let header_path = dir.join(VOLUME_HEADER);
        let bytes = std::fs::read(&header_path)
            .map_err(|source| IngestError::Io { path: header_path.clone(), source })?;
        let header: VolumeHeader =
            serde_json::from_slice(&bytes).map_err(|e| IngestError::BadVolumeHeader {
                path: header_path.clone(),
                message: e.to_string(),
            })?;
        if header.depth == 0 {
            return Err(IngestError::BadVolumeHeader {
                path: header_path,
                message: "depth must be positive".into(),
            });
        }

        let mut slice_files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != VOLUME_HEADER))
            .collect();
        slice_files.sort();

        if slice_files.is_empty() {
            return Err(IngestError::NoSlices { dir: dir.to_path_buf() });
        }
        if slice_files.len() != header.depth as usize {
            return Err(IngestError::DepthMismatch {
                dir: dir.to_path_buf(),
                header: header.depth,
                found: slice_files.len(),
            });
        }
        Ok(VolumeSource {
            dir: dir.to_path_buf(),
            depth: header.depth,
            spacing: header.spacing,
            slice_files,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Slice file names in depth order.
    pub fn slice_names(&self) -> impl Iterator<Item = String> + '_ {
        self.slice_files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
    }
}

/// Evenly spaced slice indices over depth `D`: `i_j = round(j * (D-1) /
/// (k-1))` with round-half-up, so the first and last slice are always
/// included.
pub fn sample_slice_indices(spec: &SliceSampleSpec) -> Result<Vec<u32>, IngestError> {
    let spec = SliceSampleSpec::new(spec.k, spec.depth)?;
    let d = (spec.depth - 1) as u64;
    let k = (spec.k - 1) as u64;
    Ok((0..=k).map(|j| ((2 * j * d + k) / (2 * k)) as u32).collect())
}

/// Samples `spec.k` slices from `volume`, exports each as an RGB PNG under
/// `media_root/rel_dir`, and returns the slice-series media reference with
/// paths relative to `media_root`. Grayscale slices are replicated across
/// the three channels.
pub fn serialize_volume(
    volume: &VolumeSource,
    spec: &SliceSampleSpec,
    media_root: &Path,
    rel_dir: &str,
) -> Result<MediaRef, IngestError> {
    let spec = SliceSampleSpec::new(spec.k, volume.depth)?;
    let indices = sample_slice_indices(&spec)?;

    let out_dir = media_root.join(rel_dir);
    std::fs::create_dir_all(&out_dir)
        .map_err(|source| IngestError::Io { path: out_dir.clone(), source })?;

    let mut slices = Vec::with_capacity(indices.len());
    for (j, &idx) in indices.iter().enumerate() {
        let src = &volume.slice_files[idx as usize];
        let img = image::open(src)
            .map_err(|source| IngestError::Image { path: src.clone(), source })?;
        let name = format!("slice{j:02}_z{idx:05}.png");
        let dst = out_dir.join(&name);
        img.to_rgb8()
            .save(&dst)
            .map_err(|source| IngestError::Image { path: dst, source })?;
        slices.push(format!("{rel_dir}/{name}"));
    }
    Ok(MediaRef::SliceSeries { slices, source_depth: volume.depth })
}
