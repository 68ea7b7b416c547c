//! Manifest row parsing for each annotation style.
//!
//! Manifests are flat tables: CSV with a header row, or JSONL with one
//! object per line (chosen by the `.csv` extension). Both forms are
//! normalized to string-keyed rows before conversion, so the per-style
//! logic is shared. A manifest missing a required field fails fast with a
//! schema error; an individual row that cannot be converted becomes a
//! reject entry instead.
//!
//! Expected fields per style:
//!
//! | style   | fields                                                    |
//! |---------|-----------------------------------------------------------|
//! | caption | `key, image, caption`                                     |
//! | mask    | `key, image, width, height, x0, y0, x1, y1` (+ optional `region_label`) |
//! | label   | `key, image, label`                                       |
//! | volume  | `key, volume_dir, answer` (+ optional `question`)         |
//! | video   | `key, video, frame_count, fps, width, height, caption`    |

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::volume::VolumeSource;
use super::{
    Annotation, AnnotationStyle, BoundingBox, DatasetRegistration, IngestError, IngestOutcome,
    IngestRecord, RejectEntry,
};
use crate::sample::MediaRef;

type Row = BTreeMap<String, String>;

/// Parses the dataset's manifest under `root` into records and rejects.
///
/// Media paths from the manifest are stored verbatim (relative to `root`);
/// volume rows additionally open the volume directory to verify it is
/// decodable, rejecting rows whose volumes are not.
pub fn ingest_dataset(
    reg: &DatasetRegistration,
    root: &Path,
) -> Result<IngestOutcome, IngestError> {
    let manifest = root.join(&reg.manifest_path);
    let rows = read_rows(&manifest)?;
    check_required_fields(&manifest, reg.style, &rows)?;

    let mut outcome = IngestOutcome::default();
    for (row_no, row) in rows {
        outcome.rows_in += 1;
        let key = row.get("key").cloned().unwrap_or_else(|| format!("row {row_no}"));
        match convert_row(reg, root, &row) {
            Ok(record) => outcome.records.push(record),
            Err(reason) => outcome.rejects.push(RejectEntry { key, reason }),
        }
    }
    Ok(outcome)
}

/// Reads the manifest into (line number, row) pairs.
fn read_rows(manifest: &Path) -> Result<Vec<(usize, Row)>, IngestError> {
    if manifest.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_csv_rows(manifest)
    } else {
        read_jsonl_rows(manifest)
    }
}

fn read_csv_rows(manifest: &Path) -> Result<Vec<(usize, Row)>, IngestError> {
    let mut reader = csv::Reader::from_path(manifest)
        .map_err(|source| IngestError::Csv { path: manifest.to_path_buf(), source })?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|source| IngestError::Csv { path: manifest.to_path_buf(), source })?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record =
            record.map_err(|source| IngestError::Csv { path: manifest.to_path_buf(), source })?;
        let row: Row = headers
            .iter()
            .zip(record.iter())
            .map(|(h, v)| (h.clone(), v.to_string()))
            .collect();
        rows.push((i + 2, row));
    }
    Ok(rows)
}

fn read_jsonl_rows(manifest: &Path) -> Result<Vec<(usize, Row)>, IngestError> {
    let file = std::fs::File::open(manifest)
        .map_err(|source| IngestError::Io { path: manifest.to_path_buf(), source })?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line =
            line.map_err(|source| IngestError::Io { path: manifest.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        // Unparseable lines still count as rows; they surface as rejects
        // through the missing-key path in convert_row.
        let row = match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line) {
            Ok(object) => object.into_iter().map(|(k, v)| (k, json_to_string(v))).collect(),
            Err(e) => {
                let mut row = Row::new();
                row.insert("__parse_error".into(), e.to_string());
                row
            }
        };
        rows.push((i + 1, row));
    }
    Ok(rows)
}

fn json_to_string(value: serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

fn required_fields(style: AnnotationStyle) -> &'static [&'static str] {
    match style {
        AnnotationStyle::Caption => &["key", "image", "caption"],
        AnnotationStyle::Mask => &["key", "image", "width", "height", "x0", "y0", "x1", "y1"],
        AnnotationStyle::Label => &["key", "image", "label"],
        AnnotationStyle::Volume => &["key", "volume_dir", "answer"],
        AnnotationStyle::Video => {
            &["key", "video", "frame_count", "fps", "width", "height", "caption"]
        }
    }
}

/// The first well-formed row must carry every required field; a manifest
/// that doesn't is a schema mismatch, not a per-row problem.
fn check_required_fields(
    manifest: &Path,
    style: AnnotationStyle,
    rows: &[(usize, Row)],
) -> Result<(), IngestError> {
    let Some((_, first)) = rows.iter().find(|(_, r)| !r.contains_key("__parse_error")) else {
        return Ok(());
    };
    for field in required_fields(style) {
        if !first.contains_key(*field) {
            return Err(IngestError::SchemaMismatch {
                path: manifest.to_path_buf(),
                field: (*field).to_string(),
            });
        }
    }
    Ok(())
}

fn convert_row(
    reg: &DatasetRegistration,
    root: &Path,
    row: &Row,
) -> Result<IngestRecord, String> {
    if let Some(e) = row.get("__parse_error") {
        return Err(format!("unparseable row: {e}"));
    }
    let key = non_empty(row, "key")?;
    let (media, annotation) = match reg.style {
        AnnotationStyle::Caption => (
            MediaRef::image(non_empty(row, "image")?),
            Annotation::Caption { text: non_empty(row, "caption")? },
        ),
        AnnotationStyle::Label => {
            let label = non_empty(row, "label")?;
            let vocabulary = reg.label_vocabulary.clone().unwrap_or_default();
            if !vocabulary.iter().any(|v| v == &label) {
                return Err(format!("label not in vocabulary: {label:?}"));
            }
            (MediaRef::image(non_empty(row, "image")?), Annotation::ClassLabel { label, vocabulary })
        }
        AnnotationStyle::Mask => {
            let image_width = parse_num::<u32>(row, "width")?;
            let image_height = parse_num::<u32>(row, "height")?;
            let bbox = BoundingBox {
                x0: parse_num(row, "x0")?,
                y0: parse_num(row, "y0")?,
                x1: parse_num(row, "x1")?,
                y1: parse_num(row, "y1")?,
            };
            bbox.check_within(image_width, image_height)?;
            (
                MediaRef::image(non_empty(row, "image")?),
                Annotation::MaskRegion {
                    bbox,
                    region_label: row
                        .get("region_label")
                        .filter(|l| !l.trim().is_empty())
                        .cloned(),
                    image_width,
                    image_height,
                },
            )
        }
        AnnotationStyle::Volume => {
            let dir = non_empty(row, "volume_dir")?;
            let volume = VolumeSource::open(&root.join(&dir))
                .map_err(|e| format!("volume unreadable: {e}"))?;
            let slices = volume
                .slice_names()
                .map(|name| format!("{dir}/{name}"))
                .collect();
            let question = row.get("question").filter(|q| !q.trim().is_empty()).cloned();
            (
                MediaRef::SliceSeries { slices, source_depth: volume.depth() },
                Annotation::VolumeAnnotation { question, answer: non_empty(row, "answer")? },
            )
        }
        AnnotationStyle::Video => {
            let frame_count = parse_num::<u32>(row, "frame_count")?;
            let fps = parse_num::<f64>(row, "fps")?;
            if frame_count == 0 {
                return Err("frame_count must be positive".into());
            }
            if fps.is_nan() || fps <= 0.0 {
                return Err(format!("fps must be positive, got {fps}"));
            }
            (
                MediaRef::Video {
                    uri: non_empty(row, "video")?,
                    frame_count,
                    fps,
                    sampled_frames: Vec::new(),
                    frame_size: Some((parse_num(row, "width")?, parse_num(row, "height")?)),
                },
                Annotation::VideoCaption { text: non_empty(row, "caption")? },
            )
        }
    };
    Ok(IngestRecord { dataset: reg.name.clone(), key, media, annotation })
}

fn non_empty(row: &Row, field: &str) -> Result<String, String> {
    let value = row.get(field).ok_or_else(|| format!("missing field: {field}"))?;
    let value = value.trim();
    if value.is_empty() {
        return Err(format!("empty field: {field}"));
    }
    Ok(value.to_string())
}

fn parse_num<T: std::str::FromStr>(row: &Row, field: &str) -> Result<T, String> {
    let raw = non_empty(row, field)?;
    raw.parse().map_err(|_| format!("bad number in field {field}: {raw:?}"))
}
