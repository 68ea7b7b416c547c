//! Question template pools and the named region grid.
//!
//! Both are loadable from JSON so curation runs can swap in site-specific
//! phrasing without a rebuild. The embedded defaults are generic stand-ins,
//! not a vetted clinical question bank.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::sample::{ModalityTag, TaskKind};

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("placeholder pattern compiles"));

/// The only placeholder templates may use; anything else is a config error.
const DECLARED_PLACEHOLDERS: &[&str] = &["modality"];

/// Question templates keyed by task, drawn per record with a seeded RNG.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynonymPool {
    templates: BTreeMap<TaskKind, Vec<String>>,
}

impl Default for SynonymPool {
    fn default() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            TaskKind::Caption,
            vec![
                "Describe this {modality} image.".to_string(),
                "Provide a detailed description of this {modality} image.".to_string(),
                "What does this {modality} image show?".to_string(),
                "Summarize the findings in this {modality} image.".to_string(),
            ],
        );
        templates.insert(
            TaskKind::OpenQa,
            vec![
                "What abnormality is shown in this {modality} image?".to_string(),
                "What is the most likely diagnosis based on this {modality} image?".to_string(),
                "What finding is present in this {modality} image?".to_string(),
            ],
        );
        templates.insert(
            TaskKind::Mcq,
            vec![
                "What is the most likely diagnosis?".to_string(),
                "Which of the following best describes this {modality} image?".to_string(),
                "Which finding is present in this {modality} image?".to_string(),
            ],
        );
        templates.insert(
            TaskKind::Localization,
            vec![
                "Where is the lesion located?".to_string(),
                "Where is the abnormality in this {modality} image?".to_string(),
                "In which region of the image is the lesion?".to_string(),
            ],
        );
        templates.insert(
            TaskKind::VideoSummary,
            vec![
                "Describe this medical procedure.".to_string(),
                "Summarize what happens in this video.".to_string(),
                "What procedure is being performed in this video?".to_string(),
            ],
        );
        SynonymPool { templates }
    }
}

impl SynonymPool {
    pub fn from_json(json: &str) -> Result<Self, SynthesisError> {
        let pool: SynonymPool =
            serde_json::from_str(json).map_err(|e| SynthesisError::BadPoolConfig {
                reason: e.to_string(),
            })?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn load(path: &Path) -> Result<Self, SynthesisError> {
        let json = std::fs::read_to_string(path).map_err(|e| SynthesisError::BadPoolConfig {
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&json)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        for (task, templates) in &self.templates {
            if templates.is_empty() {
                return Err(SynthesisError::EmptyPool { task: *task });
            }
            for template in templates {
                for cap in PLACEHOLDER.captures_iter(template) {
                    let name = cap.get(1).expect("capture group").as_str();
                    if !DECLARED_PLACEHOLDERS.contains(&name) {
                        return Err(SynthesisError::UndeclaredPlaceholder {
                            template: template.clone(),
                            placeholder: name.to_string(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Draws one template for `task` and fills its placeholders.
    pub fn draw(
        &self,
        task: TaskKind,
        modality: ModalityTag,
        rng: &mut impl Rng,
    ) -> Result<String, SynthesisError> {
        let templates = self
            .templates
            .get(&task)
            .filter(|t| !t.is_empty())
            .ok_or(SynthesisError::EmptyPool { task })?;
        let index = rng.random_range(0..templates.len());
        Ok(templates[index].replace("{modality}", modality.display_name()))
    }
}

/// Coarse named grid used to answer localization questions from a box
/// center. Cells are named "{row} {col}" except the exact middle, which is
/// just "center".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    rows: Vec<String>,
    cols: Vec<String>,
}

impl Default for RegionGrid {
    fn default() -> Self {
        RegionGrid {
            rows: vec!["upper".into(), "center".into(), "lower".into()],
            cols: vec!["left".into(), "center".into(), "right".into()],
        }
    }
}

impl RegionGrid {
    pub fn new(rows: Vec<String>, cols: Vec<String>) -> Result<Self, SynthesisError> {
        if rows.is_empty() || cols.is_empty() || rows.iter().chain(&cols).any(|n| n.trim().is_empty())
        {
            return Err(SynthesisError::BadGrid);
        }
        Ok(RegionGrid { rows, cols })
    }

    pub fn from_json(json: &str) -> Result<Self, SynthesisError> {
        let grid: RegionGrid =
            serde_json::from_str(json).map_err(|e| SynthesisError::BadPoolConfig {
                reason: e.to_string(),
            })?;
        Self::new(grid.rows, grid.cols)
    }

    pub fn load(path: &Path) -> Result<Self, SynthesisError> {
        let json = std::fs::read_to_string(path).map_err(|e| SynthesisError::BadPoolConfig {
            reason: format!("{}: {e}", path.display()),
        })?;
        Self::from_json(&json)
    }

    /// Names the cell containing point (cx, cy) on a width x height image.
    pub fn locate(&self, cx: f64, cy: f64, width: u32, height: u32) -> Result<String, SynthesisError> {
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(SynthesisError::CenterOutOfBounds { cx, cy });
        }
        let row = cell_index(cy, height, self.rows.len());
        let col = cell_index(cx, width, self.cols.len());
        let (row, col) = (&self.rows[row], &self.cols[col]);
        if row == "center" && col == "center" {
            Ok("center".to_string())
        } else {
            Ok(format!("{row} {col}"))
        }
    }
}

fn cell_index(coord: f64, span: u32, cells: usize) -> usize {
    let idx = (coord / span as f64 * cells as f64) as usize;
    idx.min(cells - 1)
}
