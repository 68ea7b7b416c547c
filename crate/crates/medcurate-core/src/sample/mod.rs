//! Unified VQA sample schema and structural validation.
//!
//! Every pipeline stage exchanges [`VqaSample`] values. A sample is one
//! instruction/response record: media references, an alternating human /
//! assistant conversation, a task kind, a modality tag, and provenance back
//! to the source dataset row. Samples are immutable values and safe to move
//! between worker threads.
//!
//! Media is stored by reference (a path string), never inline; a corpus is a
//! manifest over image roots. Turn text may embed media placeholders of the
//! form `<media:N>` which must resolve to an index into the sample's `media`
//! list.

mod corpus;

pub use corpus::{read_corpus, write_corpus, CorpusError, CorpusManifest, CorpusReader, CorpusWriter};

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Matches `<media:N>` placeholders in turn text.
static MEDIA_PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<media:(\d+)>").expect("valid regex"));

/// Option letters in assignment order. MCQ options are canonicalized to a
/// prefix of this set.
pub const OPTION_LETTERS: [char; 5] = ['A', 'B', 'C', 'D', 'E'];

/// Minimum and maximum option counts for a multiple-choice sample.
pub const MIN_OPTIONS: usize = 2;
pub const MAX_OPTIONS: usize = 5;

/// What a sample asks the model to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Caption,
    OpenQa,
    Mcq,
    Report,
    Localization,
    VideoSummary,
    VideoMcq,
}

impl TaskKind {
    /// Whether the task carries a lettered option set.
    pub fn is_multiple_choice(self) -> bool {
        matches!(self, TaskKind::Mcq | TaskKind::VideoMcq)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Caption => "caption",
            TaskKind::OpenQa => "open-qa",
            TaskKind::Mcq => "mcq",
            TaskKind::Report => "report",
            TaskKind::Localization => "localization",
            TaskKind::VideoSummary => "video-summary",
            TaskKind::VideoMcq => "video-mcq",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Imaging modality of the sample's media.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModalityTag {
    Xray,
    Ct,
    Mri,
    Ultrasound,
    Dermoscopy,
    Ophthalmology,
    Pathology,
    Endoscopy,
    Video,
    Multimodal,
}

impl ModalityTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ModalityTag::Xray => "xray",
            ModalityTag::Ct => "ct",
            ModalityTag::Mri => "mri",
            ModalityTag::Ultrasound => "ultrasound",
            ModalityTag::Dermoscopy => "dermoscopy",
            ModalityTag::Ophthalmology => "ophthalmology",
            ModalityTag::Pathology => "pathology",
            ModalityTag::Endoscopy => "endoscopy",
            ModalityTag::Video => "video",
            ModalityTag::Multimodal => "multimodal",
        }
    }

    /// Noun usable inside question text, e.g. "Describe this CT image."
    pub fn display_name(self) -> &'static str {
        match self {
            ModalityTag::Xray => "X-ray",
            ModalityTag::Ct => "CT",
            ModalityTag::Mri => "MRI",
            ModalityTag::Ultrasound => "ultrasound",
            ModalityTag::Dermoscopy => "dermoscopy",
            ModalityTag::Ophthalmology => "fundus",
            ModalityTag::Pathology => "pathology",
            ModalityTag::Endoscopy => "endoscopy",
            ModalityTag::Video => "video",
            ModalityTag::Multimodal => "medical",
        }
    }
}

impl fmt::Display for ModalityTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Output language of the conversation turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Zh,
}

/// Which curation strategy produced a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthesisStrategy {
    VqaConversion,
    Template,
    LlmAssisted,
    Volumetric,
    Video,
    Passthrough,
}

/// A 2D image, an ordered slice series from a 3D volume, or a video.
///
/// Slice series paths are stored in depth order; `source_depth` is the voxel
/// count along the depth axis of the original volume. Video frame indices
/// are the sampled frames, strictly increasing and below `frame_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MediaRef {
    Image {
        uri: String,
    },
    SliceSeries {
        slices: Vec<String>,
        source_depth: u32,
    },
    Video {
        uri: String,
        frame_count: u32,
        fps: f64,
        sampled_frames: Vec<u32>,
        /// Width/height of decoded frames, when known. Videos are never
        /// decoded by this crate, so budget planning needs the size recorded
        /// at ingest time.
        #[serde(skip_serializing_if = "Option::is_none")]
        frame_size: Option<(u32, u32)>,
    },
}

impl MediaRef {
    pub fn image(uri: impl Into<String>) -> Self {
        MediaRef::Image { uri: uri.into() }
    }
}

/// Speaker of a conversation turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Human,
    Assistant,
}

/// One turn of the sample's conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationTurn {
    pub speaker: Speaker,
    pub text: String,
}

impl ConversationTurn {
    pub fn human(text: impl Into<String>) -> Self {
        ConversationTurn { speaker: Speaker::Human, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ConversationTurn { speaker: Speaker::Assistant, text: text.into() }
    }
}

/// Provenance: which dataset row a sample came from and how it was made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRecordRef {
    /// Registered dataset name, or `"synthetic"` for generated data.
    pub dataset: String,
    /// Original record key within the source dataset.
    pub key: String,
    pub strategy: SynthesisStrategy,
}

/// One lettered MCQ option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOption {
    /// Canonical letter, "A" through "E", assigned in order.
    pub label: String,
    pub text: String,
    pub correct: bool,
}

/// One instruction/VQA record.
///
/// Field order here is the documented key order of the on-disk JSONL format;
/// serialization preserves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaSample {
    /// Unique within a corpus file.
    pub id: String,
    pub task: TaskKind,
    pub modality: ModalityTag,
    pub language: Language,
    pub media: Vec<MediaRef>,
    pub turns: Vec<ConversationTurn>,
    /// Present exactly when `task` is multiple-choice.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_space: Option<Vec<AnswerOption>>,
    pub provenance: SourceRecordRef,
}

impl VqaSample {
    /// The gold answer text: the correct option's text for MCQ tasks, the
    /// final assistant turn otherwise.
    pub fn gold_answer(&self) -> Option<&str> {
        if let Some(options) = &self.answer_space {
            return options.iter().find(|o| o.correct).map(|o| o.text.as_str());
        }
        self.turns
            .iter()
            .rev()
            .find(|t| t.speaker == Speaker::Assistant)
            .map(|t| t.text.as_str())
    }

    /// The correct option letter, for multiple-choice samples.
    pub fn gold_letter(&self) -> Option<char> {
        self.answer_space
            .as_ref()?
            .iter()
            .find(|o| o.correct)
            .and_then(|o| o.label.chars().next())
    }

    /// Media placeholder indices referenced by any turn, in order of
    /// appearance.
    pub fn placeholder_indices(&self) -> Vec<usize> {
        self.turns
            .iter()
            .flat_map(|t| MEDIA_PLACEHOLDER.captures_iter(&t.text))
            .filter_map(|c| c[1].parse().ok())
            .collect()
    }
}

/// Renders the placeholder token for media index `i`.
pub fn media_placeholder(i: usize) -> String {
    format!("<media:{i}>")
}

/// Removes all media placeholders from `text`, trimming leftover leading
/// whitespace.
pub fn strip_media_placeholders(text: &str) -> String {
    MEDIA_PLACEHOLDER.replace_all(text, "").trim_start().to_string()
}

/// A violated schema invariant. The `code` tag doubles as the machine-
/// readable reason code in rejects reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum Violation {
    EmptyId,
    EmptyTurns,
    FirstTurnNotHuman,
    NonAlternatingTurns { turn: usize },
    EmptyTurnText { turn: usize },
    DanglingMediaPlaceholder { index: usize, media_count: usize },
    AnswerSpaceMissing,
    AnswerSpaceForbidden,
    OptionCountOutOfRange { count: usize },
    NoCorrectOption,
    MultipleCorrectOptions { count: usize },
    DuplicateOptionText { text: String },
    EmptyOptionText { label: String },
    NonCanonicalOptionLabel { position: usize, label: String },
    EmptyMediaUri,
    SliceSeriesEmpty,
    SliceSeriesExceedsDepth { len: usize, depth: u32 },
    FrameIndicesNotIncreasing,
    FrameIndexOutOfRange { index: u32, frame_count: u32 },
}

impl Violation {
    /// Stable machine-readable code, equal to the serialized `code` tag.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyId => "empty_id",
            Violation::EmptyTurns => "empty_turns",
            Violation::FirstTurnNotHuman => "first_turn_not_human",
            Violation::NonAlternatingTurns { .. } => "non_alternating_turns",
            Violation::EmptyTurnText { .. } => "empty_turn_text",
            Violation::DanglingMediaPlaceholder { .. } => "dangling_media_placeholder",
            Violation::AnswerSpaceMissing => "answer_space_missing",
            Violation::AnswerSpaceForbidden => "answer_space_forbidden",
            Violation::OptionCountOutOfRange { .. } => "option_count_out_of_range",
            Violation::NoCorrectOption => "no_correct_option",
            Violation::MultipleCorrectOptions { .. } => "multiple_correct_options",
            Violation::DuplicateOptionText { .. } => "duplicate_option_text",
            Violation::EmptyOptionText { .. } => "empty_option_text",
            Violation::NonCanonicalOptionLabel { .. } => "non_canonical_option_label",
            Violation::EmptyMediaUri => "empty_media_uri",
            Violation::SliceSeriesEmpty => "slice_series_empty",
            Violation::SliceSeriesExceedsDepth { .. } => "slice_series_exceeds_depth",
            Violation::FrameIndicesNotIncreasing => "frame_indices_not_increasing",
            Violation::FrameIndexOutOfRange { .. } => "frame_index_out_of_range",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId => write!(f, "sample id is empty"),
            Violation::EmptyTurns => write!(f, "sample has no conversation turns"),
            Violation::FirstTurnNotHuman => write!(f, "first turn is not spoken by human"),
            Violation::NonAlternatingTurns { turn } => {
                write!(f, "turn {turn} does not alternate speakers")
            }
            Violation::EmptyTurnText { turn } => write!(f, "turn {turn} has empty text"),
            Violation::DanglingMediaPlaceholder { index, media_count } => write!(
                f,
                "placeholder <media:{index}> but sample has {media_count} media entries"
            ),
            Violation::AnswerSpaceMissing => {
                write!(f, "multiple-choice task without answer_space")
            }
            Violation::AnswerSpaceForbidden => {
                write!(f, "answer_space present on a non-multiple-choice task")
            }
            Violation::OptionCountOutOfRange { count } => {
                write!(f, "{count} options, expected {MIN_OPTIONS}..={MAX_OPTIONS}")
            }
            Violation::NoCorrectOption => write!(f, "no option marked correct"),
            Violation::MultipleCorrectOptions { count } => {
                write!(f, "{count} options marked correct, expected exactly one")
            }
            Violation::DuplicateOptionText { text } => {
                write!(f, "duplicate option text {text:?}")
            }
            Violation::EmptyOptionText { label } => write!(f, "option {label} has empty text"),
            Violation::NonCanonicalOptionLabel { position, label } => write!(
                f,
                "option at position {position} labeled {label:?}, expected {:?}",
                OPTION_LETTERS[*position]
            ),
            Violation::EmptyMediaUri => write!(f, "media entry with empty uri"),
            Violation::SliceSeriesEmpty => write!(f, "slice series with no slices"),
            Violation::SliceSeriesExceedsDepth { len, depth } => {
                write!(f, "slice series has {len} slices but source depth is {depth}")
            }
            Violation::FrameIndicesNotIncreasing => {
                write!(f, "sampled frame indices are not strictly increasing")
            }
            Violation::FrameIndexOutOfRange { index, frame_count } => {
                write!(f, "sampled frame {index} out of range for {frame_count} frames")
            }
        }
    }
}

/// Outcome of structural validation. Failures are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<&'static str> {
        self.violations.iter().map(Violation::code).collect()
    }
}

/// Checks every structural invariant of a sample and returns the full list
/// of violations. Passing samples round-trip through serialization
/// unchanged.
///
/// Corpus-level invariants (id uniqueness) are enforced by
/// [`CorpusWriter`]; dataset-registration checks live in the ingest layer.
pub fn validate(sample: &VqaSample) -> ValidationResult {
    let mut violations = Vec::new();

    if sample.id.trim().is_empty() {
        violations.push(Violation::EmptyId);
    }

    check_turns(sample, &mut violations);
    check_media(sample, &mut violations);
    check_answer_space(sample, &mut violations);

    ValidationResult { violations }
}

fn check_turns(sample: &VqaSample, violations: &mut Vec<Violation>) {
    if sample.turns.is_empty() {
        violations.push(Violation::EmptyTurns);
        return;
    }
    if sample.turns[0].speaker != Speaker::Human {
        violations.push(Violation::FirstTurnNotHuman);
    }
    for (i, pair) in sample.turns.windows(2).enumerate() {
        if pair[0].speaker == pair[1].speaker {
            violations.push(Violation::NonAlternatingTurns { turn: i + 1 });
        }
    }
    for (i, turn) in sample.turns.iter().enumerate() {
        if turn.text.trim().is_empty() {
            violations.push(Violation::EmptyTurnText { turn: i });
        }
    }
    for index in sample.placeholder_indices() {
        if index >= sample.media.len() {
            violations.push(Violation::DanglingMediaPlaceholder {
                index,
                media_count: sample.media.len(),
            });
        }
    }
}

fn check_media(sample: &VqaSample, violations: &mut Vec<Violation>) {
    for media in &sample.media {
        match media {
            MediaRef::Image { uri } => {
                if uri.is_empty() {
                    violations.push(Violation::EmptyMediaUri);
                }
            }
            MediaRef::SliceSeries { slices, source_depth } => {
                if slices.is_empty() {
                    violations.push(Violation::SliceSeriesEmpty);
                } else if slices.len() > *source_depth as usize {
                    violations.push(Violation::SliceSeriesExceedsDepth {
                        len: slices.len(),
                        depth: *source_depth,
                    });
                }
                if slices.iter().any(String::is_empty) {
                    violations.push(Violation::EmptyMediaUri);
                }
            }
            MediaRef::Video { uri, frame_count, sampled_frames, .. } => {
                if uri.is_empty() {
                    violations.push(Violation::EmptyMediaUri);
                }
                if sampled_frames.windows(2).any(|w| w[0] >= w[1]) {
                    violations.push(Violation::FrameIndicesNotIncreasing);
                }
                if let Some(&bad) = sampled_frames.iter().find(|&&i| i >= *frame_count) {
                    violations.push(Violation::FrameIndexOutOfRange {
                        index: bad,
                        frame_count: *frame_count,
                    });
                }
            }
        }
    }
}

fn check_answer_space(sample: &VqaSample, violations: &mut Vec<Violation>) {
    match (&sample.answer_space, sample.task.is_multiple_choice()) {
        (None, true) => violations.push(Violation::AnswerSpaceMissing),
        (Some(_), false) => violations.push(Violation::AnswerSpaceForbidden),
        (Some(options), true) => {
            if !(MIN_OPTIONS..=MAX_OPTIONS).contains(&options.len()) {
                violations.push(Violation::OptionCountOutOfRange { count: options.len() });
            }
            let correct = options.iter().filter(|o| o.correct).count();
            if correct == 0 {
                violations.push(Violation::NoCorrectOption);
            } else if correct > 1 {
                violations.push(Violation::MultipleCorrectOptions { count: correct });
            }
            let mut seen = std::collections::BTreeSet::new();
            for option in options {
                if !seen.insert(option.text.trim().to_lowercase()) {
                    violations.push(Violation::DuplicateOptionText {
                        text: option.text.clone(),
                    });
                }
                if option.text.trim().is_empty() {
                    violations.push(Violation::EmptyOptionText {
                        label: option.label.clone(),
                    });
                }
            }
            for (position, option) in options.iter().enumerate() {
                let expected = OPTION_LETTERS.get(position).map(|c| c.to_string());
                if expected.as_deref() != Some(option.label.as_str()) {
                    violations.push(Violation::NonCanonicalOptionLabel {
                        position,
                        label: option.label.clone(),
                    });
                }
            }
        }
        (None, false) => {}
    }
}


#[cfg(test)]
pub(crate) mod test_support {
    //! Small sample builders shared across this crate's unit tests.

    use super::*;

    pub fn open_qa_sample(id: &str) -> VqaSample {
        VqaSample {
            id: id.to_string(),
            task: TaskKind::OpenQa,
            modality: ModalityTag::Xray,
            language: Language::En,
            media: vec![MediaRef::image("images/chest.png")],
            turns: vec![
                ConversationTurn::human(format!(
                    "{} What abnormality is shown?",
                    media_placeholder(0)
                )),
                ConversationTurn::assistant("Cardiomegaly with clear lungs."),
            ],
            answer_space: None,
            provenance: SourceRecordRef {
                dataset: "synthetic".into(),
                key: id.to_string(),
                strategy: SynthesisStrategy::Passthrough,
            },
        }
    }

    pub fn mcq_sample(id: &str) -> VqaSample {
        let options = vec![
            AnswerOption { label: "A".into(), text: "pneumonia".into(), correct: false },
            AnswerOption { label: "B".into(), text: "pneumothorax".into(), correct: true },
            AnswerOption { label: "C".into(), text: "effusion".into(), correct: false },
            AnswerOption { label: "D".into(), text: "cardiomegaly".into(), correct: false },
        ];
        VqaSample {
            id: id.to_string(),
            task: TaskKind::Mcq,
            modality: ModalityTag::Xray,
            language: Language::En,
            media: vec![MediaRef::image("images/chest.png")],
            turns: vec![
                ConversationTurn::human(format!(
                    "{} Which finding is present?\nA. pneumonia\nB. pneumothorax\nC. effusion\nD. cardiomegaly",
                    media_placeholder(0)
                )),
                ConversationTurn::assistant("B"),
            ],
            answer_space: Some(options),
            provenance: SourceRecordRef {
                dataset: "synthetic".into(),
                key: id.to_string(),
                strategy: SynthesisStrategy::Template,
            },
        }
    }
}
