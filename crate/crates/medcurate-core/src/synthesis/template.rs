//! Seeded template strategies: captions to QA, boxes to localization,
//! labels to MCQ or open QA, volumes to slice-series QA.
//!
//! Every op derives its RNG from (seed, strategy, dataset, key), so results
//! do not depend on iteration order and batches can run on any number of
//! threads without changing output.

use rand::seq::SliceRandom;

use super::pools::{RegionGrid, SynonymPool};
use super::{finish_sample, record_rng, sample_id, SynthesisError};
use crate::ingest::{Annotation, IngestRecord};
use crate::sample::{
    media_placeholder, AnswerOption, ConversationTurn, Language, ModalityTag,
    SourceRecordRef, SynthesisStrategy, TaskKind, VqaSample, MAX_OPTIONS, OPTION_LETTERS,
};

/// How label records become multiple-choice questions.
#[derive(Debug, Clone, PartialEq)]
pub struct McqSpec {
    pub correct: String,
    pub distractors: usize,
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl McqSpec {
    /// Pulls the correct label and vocabulary from a classification record.
    pub fn from_record(
        rec: &IngestRecord,
        distractors: usize,
        seed: u64,
    ) -> Result<Self, SynthesisError> {
        match &rec.annotation {
            Annotation::ClassLabel { label, vocabulary } => Ok(McqSpec {
                correct: label.clone(),
                distractors,
                vocabulary: vocabulary.clone(),
                seed,
            }),
            _ => Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "label" }),
        }
    }

    fn check(&self) -> Result<(), SynthesisError> {
        if self.distractors == 0 {
            return Err(SynthesisError::BadMcqSpec {
                reason: "distractor count must be at least 1".into(),
            });
        }
        if self.distractors + 1 > MAX_OPTIONS {
            return Err(SynthesisError::BadMcqSpec {
                reason: format!(
                    "{} distractors would exceed the {MAX_OPTIONS}-option letter range",
                    self.distractors
                ),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &self.vocabulary {
            if !seen.insert(label) {
                return Err(SynthesisError::BadMcqSpec {
                    reason: format!("duplicate vocabulary label {label:?}"),
                });
            }
        }
        if !self.vocabulary.contains(&self.correct) {
            return Err(SynthesisError::BadMcqSpec {
                reason: format!("correct label {:?} not in vocabulary", self.correct),
            });
        }
        Ok(())
    }
}

fn provenance(rec: &IngestRecord, strategy: SynthesisStrategy) -> SourceRecordRef {
    SourceRecordRef { dataset: rec.dataset.clone(), key: rec.key.clone(), strategy }
}

/// Caption record to a single QA pair: templated question, caption as the
/// verbatim answer.
pub fn caption_to_qa(
    rec: &IngestRecord,
    modality: ModalityTag,
    pool: &SynonymPool,
    seed: u64,
) -> Result<VqaSample, SynthesisError> {
    let text = match &rec.annotation {
        Annotation::Caption { text } => text,
        _ => return Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "caption" }),
    };
    if text.trim().is_empty() {
        return Err(SynthesisError::EmptyText { key: rec.key.clone() });
    }
    let mut rng = record_rng(seed, &["caption-to-qa", &rec.dataset, &rec.key]);
    let question = pool.draw(TaskKind::Caption, modality, &mut rng)?;
    finish_sample(VqaSample {
        id: sample_id(rec, "caption"),
        task: TaskKind::Caption,
        modality,
        language: Language::En,
        media: vec![rec.media.clone()],
        turns: vec![
            ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
            ConversationTurn::assistant(text.clone()),
        ],
        answer_space: None,
        provenance: provenance(rec, SynthesisStrategy::VqaConversion),
    })
}

/// Box record to a localization question. The answer is the record's own
/// region label when present, otherwise the grid cell under the box center.
pub fn mask_to_localization(
    rec: &IngestRecord,
    modality: ModalityTag,
    grid: &RegionGrid,
    pool: &SynonymPool,
    seed: u64,
) -> Result<VqaSample, SynthesisError> {
    let (bbox, region_label, width, height) = match &rec.annotation {
        Annotation::MaskRegion { bbox, region_label, image_width, image_height } => {
            (bbox, region_label, *image_width, *image_height)
        }
        _ => return Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "mask" }),
    };
    let answer = match region_label {
        Some(label) => label.clone(),
        None => {
            let (cx, cy) = bbox.center();
            grid.locate(cx, cy, width, height)?
        }
    };
    let mut rng = record_rng(seed, &["mask-to-localization", &rec.dataset, &rec.key]);
    let question = pool.draw(TaskKind::Localization, modality, &mut rng)?;
    finish_sample(VqaSample {
        id: sample_id(rec, "loc"),
        task: TaskKind::Localization,
        modality,
        language: Language::En,
        media: vec![rec.media.clone()],
        turns: vec![
            ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
            ConversationTurn::assistant(answer),
        ],
        answer_space: None,
        provenance: provenance(rec, SynthesisStrategy::VqaConversion),
    })
}

/// Label record to a multiple-choice question: the true label plus
/// distractors drawn without replacement from the rest of the vocabulary,
/// shuffled so the correct letter is uniform across records.
pub fn label_to_mcq(
    rec: &IngestRecord,
    modality: ModalityTag,
    spec: &McqSpec,
    pool: &SynonymPool,
) -> Result<VqaSample, SynthesisError> {
    spec.check()?;
    let candidates: Vec<&String> =
        spec.vocabulary.iter().filter(|l| **l != spec.correct).collect();
    if candidates.len() < spec.distractors {
        return Err(SynthesisError::InsufficientDistractors {
            needed: spec.distractors,
            available: candidates.len(),
        });
    }
    let mut rng = record_rng(spec.seed, &["label-to-mcq", &rec.dataset, &rec.key]);
    let stem = pool.draw(TaskKind::Mcq, modality, &mut rng)?;

    let picks = rand::seq::index::sample(&mut rng, candidates.len(), spec.distractors);
    let mut options: Vec<(String, bool)> = Vec::with_capacity(spec.distractors + 1);
    options.push((spec.correct.clone(), true));
    options.extend(picks.iter().map(|i| (candidates[i].clone(), false)));
    options.shuffle(&mut rng);

    let answer_space: Vec<AnswerOption> = options
        .into_iter()
        .zip(OPTION_LETTERS)
        .map(|((text, correct), letter)| AnswerOption { label: letter.to_string(), text, correct })
        .collect();
    let gold_letter = answer_space
        .iter()
        .find(|o| o.correct)
        .map(|o| o.label.clone())
        .expect("one option is correct by construction");

    let mut question = format!("{} {stem}", media_placeholder(0));
    for option in &answer_space {
        question.push_str(&format!("\n{}. {}", option.label, option.text));
    }
    finish_sample(VqaSample {
        id: sample_id(rec, "mcq"),
        task: TaskKind::Mcq,
        modality,
        language: Language::En,
        media: vec![rec.media.clone()],
        turns: vec![
            ConversationTurn::human(question),
            ConversationTurn::assistant(gold_letter),
        ],
        answer_space: Some(answer_space),
        provenance: provenance(rec, SynthesisStrategy::Template),
    })
}

/// Label record to a direct diagnostic question with the label as answer.
pub fn label_to_open_qa(
    rec: &IngestRecord,
    modality: ModalityTag,
    pool: &SynonymPool,
    seed: u64,
) -> Result<VqaSample, SynthesisError> {
    let label = match &rec.annotation {
        Annotation::ClassLabel { label, .. } => label,
        _ => return Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "label" }),
    };
    if label.trim().is_empty() {
        return Err(SynthesisError::EmptyText { key: rec.key.clone() });
    }
    let mut rng = record_rng(seed, &["label-to-open-qa", &rec.dataset, &rec.key]);
    let question = pool.draw(TaskKind::OpenQa, modality, &mut rng)?;
    finish_sample(VqaSample {
        id: sample_id(rec, "open"),
        task: TaskKind::OpenQa,
        modality,
        language: Language::En,
        media: vec![rec.media.clone()],
        turns: vec![
            ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
            ConversationTurn::assistant(label.clone()),
        ],
        answer_space: None,
        provenance: provenance(rec, SynthesisStrategy::Template),
    })
}

/// Volume record to an open QA sample over its slice series. `series`
/// overrides the record's media when the volume was re-serialized at a
/// different slice count.
pub fn volume_to_qa(
    rec: &IngestRecord,
    modality: ModalityTag,
    series: Option<crate::sample::MediaRef>,
    pool: &SynonymPool,
    seed: u64,
) -> Result<VqaSample, SynthesisError> {
    let (question, answer) = match &rec.annotation {
        Annotation::VolumeAnnotation { question, answer } => (question.clone(), answer.clone()),
        _ => return Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "volume" }),
    };
    let question = match question {
        Some(q) => q,
        None => {
            let mut rng = record_rng(seed, &["volume-to-qa", &rec.dataset, &rec.key]);
            pool.draw(TaskKind::OpenQa, modality, &mut rng)?
        }
    };
    let media = vec![series.unwrap_or_else(|| rec.media.clone())];
    finish_sample(VqaSample {
        id: sample_id(rec, "volume"),
        task: TaskKind::OpenQa,
        modality,
        language: Language::En,
        media,
        turns: vec![
            ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
            ConversationTurn::assistant(answer),
        ],
        answer_space: None,
        provenance: provenance(rec, SynthesisStrategy::Volumetric),
    })
}
