//! Gateway-backed synthesis: reasoning QA from annotated images, MCQ
//! generation for procedure videos, and the optional Chinese translation
//! pass.
//!
//! Responses must follow the fenced-block format spelled out in the prompt
//! (```qa / ```mcq blocks with FIELD: lines). Blocks that fail to parse
//! become reject entries, never panics or silent drops, so a bad generation
//! batch is auditable afterwards.

use std::collections::BTreeMap;
use std::path::Path;

use super::pools::SynonymPool;
use super::{finish_sample, record_rng, sample_id, SynthesisError, SynthesisOutcome};
use crate::gateway::{CompletionRequest, LlmGateway, MediaAttachment};
use crate::ingest::{Annotation, IngestRecord, RejectEntry};
use crate::sample::{
    media_placeholder, strip_media_placeholders, AnswerOption, ConversationTurn, Language,
    MediaRef, ModalityTag, SourceRecordRef, SynthesisStrategy, TaskKind, VqaSample,
    OPTION_LETTERS,
};

use rand::seq::SliceRandom;

/// Everything that goes into a generation request besides the image bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisPrompt {
    pub system: String,
    pub image_reference: String,
    pub diagnostic_labels: Vec<String>,
    pub lesion_characteristics: Option<String>,
    pub patient_metadata: Option<String>,
    pub constraint_clause: String,
    pub few_shot: Option<String>,
    pub response_format: String,
}

impl SynthesisPrompt {
    /// Prompt for reasoning-oriented QA pairs over a single image.
    pub fn qa_default() -> Self {
        SynthesisPrompt {
            system: "You are a medical imaging expert writing visual question-answer \
                     pairs for model training."
                .into(),
            image_reference: String::new(),
            diagnostic_labels: Vec::new(),
            lesion_characteristics: None,
            patient_metadata: None,
            constraint_clause: "Only describe findings visible in the image or stated in \
                                the verified annotations. Do not invent clinical details."
                .into(),
            few_shot: None,
            response_format: "Reply with one or more fenced blocks, each of the form:\n\
                              ```qa\nQUESTION: <question about the image>\n\
                              ANSWER: <answer grounded in the annotations>\n```"
                .into(),
        }
    }

    /// Prompt for one multiple-choice question about a procedure video.
    pub fn video_mcq_default() -> Self {
        SynthesisPrompt {
            system: "You are a medical educator writing one exam question about a \
                     procedure video from its caption."
                .into(),
            image_reference: String::new(),
            diagnostic_labels: Vec::new(),
            lesion_characteristics: None,
            patient_metadata: None,
            constraint_clause: "The question and every option must be answerable from the \
                                caption alone. Provide one correct answer and one to three \
                                plausible distractors."
                .into(),
            few_shot: None,
            response_format: "Reply with fenced blocks of the form:\n\
                              ```mcq\nQUESTION: <question>\nANSWER: <correct answer>\n\
                              DISTRACTORS: <wrong 1> | <wrong 2> | <wrong 3>\n```"
                .into(),
        }
    }

    fn render(&self, grounding: &str) -> String {
        let mut out = String::new();
        out.push_str(&self.system);
        out.push_str("\n\n");
        if !self.image_reference.is_empty() {
            out.push_str(&format!("Image: {}\n", self.image_reference));
        }
        if !self.diagnostic_labels.is_empty() {
            out.push_str(&format!(
                "Diagnostic labels: {}\n",
                self.diagnostic_labels.join(", ")
            ));
        }
        if let Some(lesion) = &self.lesion_characteristics {
            out.push_str(&format!("Lesion characteristics: {lesion}\n"));
        }
        if let Some(meta) = &self.patient_metadata {
            out.push_str(&format!("Patient metadata: {meta}\n"));
        }
        out.push_str(grounding);
        out.push_str("\n\nConstraint: ");
        out.push_str(&self.constraint_clause);
        if let Some(shot) = &self.few_shot {
            out.push_str("\n\n");
            out.push_str(shot);
        }
        out.push_str("\n\n");
        out.push_str(&self.response_format);
        out
    }
}

/// Extracts the bodies of ```tag fenced blocks. An unterminated opening
/// fence yields an error string instead of a body.
fn fenced_blocks(text: &str, tag: &str) -> (Vec<String>, Option<String>) {
    let open = format!("```{tag}");
    let mut blocks = Vec::new();
    let mut current: Option<String> = None;
    for line in text.lines() {
        let trimmed = line.trim();
        match &mut current {
            None if trimmed == open => current = Some(String::new()),
            None => {}
            Some(body) => {
                if trimmed == "```" {
                    blocks.push(current.take().expect("block open"));
                } else {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
    }
    let unterminated = current.map(|_| "unterminated fenced block".to_string());
    (blocks, unterminated)
}

/// Parses `FIELD: value` lines inside a block. Indented or unprefixed lines
/// continue the previous field.
fn parse_fields(block: &str) -> BTreeMap<String, String> {
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<String> = None;
    for line in block.lines() {
        let is_field = line
            .split_once(':')
            .map(|(name, _)| {
                !name.is_empty()
                    && name.chars().all(|c| c.is_ascii_uppercase() || c == '_')
            })
            .unwrap_or(false);
        if is_field {
            let (name, value) = line.split_once(':').expect("checked above");
            fields.insert(name.to_string(), value.trim().to_string());
            current = Some(name.to_string());
        } else if let Some(name) = &current {
            let entry = fields.get_mut(name).expect("current field exists");
            if !entry.is_empty() {
                entry.push('\n');
            }
            entry.push_str(line.trim());
        }
    }
    fields
}

fn first_image_attachment(rec: &IngestRecord, media_root: &Path) -> Option<MediaAttachment> {
    if let MediaRef::Image { uri } = &rec.media {
        if let Ok(bytes) = std::fs::read(media_root.join(uri)) {
            // Keyed by the relative uri so cache keys survive a move of the
            // media root.
            return Some(MediaAttachment::from_bytes(uri.clone(), &bytes));
        }
    }
    None
}

fn grounding_for(rec: &IngestRecord) -> Result<String, SynthesisError> {
    match &rec.annotation {
        Annotation::Caption { text } => Ok(format!("Source caption: {text}")),
        Annotation::ClassLabel { label, .. } => Ok(format!("Verified label: {label}")),
        _ => Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "caption or label" }),
    }
}

/// Generates reasoning-oriented open QA pairs for one record through the
/// gateway. Parse failures become rejects; gateway failures abort.
pub fn llm_assisted_synthesize(
    rec: &IngestRecord,
    modality: ModalityTag,
    prompt: &SynthesisPrompt,
    media_root: &Path,
    gateway: &LlmGateway,
) -> Result<SynthesisOutcome, SynthesisError> {
    if prompt.constraint_clause.trim().is_empty() {
        return Err(SynthesisError::MissingConstraintClause);
    }
    let grounding = grounding_for(rec)?;
    let mut request = CompletionRequest::text(prompt.render(&grounding));
    if let Some(attachment) = first_image_attachment(rec, media_root) {
        request.media.push(attachment);
    }
    let response = gateway.complete(&request)?;

    let mut outcome = SynthesisOutcome::default();
    let (blocks, unterminated) = fenced_blocks(&response.text, "qa");
    if blocks.is_empty() {
        outcome.rejects.push(RejectEntry {
            key: rec.key.clone(),
            reason: unterminated.unwrap_or_else(|| "no qa blocks in response".to_string()),
        });
        return Ok(outcome);
    }
    if let Some(reason) = unterminated {
        outcome.rejects.push(RejectEntry { key: rec.key.clone(), reason });
    }

    for (i, block) in blocks.iter().enumerate() {
        let fields = parse_fields(block);
        let question = fields.get("QUESTION").map(String::as_str).unwrap_or("");
        let answer = fields.get("ANSWER").map(String::as_str).unwrap_or("");
        if question.is_empty() || answer.is_empty() {
            outcome.rejects.push(RejectEntry {
                key: format!("{}#llm{i}", rec.key),
                reason: "qa block missing QUESTION or ANSWER".to_string(),
            });
            continue;
        }
        let sample = VqaSample {
            id: sample_id(rec, &format!("llm{i}")),
            task: TaskKind::OpenQa,
            modality,
            language: Language::En,
            media: vec![rec.media.clone()],
            turns: vec![
                ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
                ConversationTurn::assistant(answer),
            ],
            answer_space: None,
            provenance: SourceRecordRef {
                dataset: rec.dataset.clone(),
                key: rec.key.clone(),
                strategy: SynthesisStrategy::LlmAssisted,
            },
        };
        match finish_sample(sample) {
            Ok(sample) => outcome.samples.push(sample),
            Err(err) => outcome.rejects.push(RejectEntry {
                key: format!("{}#llm{i}", rec.key),
                reason: err.to_string(),
            }),
        }
    }
    Ok(outcome)
}

/// Builds the always-emitted summary sample for a video record.
pub(super) fn video_summary_sample(
    rec: &IngestRecord,
    modality: ModalityTag,
    pool: &SynonymPool,
    seed: u64,
) -> Result<VqaSample, SynthesisError> {
    let caption = match &rec.annotation {
        Annotation::VideoCaption { text } => text,
        _ => return Err(SynthesisError::WrongStyle { key: rec.key.clone(), expected: "video" }),
    };
    if caption.trim().is_empty() {
        return Err(SynthesisError::EmptyText { key: rec.key.clone() });
    }
    let mut rng = record_rng(seed, &["video-summary", &rec.dataset, &rec.key]);
    let question = pool.draw(TaskKind::VideoSummary, modality, &mut rng)?;
    finish_sample(VqaSample {
        id: sample_id(rec, "summary"),
        task: TaskKind::VideoSummary,
        modality,
        language: Language::En,
        media: vec![rec.media.clone()],
        turns: vec![
            ConversationTurn::human(format!("{} {question}", media_placeholder(0))),
            ConversationTurn::assistant(caption.clone()),
        ],
        answer_space: None,
        provenance: SourceRecordRef {
            dataset: rec.dataset.clone(),
            key: rec.key.clone(),
            strategy: SynthesisStrategy::Video,
        },
    })
}

/// Video record to one summary sample plus gateway-generated MCQs. Without
/// a gateway only the summary is emitted.
pub fn video_caption_to_tasks(
    rec: &IngestRecord,
    modality: ModalityTag,
    prompt: &SynthesisPrompt,
    pool: &SynonymPool,
    seed: u64,
    gateway: Option<&LlmGateway>,
) -> Result<SynthesisOutcome, SynthesisError> {
    let mut outcome = SynthesisOutcome::default();
    outcome.samples.push(video_summary_sample(rec, modality, pool, seed)?);
    let Some(gateway) = gateway else {
        return Ok(outcome);
    };
    if prompt.constraint_clause.trim().is_empty() {
        return Err(SynthesisError::MissingConstraintClause);
    }
    let caption = match &rec.annotation {
        Annotation::VideoCaption { text } => text,
        _ => unreachable!("checked by video_summary_sample"),
    };
    let request = CompletionRequest::text(prompt.render(&format!("Procedure caption: {caption}")));
    let response = gateway.complete(&request)?;

    let (blocks, unterminated) = fenced_blocks(&response.text, "mcq");
    if let Some(reason) = unterminated {
        outcome.rejects.push(RejectEntry { key: rec.key.clone(), reason });
    }
    if blocks.is_empty() && outcome.rejects.is_empty() {
        outcome.rejects.push(RejectEntry {
            key: rec.key.clone(),
            reason: "no mcq blocks in response".to_string(),
        });
    }

    for (i, block) in blocks.iter().enumerate() {
        let reject = |reason: String| RejectEntry { key: format!("{}#mcq{i}", rec.key), reason };
        let fields = parse_fields(block);
        let question = fields.get("QUESTION").map(String::as_str).unwrap_or("");
        let answer = fields.get("ANSWER").map(String::as_str).unwrap_or("");
        if question.is_empty() || answer.is_empty() {
            outcome.rejects.push(reject("mcq block missing QUESTION or ANSWER".into()));
            continue;
        }
        let distractors: Vec<String> = fields
            .get("DISTRACTORS")
            .map(String::as_str)
            .unwrap_or("")
            .split('|')
            .map(str::trim)
            .filter(|d| !d.is_empty())
            .map(String::from)
            .collect();
        if distractors.is_empty() || distractors.len() > 3 {
            outcome.rejects.push(reject(format!(
                "distractor count {} outside the allowed 1-3",
                distractors.len()
            )));
            continue;
        }
        if distractors.iter().any(|d| d == answer) {
            outcome.rejects.push(reject("distractor equals the correct answer".into()));
            continue;
        }

        let mut rng =
            record_rng(seed, &["video-mcq", &rec.dataset, &rec.key, &i.to_string()]);
        let mut options: Vec<(String, bool)> = Vec::with_capacity(distractors.len() + 1);
        options.push((answer.to_string(), true));
        options.extend(distractors.into_iter().map(|d| (d, false)));
        options.shuffle(&mut rng);
        let answer_space: Vec<AnswerOption> = options
            .into_iter()
            .zip(OPTION_LETTERS)
            .map(|((text, correct), letter)| AnswerOption {
                label: letter.to_string(),
                text,
                correct,
            })
            .collect();
        let gold_letter =
            answer_space.iter().find(|o| o.correct).map(|o| o.label.clone()).expect("one correct");

        let mut stem = format!("{} {question}", media_placeholder(0));
        for option in &answer_space {
            stem.push_str(&format!("\n{}. {}", option.label, option.text));
        }
        let sample = VqaSample {
            id: sample_id(rec, &format!("mcq{i}")),
            task: TaskKind::VideoMcq,
            modality,
            language: Language::En,
            media: vec![rec.media.clone()],
            turns: vec![
                ConversationTurn::human(stem),
                ConversationTurn::assistant(gold_letter),
            ],
            answer_space: Some(answer_space),
            provenance: SourceRecordRef {
                dataset: rec.dataset.clone(),
                key: rec.key.clone(),
                strategy: SynthesisStrategy::Video,
            },
        };
        match finish_sample(sample) {
            Ok(sample) => outcome.samples.push(sample),
            Err(err) => outcome.rejects.push(reject(err.to_string())),
        }
    }
    Ok(outcome)
}

/// Default prompt for the translation pass; `{text}` is replaced per turn.
pub const DEFAULT_TRANSLATION_TEMPLATE: &str =
    "Translate the following medical text into Chinese. Reply with only the translation.\n\n{text}";

/// Produces Chinese copies of the given samples by translating each turn
/// and option text through the gateway. Multiple-choice answer letters are
/// left untouched.
pub fn bilingual_pass(
    samples: &[VqaSample],
    template: &str,
    gateway: &LlmGateway,
) -> Result<Vec<VqaSample>, SynthesisError> {
    if !template.contains("{text}") {
        return Err(SynthesisError::BadTranslationTemplate);
    }
    let translate = |text: &str| -> Result<String, SynthesisError> {
        let response =
            gateway.complete(&CompletionRequest::text(template.replace("{text}", text)))?;
        Ok(response.text.trim().to_string())
    };

    let mut translated = Vec::with_capacity(samples.len());
    for sample in samples {
        let mut out = sample.clone();
        out.id = format!("{}-zh", sample.id);
        out.language = Language::Zh;
        for turn in &mut out.turns {
            // Option letters and placeholder tokens must survive verbatim;
            // only the natural-language remainder is translated.
            if sample.answer_space.is_some() && turn.text.trim().len() <= 2 {
                continue;
            }
            let placeholders: Vec<String> = (0..sample.media.len())
                .map(media_placeholder)
                .filter(|p| turn.text.contains(p.as_str()))
                .collect();
            let stripped = strip_media_placeholders(&turn.text);
            if stripped.trim().is_empty() {
                continue;
            }
            let body = translate(&stripped)?;
            turn.text = if placeholders.is_empty() {
                body
            } else {
                format!("{} {body}", placeholders.join(" "))
            };
        }
        if let Some(options) = &mut out.answer_space {
            for option in options {
                option.text = translate(&option.text)?;
            }
        }
        translated.push(finish_sample(out)?);
    }
    Ok(translated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::GatewayConfig;

    fn fixture_gateway(dir: &Path, request: &CompletionRequest, reply: &str) -> LlmGateway {
        let gateway = LlmGateway::new(GatewayConfig::replay(dir.to_path_buf()));
        gateway.store_fixture(request, reply).unwrap();
        gateway
    }

    fn caption_record() -> IngestRecord {
        IngestRecord {
            dataset: "capset".into(),
            key: "r1".into(),
            media: MediaRef::image("images/a.png"),
            annotation: Annotation::Caption { text: "Small apical pneumothorax.".into() },
        }
    }

    fn video_record() -> IngestRecord {
        IngestRecord {
            dataset: "vidset".into(),
            key: "v1".into(),
            media: MediaRef::Video {
                uri: "videos/v1.mp4".into(),
                frame_count: 120,
                fps: 30.0,
                sampled_frames: vec![],
                frame_size: Some((640, 480)),
            },
            annotation: Annotation::VideoCaption {
                text: "Laparoscopic cholecystectomy with clip placement.".into(),
            },
        }
    }

    #[test]
    fn qa_blocks_become_open_samples() {
        let dir = tempfile::tempdir().unwrap();
        let rec = caption_record();
        let prompt = SynthesisPrompt::qa_default();
        let request =
            CompletionRequest::text(prompt.render("Source caption: Small apical pneumothorax."));
        let reply = "```qa\nQUESTION: What abnormality is present?\nANSWER: A small apical pneumothorax.\n```\n\
                     ```qa\nQUESTION: Which side is affected?\nANSWER: The apex.\n```";
        let gateway = fixture_gateway(dir.path(), &request, reply);

        let outcome =
            llm_assisted_synthesize(&rec, ModalityTag::Xray, &prompt, dir.path(), &gateway)
                .unwrap();
        assert_eq!(outcome.samples.len(), 2);
        assert!(outcome.rejects.is_empty());
        assert_eq!(outcome.samples[0].provenance.strategy, SynthesisStrategy::LlmAssisted);
        assert_eq!(outcome.samples[1].turns[1].text, "The apex.");
    }

    #[test]
    fn block_without_answer_is_rejected_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let rec = caption_record();
        let prompt = SynthesisPrompt::qa_default();
        let request =
            CompletionRequest::text(prompt.render("Source caption: Small apical pneumothorax."));
        let reply = "```qa\nQUESTION: What abnormality is present?\n```";
        let gateway = fixture_gateway(dir.path(), &request, reply);

        let outcome =
            llm_assisted_synthesize(&rec, ModalityTag::Xray, &prompt, dir.path(), &gateway)
                .unwrap();
        assert!(outcome.samples.is_empty());
        assert_eq!(outcome.rejects.len(), 1);
        assert!(outcome.rejects[0].reason.contains("missing QUESTION or ANSWER"));
    }

    #[test]
    fn missing_constraint_clause_is_a_precondition_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut prompt = SynthesisPrompt::qa_default();
        prompt.constraint_clause = "  ".into();
        let gateway = LlmGateway::new(GatewayConfig::replay(dir.path().to_path_buf()));
        let err = llm_assisted_synthesize(
            &caption_record(),
            ModalityTag::Xray,
            &prompt,
            dir.path(),
            &gateway,
        )
        .unwrap_err();
        assert!(matches!(err, SynthesisError::MissingConstraintClause));
    }

    #[test]
    fn video_without_gateway_emits_summary_only() {
        let rec = video_record();
        let outcome = video_caption_to_tasks(
            &rec,
            ModalityTag::Video,
            &SynthesisPrompt::video_mcq_default(),
            &SynonymPool::default(),
            3,
            None,
        )
        .unwrap();
        assert_eq!(outcome.samples.len(), 1);
        assert_eq!(outcome.samples[0].task, TaskKind::VideoSummary);
        assert_eq!(
            outcome.samples[0].turns[1].text,
            "Laparoscopic cholecystectomy with clip placement."
        );
    }

    #[test]
    fn video_mcq_bounds_enforced() {
        let dir = tempfile::tempdir().unwrap();
        let rec = video_record();
        let prompt = SynthesisPrompt::video_mcq_default();
        let request = CompletionRequest::text(prompt.render(
            "Procedure caption: Laparoscopic cholecystectomy with clip placement.",
        ));
        let reply = "```mcq\nQUESTION: What procedure is shown?\nANSWER: Laparoscopic cholecystectomy\nDISTRACTORS: Appendectomy | Colonoscopy | Hernia repair\n```\n\
                     ```mcq\nQUESTION: Overstuffed?\nANSWER: x\nDISTRACTORS: a | b | c | d | e\n```";
        let gateway = fixture_gateway(dir.path(), &request, reply);

        let outcome = video_caption_to_tasks(
            &rec,
            ModalityTag::Video,
            &prompt,
            &SynonymPool::default(),
            3,
            Some(&gateway),
        )
        .unwrap();
        // Summary plus the one in-bounds MCQ; the 5-distractor block rejects.
        assert_eq!(outcome.samples.len(), 2);
        assert_eq!(outcome.rejects.len(), 1);
        assert!(outcome.rejects[0].reason.contains("outside the allowed 1-3"));

        let mcq = &outcome.samples[1];
        assert_eq!(mcq.task, TaskKind::VideoMcq);
        let options = mcq.answer_space.as_ref().unwrap();
        assert_eq!(options.len(), 4);
        assert_eq!(options.iter().filter(|o| o.correct).count(), 1);
    }

    #[test]
    fn fenced_block_parsing_handles_noise() {
        let text = "preamble\n```qa\nQUESTION: q\nANSWER: line one\n  line two\n```\ntrailing\n```qa\nQUESTION: only\n";
        let (blocks, unterminated) = fenced_blocks(text, "qa");
        assert_eq!(blocks.len(), 1);
        assert!(unterminated.is_some());

        let fields = parse_fields(&blocks[0]);
        assert_eq!(fields["QUESTION"], "q");
        assert_eq!(fields["ANSWER"], "line one\nline two");
    }

    #[test]
    fn bilingual_pass_translates_and_retags() {
        let dir = tempfile::tempdir().unwrap();
        let sample = crate::sample::test_support::open_qa_sample("s1");

        let gateway = LlmGateway::new(GatewayConfig::replay(dir.path().to_path_buf()));
        for (source, translation) in [
            ("What abnormality is shown?", "显示了什么异常？"),
            ("Cardiomegaly with clear lungs.", "心脏扩大，肺部清晰。"),
        ] {
            let request = CompletionRequest::text(
                DEFAULT_TRANSLATION_TEMPLATE.replace("{text}", source),
            );
            gateway.store_fixture(&request, translation).unwrap();
        }

        let out = bilingual_pass(&[sample], DEFAULT_TRANSLATION_TEMPLATE, &gateway).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "s1-zh");
        assert_eq!(out[0].language, Language::Zh);
        assert!(out[0].turns[0].text.starts_with(&media_placeholder(0)));
        assert!(out[0].turns[0].text.contains("显示了什么异常？"));
        assert_eq!(out[0].turns[1].text, "心脏扩大，肺部清晰。");
    }

    #[test]
    fn translation_template_must_have_text_slot() {
        let dir = tempfile::tempdir().unwrap();
        let gateway = LlmGateway::new(GatewayConfig::replay(dir.path().to_path_buf()));
        let err = bilingual_pass(&[], "translate please", &gateway).unwrap_err();
        assert!(matches!(err, SynthesisError::BadTranslationTemplate));
    }
}
