//! Turns ingest records into training samples.
//!
//! Four strategy families live here: direct conversion of captions and
//! boxes, template generation from class labels, gateway-assisted QA and
//! video MCQ generation, and slice-series QA for volumes. [`grpo`] adds the
//! RL preparation pass. Seeded ops derive their RNG from the record
//! identity, so a batch produces the same corpus whether it runs on one
//! thread or sixteen.

mod grpo;
mod llm;
mod pools;
mod template;

pub use grpo::{
    downsample_yes_no, draw_uniform, is_yes_no_sample, mcq_to_open, prepare_grpo,
    DownsampleOutcome, GrpoPrepOutcome,
};
pub use llm::{
    bilingual_pass, llm_assisted_synthesize, video_caption_to_tasks, SynthesisPrompt,
    DEFAULT_TRANSLATION_TEMPLATE,
};
pub use pools::{RegionGrid, SynonymPool};
pub use template::{
    caption_to_qa, label_to_mcq, label_to_open_qa, mask_to_localization, volume_to_qa, McqSpec,
};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::GatewayError;
use crate::ingest::{Annotation, IngestRecord, RejectEntry};
use crate::sample::{validate, ModalityTag, TaskKind, VqaSample};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("record {key:?} does not carry a {expected} annotation")]
    WrongStyle { key: String, expected: &'static str },
    #[error("record {key:?} has empty source text")]
    EmptyText { key: String },
    #[error("no templates configured for task {task}")]
    EmptyPool { task: TaskKind },
    #[error("template {template:?} uses undeclared placeholder {{{placeholder}}}")]
    UndeclaredPlaceholder { template: String, placeholder: String },
    #[error("bad pool or grid config: {reason}")]
    BadPoolConfig { reason: String },
    #[error("region grid needs at least one named row and column")]
    BadGrid,
    #[error("box center ({cx}, {cy}) lies outside the image")]
    CenterOutOfBounds { cx: f64, cy: f64 },
    #[error("bad MCQ spec: {reason}")]
    BadMcqSpec { reason: String },
    #[error("need {needed} distinct distractors but vocabulary offers {available}")]
    InsufficientDistractors { needed: usize, available: usize },
    #[error("synthesis prompt is missing its constraint clause")]
    MissingConstraintClause,
    #[error("translation template must contain a {{text}} slot")]
    BadTranslationTemplate,
    #[error("sample {id:?} is not a multiple-choice question with one correct option")]
    NotMcq { id: String },
    #[error("sample {id:?} embeds {found} option lines but declares {expected} options")]
    MalformedOptionBlock { id: String, found: usize, expected: usize },
    #[error("sample {id:?} stem refers to an option letter and cannot be opened")]
    OptionReferencingStem { id: String },
    #[error("target fraction {value} must be strictly between 0 and 1")]
    BadTargetFraction { value: f64 },
    #[error("requested draw of {requested} samples but the corpus only has {available}")]
    DrawTooLarge { requested: usize, available: usize },
    #[error("synthesized sample {id:?} fails validation: {codes:?}")]
    InvalidSynthesized { id: String, codes: Vec<&'static str> },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Samples plus the per-record rejects produced alongside them.
#[derive(Debug, Clone, Default)]
pub struct SynthesisOutcome {
    pub samples: Vec<VqaSample>,
    pub rejects: Vec<RejectEntry>,
}

/// RNG derived from the run seed and the record identity. Two records never
/// share a stream, and a record's stream does not depend on where in the
/// batch it sits.
pub fn record_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for part in parts {
        hasher.update([0xff]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

fn sample_id(rec: &IngestRecord, suffix: &str) -> String {
    format!("{}/{}#{suffix}", rec.dataset, rec.key)
}

/// Runs schema validation on a freshly built sample. Synthesis never emits
/// a sample the corpus writer would refuse.
fn finish_sample(sample: VqaSample) -> Result<VqaSample, SynthesisError> {
    let check = validate(&sample);
    if check.is_pass() {
        Ok(sample)
    } else {
        Err(SynthesisError::InvalidSynthesized { id: sample.id, codes: check.codes() })
    }
}

/// Knobs shared by the pure template strategies.
#[derive(Debug, Clone, Copy)]
pub struct TemplateOptions<'a> {
    pub pool: &'a SynonymPool,
    pub grid: &'a RegionGrid,
    /// Distractors per generated MCQ; 3 gives the usual 4-option question.
    pub distractors: usize,
    pub seed: u64,
}

/// Applies the gateway-free strategy for a record's annotation style.
/// Label records yield both an MCQ and an open question; video records
/// yield the summary sample only.
pub fn synthesize_pure(
    rec: &IngestRecord,
    modality: ModalityTag,
    opts: &TemplateOptions<'_>,
) -> Result<Vec<VqaSample>, SynthesisError> {
    match &rec.annotation {
        Annotation::Caption { .. } => Ok(vec![caption_to_qa(rec, modality, opts.pool, opts.seed)?]),
        Annotation::MaskRegion { .. } => {
            Ok(vec![mask_to_localization(rec, modality, opts.grid, opts.pool, opts.seed)?])
        }
        Annotation::ClassLabel { .. } => {
            let spec = McqSpec::from_record(rec, opts.distractors, opts.seed)?;
            Ok(vec![
                label_to_mcq(rec, modality, &spec, opts.pool)?,
                label_to_open_qa(rec, modality, opts.pool, opts.seed)?,
            ])
        }
        Annotation::VolumeAnnotation { .. } => {
            Ok(vec![volume_to_qa(rec, modality, None, opts.pool, opts.seed)?])
        }
        Annotation::VideoCaption { .. } => {
            Ok(vec![llm::video_summary_sample(rec, modality, opts.pool, opts.seed)?])
        }
    }
}

/// Order-preserving parallel map over a slice with a fixed worker count.
/// Results land at their input index regardless of completion order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    let workers = workers.clamp(1, items.len().max(1));
    let cursor = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<U>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = cursor.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("slot lock").expect("worker filled slot"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::MediaRef;
    use rand::Rng;

    #[test]
    fn record_rng_is_stable_and_keyed() {
        let a: u64 = record_rng(7, &["label-to-mcq", "ds", "k1"]).random();
        let b: u64 = record_rng(7, &["label-to-mcq", "ds", "k1"]).random();
        let c: u64 = record_rng(7, &["label-to-mcq", "ds", "k2"]).random();
        let d: u64 = record_rng(8, &["label-to-mcq", "ds", "k1"]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        // Part boundaries matter: ("ab","c") differs from ("a","bc").
        let e: u64 = record_rng(7, &["ab", "c"]).random();
        let f: u64 = record_rng(7, &["a", "bc"]).random();
        assert_ne!(e, f);
    }

    #[test]
    fn par_map_preserves_order() {
        let items: Vec<u32> = (0..500).collect();
        let out = par_map(&items, 8, |x| x * 2);
        assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        let single = par_map(&items, 1, |x| x * 2);
        assert_eq!(out, single);
        assert!(par_map(&Vec::<u32>::new(), 4, |x: &u32| *x).is_empty());
    }

    #[test]
    fn label_records_yield_mcq_and_open_pair() {
        let rec = IngestRecord {
            dataset: "labset".into(),
            key: "k1".into(),
            media: MediaRef::image("a.png"),
            annotation: Annotation::ClassLabel {
                label: "melanoma".into(),
                vocabulary: ["melanoma", "nevus", "keratosis", "lentigo", "dermatofibroma"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
            },
        };
        let pool = SynonymPool::default();
        let grid = RegionGrid::default();
        let opts = TemplateOptions { pool: &pool, grid: &grid, distractors: 3, seed: 5 };
        let out = synthesize_pure(&rec, ModalityTag::Dermoscopy, &opts).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].task, TaskKind::Mcq);
        assert_eq!(out[1].task, TaskKind::OpenQa);
        assert_eq!(out[0].id, "labset/k1#mcq");
        assert_eq!(out[1].id, "labset/k1#open");
    }

    #[test]
    fn batches_are_thread_count_invariant() {
        let records: Vec<IngestRecord> = (0..64)
            .map(|i| IngestRecord {
                dataset: "capset".into(),
                key: format!("r{i}"),
                media: MediaRef::image(format!("img{i}.png")),
                annotation: Annotation::Caption { text: format!("Finding number {i}.") },
            })
            .collect();
        let pool = SynonymPool::default();
        let grid = RegionGrid::default();
        let opts = TemplateOptions { pool: &pool, grid: &grid, distractors: 3, seed: 9 };

        let parallel = par_map(&records, 8, |rec| {
            synthesize_pure(rec, ModalityTag::Xray, &opts).unwrap()
        });
        let sequential: Vec<_> = records
            .iter()
            .map(|rec| synthesize_pure(rec, ModalityTag::Xray, &opts).unwrap())
            .collect();
        assert_eq!(parallel, sequential);
    }
}
