//! Benchmark scoring: accuracy, ROUGE-L, and CIDEr over prediction files.
//!
//! References are a corpus of samples; predictions arrive as JSONL rows of
//! `{id, prediction}`. Metrics are requested by name, checked for
//! compatibility with the tasks present (text metrics refuse
//! multiple-choice corpora, accuracy refuses free-text answers that are
//! not yes/no), and reported on the 0-100 scale alongside per-sample
//! detail rows. Reports are deterministic: same inputs, same bytes.

mod cider;
mod text;

pub use cider::{cider, cider_per_pair, CiderPair, CiderVariant};
pub use text::{rouge_l, tokenize};

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rewards::match_option;
use crate::sample::{TaskKind, VqaSample};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed prediction row: {source}")]
    MalformedPrediction {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate prediction id {id:?}")]
    DuplicatePredictionId { id: String },
    #[error("predictions reference unknown sample ids: {}", ids.join(", "))]
    UnknownPredictionIds { ids: Vec<String> },
    #[error("no predictions for sample ids: {}", ids.join(", "))]
    MissingPredictions { ids: Vec<String> },
    #[error("metric {metric} is incompatible with sample {sample_id:?} (task {task})")]
    MetricIncompatible { metric: String, sample_id: String, task: TaskKind },
    #[error("metric {name:?} needs an external learned scorer and is unsupported")]
    UnsupportedMetric { name: String },
    #[error("reference corpus is empty")]
    EmptyCorpus,
}

/// One model output to score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub prediction: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

/// Metrics this harness can compute. Learned-scorer metrics (RaTE, Semb,
/// RadCliQ) are recognized by [`MetricKind::parse`] but refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Accuracy,
    RougeL,
    Cider,
    CiderD,
}

impl MetricKind {
    pub fn parse(name: &str) -> Result<Self, EvalError> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "accuracy" => Ok(MetricKind::Accuracy),
            "rouge-l" | "rougel" => Ok(MetricKind::RougeL),
            "cider" => Ok(MetricKind::Cider),
            "cider-d" | "ciderd" => Ok(MetricKind::CiderD),
            other => Err(EvalError::UnsupportedMetric { name: other.to_string() }),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::RougeL => "rouge-l",
            MetricKind::Cider => "cider",
            MetricKind::CiderD => "cider-d",
        }
    }
}

/// Splits requested metric names into computable kinds and names that are
/// recognized but need a learned scorer (rate, semb, radcliq). Unknown names
/// are still an error; duplicates collapse, order is kept.
pub fn classify_metrics(names: &[String]) -> Result<(Vec<MetricKind>, Vec<String>), EvalError> {
    const LEARNED: [&str; 3] = ["rate", "semb", "radcliq"];
    let mut kinds = Vec::new();
    let mut unsupported = Vec::new();
    for name in names {
        let canonical = name.to_ascii_lowercase().replace('_', "-");
        if LEARNED.contains(&canonical.as_str()) {
            if !unsupported.contains(&canonical) {
                unsupported.push(canonical);
            }
            continue;
        }
        let kind = MetricKind::parse(&canonical)?;
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    Ok((kinds, unsupported))
}

/// Per-sample scoring detail. Values are raw (accuracy 0/1, ROUGE-L 0-1,
/// CIDEr 0-10); the report header carries the 0-100 scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub task: TaskKind,
    pub gold: String,
    pub prediction: String,
    pub scores: BTreeMap<String, f64>,
}

/// Scoring configuration echoed into every report so numbers stay
/// interpretable later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub metrics: Vec<String>,
    pub rouge_mode: String,
    pub tokenizer: String,
    /// Requested metrics that need an external learned scorer; listed here
    /// so the report shows they were asked for but not computed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unsupported: Vec<String>,
}

/// Benchmark scores, scaled by 100 (so ROUGE-L and accuracy top out at 100
/// and CIDEr at 1000), plus per-sample rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub sample_count: u64,
    pub metrics: BTreeMap<String, f64>,
    pub config: ReportConfig,
    /// Hash of the reference corpus serialization.
    pub corpus_sha256: String,
    pub rows: Vec<SampleRow>,
}

/// Reads a predictions JSONL file, rejecting duplicate ids.
pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, EvalError> {
    let file = std::fs::File::open(path)
        .map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|source| EvalError::MalformedPrediction {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        if !seen.insert(record.id.clone()) {
            return Err(EvalError::DuplicatePredictionId { id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

/// Pairs every reference with its prediction, erroring on ids that appear
/// on only one side or twice.
fn join_by_id<'a>(
    refs: &'a [VqaSample],
    preds: &'a [PredictionRecord],
) -> Result<Vec<(&'a VqaSample, &'a PredictionRecord)>, EvalError> {
    let mut by_id: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for pred in preds {
        if by_id.insert(&pred.id, pred).is_some() {
            return Err(EvalError::DuplicatePredictionId { id: pred.id.clone() });
        }
    }
    let ref_ids: BTreeSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    let unknown: Vec<String> = preds
        .iter()
        .filter(|p| !ref_ids.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownPredictionIds { ids: unknown });
    }
    let missing: Vec<String> = refs
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions { ids: missing });
    }
    Ok(refs.iter().map(|r| (r, by_id[r.id.as_str()])).collect())
}

fn normalized_match(prediction: &str, gold: &str) -> f64 {
    if tokenize(prediction) == tokenize(gold) {
        1.0
    } else {
        0.0
    }
}

fn is_yes_no(gold: &str) -> bool {
    matches!(tokenize(gold).as_slice(), [w] if w == "yes" || w == "no")
}

fn per_sample_accuracy(sample: &VqaSample, prediction: &str) -> f64 {
    match sample.gold_letter() {
        Some(letter) => match_option(prediction, letter),
        None => normalized_match(prediction, sample.gold_answer().unwrap_or_default()),
    }
}

/// Mean per-sample accuracy times 100: option matching for multiple-choice
/// samples, normalized exact match otherwise.
pub fn accuracy(refs: &[VqaSample], preds: &[PredictionRecord]) -> Result<f64, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let joined = join_by_id(refs, preds)?;
    let sum: f64 = joined.iter().map(|(r, p)| per_sample_accuracy(r, &p.prediction)).sum();
    Ok(sum / refs.len() as f64 * 100.0)
}

fn check_compatibility(
    metric: MetricKind,
    refs: &[VqaSample],
) -> Result<(), EvalError> {
    for sample in refs {
        let ok = match metric {
            MetricKind::Accuracy => {
                sample.task.is_multiple_choice()
                    || sample.gold_answer().is_some_and(is_yes_no)
            }
            MetricKind::RougeL | MetricKind::Cider | MetricKind::CiderD => {
                !sample.task.is_multiple_choice()
            }
        };
        if !ok {
            return Err(EvalError::MetricIncompatible {
                metric: metric.as_str().to_string(),
                sample_id: sample.id.clone(),
                task: sample.task,
            });
        }
    }
    Ok(())
}

/// Scores `preds` against `refs` with every requested metric and assembles
/// the report. All corpus-level values are scaled by 100.
pub fn run_benchmark(
    benchmark: &str,
    refs: &[VqaSample],
    preds: &[PredictionRecord],
    metrics: &[MetricKind],
) -> Result<EvalReport, EvalError> {
    if refs.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    for &metric in metrics {
        check_compatibility(metric, refs)?;
    }
    let joined = join_by_id(refs, preds)?;

    let mut rows: Vec<SampleRow> = joined
        .iter()
        .map(|(r, p)| SampleRow {
            id: r.id.clone(),
            task: r.task,
            gold: r.gold_answer().unwrap_or_default().to_string(),
            prediction: p.prediction.clone(),
            scores: BTreeMap::new(),
        })
        .collect();

    let mut corpus_metrics = BTreeMap::new();
    for &metric in metrics {
        match metric {
            MetricKind::Accuracy => {
                let mut sum = 0.0;
                for (row, (r, p)) in rows.iter_mut().zip(&joined) {
                    let v = per_sample_accuracy(r, &p.prediction);
                    row.scores.insert(metric.as_str().to_string(), v);
                    sum += v;
                }
                corpus_metrics
                    .insert(metric.as_str().to_string(), sum / refs.len() as f64 * 100.0);
            }
            MetricKind::RougeL => {
                let mut sum = 0.0;
                for (row, (r, p)) in rows.iter_mut().zip(&joined) {
                    let v = rouge_l(&p.prediction, r.gold_answer().unwrap_or_default());
                    row.scores.insert(metric.as_str().to_string(), v);
                    sum += v;
                }
                corpus_metrics
                    .insert(metric.as_str().to_string(), sum / refs.len() as f64 * 100.0);
            }
            MetricKind::Cider | MetricKind::CiderD => {
                let variant = if metric == MetricKind::Cider {
                    CiderVariant::Plain
                } else {
                    CiderVariant::D
                };
                let pairs: Vec<CiderPair> = joined
                    .iter()
                    .map(|(r, p)| CiderPair {
                        hypothesis: p.prediction.clone(),
                        references: vec![r.gold_answer().unwrap_or_default().to_string()],
                    })
                    .collect();
                let per_pair = cider_per_pair(&pairs, variant);
                let mut sum = 0.0;
                for (row, v) in rows.iter_mut().zip(&per_pair) {
                    row.scores.insert(metric.as_str().to_string(), *v);
                    sum += v;
                }
                corpus_metrics
                    .insert(metric.as_str().to_string(), sum / refs.len() as f64 * 100.0);
            }
        }
    }

    Ok(EvalReport {
        benchmark: benchmark.to_string(),
        sample_count: refs.len() as u64,
        metrics: corpus_metrics,
        config: ReportConfig {
            metrics: metrics.iter().map(|m| m.as_str().to_string()).collect(),
            rouge_mode: "f1".into(),
            tokenizer: "lowercase, punctuation to spaces, whitespace split".into(),
            unsupported: Vec::new(),
        },
        corpus_sha256: corpus_hash(refs),
        rows,
    })
}

/// Hash over the corpus's JSONL serialization; equals the corpus file hash
/// when the file was produced by the corpus writer.
fn corpus_hash(refs: &[VqaSample]) -> String {
    let mut hasher = Sha256::new();
    for sample in refs {
        hasher.update(serde_json::to_vec(sample).expect("sample serializes"));
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Plain-text table of a report, for terminal output.
pub fn render_report_table(report: &EvalReport) -> String {
    let mut out = format!(
        "benchmark: {}\nsamples:   {}\n",
        report.benchmark, report.sample_count
    );
    for (name, value) in &report.metrics {
        out.push_str(&format!("{name:<10} {value:>8.2}\n"));
    }
    for name in &report.config.unsupported {
        out.push_str(&format!("{name:<10} unsupported\n"));
    }
    out
}
