use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context};
use medcurate_core::ingest::{
    sample_slice_indices, Annotation, IngestRecord, Registry, RejectEntry, SliceSampleSpec,
};
use medcurate_core::sample::{write_corpus, MediaRef, TaskKind, VqaSample};
use medcurate_core::synthesis::{
    bilingual_pass, llm_assisted_synthesize, synthesize_pure, video_caption_to_tasks,
    volume_to_qa, RegionGrid, SynonymPool, SynthesisPrompt, TemplateOptions,
    DEFAULT_TRANSLATION_TEMPLATE,
};

use crate::commands::Ctx;
use crate::config::ConfigError;
use crate::runlog::write_jsonl;

/// Applies every enabled strategy to the ingest output and writes one
/// validated corpus. Gateway-backed strategies record their per-record
/// failures as rejects; an invalid synthesized sample aborts the run.
pub fn run(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.loaded.cfg;
    let sec = &cfg.synthesize;
    let enabled: BTreeSet<&str> = sec.strategies.iter().map(String::as_str).collect();
    if enabled.is_empty() {
        log::warn!("all synthesis strategies are disabled; writing an empty corpus");
    }
    if let Some(k) = sec.slice_count {
        if k < 2 {
            return Err(ConfigError(format!(
                "synthesize.slice_count must be at least 2, got {k}"
            ))
            .into());
        }
    }

    let input_dir =
        ctx.input_path(None, sec.input.as_deref(), Some("ingest"), "synthesize.input")?;
    let registry_path = ctx.loaded.existing(&cfg.pipeline.registry, "registry")?;
    let registry = Registry::open(&registry_path)?;
    let media_root = ctx.media_root();

    let pool = match &sec.pool {
        Some(p) => SynonymPool::load(&ctx.loaded.existing(p, "synthesize.pool")?)?,
        None => SynonymPool::default(),
    };
    let grid = match &sec.grid {
        Some(p) => RegionGrid::load(&ctx.loaded.existing(p, "synthesize.grid")?)?,
        None => RegionGrid::default(),
    };

    let gateway = if sec.llm_assisted || sec.video_mcq || sec.bilingual {
        Some(ctx.gateway("synthesize with llm_assisted, video_mcq, or bilingual")?)
    } else {
        None
    };
    let qa_prompt = SynthesisPrompt::qa_default();
    let video_prompt = SynthesisPrompt::video_mcq_default();
    let opts = TemplateOptions {
        pool: &pool,
        grid: &grid,
        distractors: sec.distractors,
        seed: ctx.seed,
    };

    let mut record_files: Vec<PathBuf> = std::fs::read_dir(&input_dir)
        .with_context(|| format!("listing {}", input_dir.display()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".records.jsonl"))
        })
        .collect();
    record_files.sort();
    if record_files.is_empty() {
        return Err(ConfigError(format!(
            "no *.records.jsonl files in {}; run ingest first",
            input_dir.display()
        ))
        .into());
    }

    let mut samples: Vec<VqaSample> = Vec::new();
    let mut rejects: Vec<RejectEntry> = Vec::new();
    let mut manifest = ctx.manifest("synthesize");

    for file in &record_files {
        let records: Vec<IngestRecord> = crate::runlog::read_jsonl(file)?;
        for rec in &records {
            let Some(reg) = registry.get(&rec.dataset) else {
                bail!(
                    "record {}/{} names a dataset missing from the registry",
                    rec.dataset,
                    rec.key
                );
            };
            let modality = reg.modality;
            let strategy = match &rec.annotation {
                Annotation::Caption { .. } => "caption",
                Annotation::MaskRegion { .. } => "mask",
                Annotation::ClassLabel { .. } => "label",
                Annotation::VolumeAnnotation { .. } => "volume",
                Annotation::VideoCaption { .. } => "video",
            };
            if !enabled.contains(strategy) {
                continue;
            }
            match &rec.annotation {
                Annotation::Caption { .. }
                | Annotation::MaskRegion { .. }
                | Annotation::ClassLabel { .. } => {
                    let new = synthesize_pure(rec, modality, &opts).with_context(|| {
                        format!("{strategy} synthesis failed for {}/{}", rec.dataset, rec.key)
                    })?;
                    bump(&mut manifest, strategy, new.len() as u64);
                    samples.extend(new);

                    let llm_applies = sec.llm_assisted
                        && matches!(
                            rec.annotation,
                            Annotation::Caption { .. } | Annotation::ClassLabel { .. }
                        );
                    if llm_applies {
                        let gateway = gateway.as_ref().expect("gateway built above");
                        let outcome = llm_assisted_synthesize(
                            rec, modality, &qa_prompt, &media_root, gateway,
                        )
                        .with_context(|| {
                            format!("llm synthesis failed for {}/{}", rec.dataset, rec.key)
                        })?;
                        bump(&mut manifest, "llm-qa", outcome.samples.len() as u64);
                        samples.extend(outcome.samples);
                        rejects.extend(outcome.rejects);
                    }
                }
                Annotation::VolumeAnnotation { .. } => {
                    let series = subsampled_series(rec, sec.slice_count)?;
                    let sample = volume_to_qa(rec, modality, series, &pool, ctx.seed)
                        .with_context(|| {
                            format!("volume synthesis failed for {}/{}", rec.dataset, rec.key)
                        })?;
                    bump(&mut manifest, "volume", 1);
                    samples.push(sample);
                }
                Annotation::VideoCaption { .. } => {
                    let gw = if sec.video_mcq { gateway.as_ref() } else { None };
                    let outcome =
                        video_caption_to_tasks(rec, modality, &video_prompt, &pool, ctx.seed, gw)
                            .with_context(|| {
                                format!(
                                    "video synthesis failed for {}/{}",
                                    rec.dataset, rec.key
                                )
                            })?;
                    for sample in &outcome.samples {
                        let name = if sample.task == TaskKind::VideoMcq {
                            "video-mcq"
                        } else {
                            "video-summary"
                        };
                        bump(&mut manifest, name, 1);
                    }
                    samples.extend(outcome.samples);
                    rejects.extend(outcome.rejects);
                }
            }
        }
    }

    if sec.bilingual && !samples.is_empty() {
        let template =
            sec.translation_template.as_deref().unwrap_or(DEFAULT_TRANSLATION_TEMPLATE);
        let gateway = gateway.as_ref().expect("gateway built above");
        let translated = bilingual_pass(&samples, template, gateway)?;
        bump(&mut manifest, "bilingual", translated.len() as u64);
        samples.extend(translated);
    }

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let corpus_manifest = write_corpus(ctx.out_dir.join("corpus.jsonl"), &samples)?;
    write_jsonl(&ctx.out_dir.join("rejects.jsonl"), &rejects)?;

    manifest.count("samples", corpus_manifest.count);
    manifest.count("rejects", rejects.len() as u64);
    manifest.record_output(&ctx.out_dir, "corpus.jsonl")?;
    manifest.record_output(&ctx.out_dir, "corpus.jsonl.manifest.json")?;
    manifest.record_output(&ctx.out_dir, "rejects.jsonl")?;
    if let Some(gateway) = &gateway {
        manifest.gateway = Some(gateway.stats());
    }
    manifest.write(&ctx.out_dir)?;

    let counts: Vec<String> = manifest
        .counters
        .iter()
        .filter(|(name, _)| *name != "samples" && *name != "rejects")
        .map(|(name, n)| format!("{name} {n}"))
        .collect();
    log::info!(
        "wrote {} samples ({}), {} rejects",
        corpus_manifest.count,
        counts.join(", "),
        rejects.len()
    );
    Ok(())
}

fn bump(manifest: &mut crate::runlog::RunManifest, name: &str, by: u64) {
    let current = manifest.counters.get(name).copied().unwrap_or(0);
    manifest.count(name, current + by);
}

/// Subsamples a stored slice series down to `k` evenly spaced slices. Series
/// already at or below `k`, and non-series media, pass through untouched.
fn subsampled_series(
    rec: &IngestRecord,
    slice_count: Option<u32>,
) -> anyhow::Result<Option<MediaRef>> {
    let Some(k) = slice_count else { return Ok(None) };
    let MediaRef::SliceSeries { slices, source_depth } = &rec.media else {
        return Ok(None);
    };
    if slices.len() <= k as usize {
        return Ok(None);
    }
    let spec = SliceSampleSpec::new(k, slices.len() as u32)?;
    let picked = sample_slice_indices(&spec)?
        .into_iter()
        .map(|i| slices[i as usize].clone())
        .collect();
    Ok(Some(MediaRef::SliceSeries { slices: picked, source_depth: *source_depth }))
}
