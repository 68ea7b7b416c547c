use std::path::Path;

use anyhow::Context;
use medcurate_core::geometry::{budget_check, WhitespaceCounter};
use medcurate_core::sample::read_corpus;

use crate::commands::Ctx;
use crate::runlog::write_jsonl;

/// Computes text plus visual token counts and the position extent for every
/// sample in a corpus, writing one report row per sample.
pub fn run(ctx: &Ctx, corpus_flag: Option<&Path>) -> anyhow::Result<()> {
    let sec = &ctx.loaded.cfg.budget;
    let tile_cfg = sec.tile_config();
    let pos_cfg = sec.position_config()?;
    let corpus_path = ctx.input_path(
        corpus_flag,
        sec.corpus.as_deref(),
        Some("synthesize/corpus.jsonl"),
        "budget.corpus",
    )?;
    let media_root = ctx.media_root();

    let samples = read_corpus(&corpus_path)?;
    let mut reports = Vec::with_capacity(samples.len());
    let mut over = 0u64;
    for sample in &samples {
        let report = budget_check(
            sample,
            &media_root,
            &WhitespaceCounter,
            &tile_cfg,
            &pos_cfg,
            sec.max_extent,
        )
        .with_context(|| format!("budget check failed for sample {}", sample.id))?;
        if !report.within_budget {
            over += 1;
        }
        reports.push(report);
    }

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    write_jsonl(&ctx.out_dir.join("budget.jsonl"), &reports)?;

    let mut manifest = ctx.manifest("budget");
    manifest.count("samples", reports.len() as u64);
    manifest.count("over_budget", over);
    manifest.record_output(&ctx.out_dir, "budget.jsonl")?;
    manifest.write(&ctx.out_dir)?;

    log::info!(
        "{} of {} samples within extent {}",
        reports.len() as u64 - over,
        reports.len(),
        sec.max_extent
    );
    Ok(())
}
