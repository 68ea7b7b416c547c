use std::path::Path;

use anyhow::Context;
use medcurate_core::eval::{
    classify_metrics, read_predictions, render_report_table, run_benchmark,
};
use medcurate_core::sample::read_corpus;

use crate::commands::Ctx;
use crate::config::ConfigError;

/// Scores a predictions file against a reference corpus, prints the scaled
/// score table, and writes the full report as JSON.
pub fn run(ctx: &Ctx, refs_flag: Option<&Path>, preds_flag: Option<&Path>) -> anyhow::Result<()> {
    let sec = &ctx.loaded.cfg.evaluate;
    let refs_path = ctx.input_path(refs_flag, sec.refs.as_deref(), None, "evaluate.refs")?;
    let preds_path =
        ctx.input_path(preds_flag, sec.preds.as_deref(), None, "evaluate.preds")?;
    let (metrics, unsupported) = classify_metrics(&sec.metrics)
        .map_err(|e| ConfigError(format!("evaluate.metrics: {e}")))?;

    let refs = read_corpus(&refs_path)?;
    let preds = read_predictions(&preds_path)?;

    let mut report = run_benchmark(&sec.benchmark, &refs, &preds, &metrics)?;
    report.config.unsupported = unsupported;

    print!("{}", render_report_table(&report));

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let report_path = ctx.out_dir.join("report.json");
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    std::fs::write(&report_path, bytes)
        .with_context(|| format!("writing {}", report_path.display()))?;

    let mut manifest = ctx.manifest("evaluate");
    manifest.count("samples", report.sample_count);
    manifest.record_output(&ctx.out_dir, "report.json")?;
    manifest.write(&ctx.out_dir)?;
    Ok(())
}
