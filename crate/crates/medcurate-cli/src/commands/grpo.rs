use anyhow::Context;
use medcurate_core::manifest::TrainingManifest;
use medcurate_core::sample::{read_corpus, write_corpus};
use medcurate_core::synthesis::{draw_uniform, prepare_grpo};

use crate::commands::Ctx;
use crate::runlog::write_jsonl;

/// Cuts an instruction corpus down to an RL training corpus: seeded uniform
/// draw, multiple-choice reformulation to open questions, then yes/no
/// rebalancing. The four-stage hyperparameter manifest is written alongside
/// for the downstream trainer.
pub fn run(ctx: &Ctx) -> anyhow::Result<()> {
    let sec = &ctx.loaded.cfg.grpo;
    let input = ctx.input_path(
        None,
        sec.input.as_deref(),
        Some("synthesize/corpus.jsonl"),
        "grpo.input",
    )?;
    let samples = read_corpus(&input)?;

    let mut manifest = ctx.manifest("prepare-grpo");
    manifest.count("input", samples.len() as u64);

    let samples = match sec.draw {
        Some(n) => draw_uniform(samples, n, ctx.seed)?,
        None => samples,
    };
    manifest.count("drawn", samples.len() as u64);

    let outcome = prepare_grpo(samples, sec.target_yes_no, ctx.seed)?;

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let corpus_manifest = write_corpus(ctx.out_dir.join("corpus.jsonl"), &outcome.samples)?;
    write_jsonl(&ctx.out_dir.join("rejects.jsonl"), &outcome.rejects)?;
    let training_path = ctx.out_dir.join("training_manifest.json");
    TrainingManifest::four_stage_default()
        .write(&training_path)
        .with_context(|| format!("writing {}", training_path.display()))?;

    manifest.count("samples", corpus_manifest.count);
    manifest.count("converted", outcome.converted as u64);
    manifest.count("rejects", outcome.rejects.len() as u64);
    manifest.count("yes_no_total", outcome.yes_no_total as u64);
    manifest.count("yes_no_kept", outcome.yes_no_kept as u64);
    manifest.record_output(&ctx.out_dir, "corpus.jsonl")?;
    manifest.record_output(&ctx.out_dir, "corpus.jsonl.manifest.json")?;
    manifest.record_output(&ctx.out_dir, "rejects.jsonl")?;
    manifest.record_output(&ctx.out_dir, "training_manifest.json")?;
    manifest.write(&ctx.out_dir)?;

    log::info!(
        "wrote {} samples ({} reformulated, yes/no {} -> {}), {} rejects",
        corpus_manifest.count,
        outcome.converted,
        outcome.yes_no_total,
        outcome.yes_no_kept,
        outcome.rejects.len()
    );
    Ok(())
}
