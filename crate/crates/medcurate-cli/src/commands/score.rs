use std::path::Path;

use anyhow::Context;
use medcurate_core::rewards::{
    score_group, FormatSpec, GenerationGroup, GroupTask, GrpoConfig, ScoredGeneration,
};
use serde::Serialize;

use crate::commands::Ctx;
use crate::runlog::{read_jsonl, write_jsonl};

#[derive(Debug, Serialize)]
struct ScoredGroupRow {
    prompt_id: String,
    task: GroupTask,
    results: Vec<ScoredGeneration>,
}

/// Scores generation groups with the format and accuracy rewards and
/// attaches group-relative advantages. Open-ended groups are judged through
/// the gateway, so a [gateway] section is required when any are present.
pub fn run(ctx: &Ctx, groups_flag: Option<&Path>) -> anyhow::Result<()> {
    let sec = &ctx.loaded.cfg.score;
    let groups_path =
        ctx.input_path(groups_flag, sec.groups.as_deref(), None, "score.groups")?;
    let groups: Vec<GenerationGroup> = read_jsonl(&groups_path)?;

    let gateway = if groups.iter().any(|g| g.task == GroupTask::Open) {
        Some(ctx.gateway("scoring open-ended groups")?)
    } else {
        None
    };
    let format_spec = FormatSpec {
        answer_marker: sec.format_marker.clone(),
        require_reasoning_block: sec.require_reasoning,
    };
    let cfg = GrpoConfig::default();

    let mut rows = Vec::with_capacity(groups.len());
    let mut generations = 0u64;
    for group in &groups {
        let results = score_group(
            group,
            &cfg,
            &format_spec,
            gateway.as_ref(),
            sec.judge_template.as_deref(),
        )
        .with_context(|| format!("scoring group {}", group.prompt_id))?;
        generations += results.len() as u64;
        rows.push(ScoredGroupRow {
            prompt_id: group.prompt_id.clone(),
            task: group.task,
            results,
        });
    }

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    write_jsonl(&ctx.out_dir.join("scores.jsonl"), &rows)?;

    let mut manifest = ctx.manifest("score-groups");
    manifest.count("groups", rows.len() as u64);
    manifest.count("generations", generations);
    manifest.record_output(&ctx.out_dir, "scores.jsonl")?;
    if let Some(gateway) = &gateway {
        manifest.gateway = Some(gateway.stats());
    }
    manifest.write(&ctx.out_dir)?;

    log::info!("scored {} groups ({generations} generations)", rows.len());
    Ok(())
}
