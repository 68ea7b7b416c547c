use anyhow::Context;
use medcurate_core::ingest::{ingest_dataset, Registry};

use crate::commands::Ctx;
use crate::config::ConfigError;
use crate::runlog::write_jsonl;

/// Parses every selected dataset's manifest into record and reject files,
/// one pair per dataset. Per-row rejects are recorded, not fatal.
pub fn run(ctx: &Ctx) -> anyhow::Result<()> {
    let registry_path =
        ctx.loaded.existing(&ctx.loaded.cfg.pipeline.registry, "registry")?;
    let registry = Registry::open(&registry_path)?;

    let names: Vec<String> = match &ctx.loaded.cfg.ingest.datasets {
        Some(list) => {
            for name in list {
                if registry.get(name).is_none() {
                    return Err(ConfigError(format!(
                        "ingest.datasets names unknown dataset {name:?}"
                    ))
                    .into());
                }
            }
            list.clone()
        }
        None => registry.names().map(str::to_string).collect(),
    };

    std::fs::create_dir_all(&ctx.out_dir)
        .with_context(|| format!("creating {}", ctx.out_dir.display()))?;
    let mut manifest = ctx.manifest("ingest");

    for name in &names {
        let reg = registry.get(name).expect("name checked against registry");
        let outcome = ingest_dataset(reg, registry.root())
            .with_context(|| format!("ingesting dataset {name}"))?;
        log::info!(
            "{name}: {} rows in, {} records, {} rejects",
            outcome.rows_in,
            outcome.records.len(),
            outcome.rejects.len()
        );

        let records_name = format!("{name}.records.jsonl");
        let rejects_name = format!("{name}.rejects.jsonl");
        write_jsonl(&ctx.out_dir.join(&records_name), &outcome.records)?;
        write_jsonl(&ctx.out_dir.join(&rejects_name), &outcome.rejects)?;
        manifest.record_output(&ctx.out_dir, &records_name)?;
        manifest.record_output(&ctx.out_dir, &rejects_name)?;
        manifest.count(&format!("{name}.records"), outcome.records.len() as u64);
        manifest.count(&format!("{name}.rejects"), outcome.rejects.len() as u64);
    }

    manifest.write(&ctx.out_dir)?;
    Ok(())
}
