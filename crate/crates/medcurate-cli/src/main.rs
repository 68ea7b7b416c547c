mod commands;
mod config;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use medcurate_core::gateway::GatewayError;
use medcurate_core::rewards::RewardError;
use medcurate_core::synthesis::SynthesisError;

use crate::commands::Ctx;
use crate::config::{ConfigError, LoadedConfig};

#[derive(Parser)]
#[command(
    name = "medcurate",
    version,
    about = "Curate medical VQA instruction data and score model outputs"
)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Overrides the seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; defaults to <output_root>/<subcommand>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse registered dataset manifests into normalized records.
    Ingest,
    /// Convert ingested records into a VQA instruction corpus.
    Synthesize,
    /// Draw, reformulate, and rebalance a corpus for RL training.
    PrepareGrpo,
    /// Check token and position budgets over a corpus.
    Budget {
        /// Corpus to check; overrides [budget].corpus.
        #[arg(long, value_name = "FILE")]
        corpus: Option<PathBuf>,
    },
    /// Score generation groups with rewards and advantages.
    ScoreGroups {
        /// Groups JSONL; overrides [score].groups.
        #[arg(long, value_name = "FILE")]
        groups: Option<PathBuf>,
    },
    /// Score a predictions file against a reference corpus.
    Evaluate {
        /// Reference corpus; overrides [evaluate].refs.
        #[arg(long, value_name = "FILE")]
        refs: Option<PathBuf>,
        /// Predictions JSONL; overrides [evaluate].preds.
        #[arg(long, value_name = "FILE")]
        preds: Option<PathBuf>,
    },
}

impl Command {
    fn output_subdir(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synthesize => "synthesize",
            Command::PrepareGrpo => "grpo",
            Command::Budget { .. } => "budget",
            Command::ScoreGroups { .. } => "score",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            log::error!("{err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config_path = cli
        .config
        .ok_or_else(|| ConfigError("--config is required".into()))?;
    let loaded = LoadedConfig::read(&config_path)?;
    let seed = cli.seed.unwrap_or(loaded.cfg.pipeline.seed);
    let out_dir = cli.out.unwrap_or_else(|| {
        loaded
            .resolve(&loaded.cfg.pipeline.output_root)
            .join(cli.command.output_subdir())
    });
    let ctx = Ctx { loaded, seed, out_dir };

    match &cli.command {
        Command::Ingest => commands::ingest::run(&ctx),
        Command::Synthesize => commands::synthesize::run(&ctx),
        Command::PrepareGrpo => commands::grpo::run(&ctx),
        Command::Budget { corpus } => commands::budget::run(&ctx, corpus.as_deref()),
        Command::ScoreGroups { groups } => commands::score::run(&ctx, groups.as_deref()),
        Command::Evaluate { refs, preds } => {
            commands::evaluate::run(&ctx, refs.as_deref(), preds.as_deref())
        }
    }
}

/// 1 for data errors, 2 for configuration errors, 3 for gateway errors.
/// Transparent wrapper variants hide the gateway error from the source
/// chain, so those are matched explicitly.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    let gateway = err.chain().any(|c| {
        c.downcast_ref::<GatewayError>().is_some()
            || matches!(c.downcast_ref::<SynthesisError>(), Some(SynthesisError::Gateway(_)))
            || matches!(c.downcast_ref::<RewardError>(), Some(RewardError::Gateway(_)))
    });
    if gateway {
        return 3;
    }
    if err.chain().any(|c| c.downcast_ref::<ConfigError>().is_some()) {
        return 2;
    }
    1
}
