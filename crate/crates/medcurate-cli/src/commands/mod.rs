//! Subcommand implementations. Each one reads what it needs through [`Ctx`],
//! writes its outputs under `ctx.out_dir`, and leaves a run manifest there.

pub mod budget;
pub mod evaluate;
pub mod grpo;
pub mod ingest;
pub mod score;
pub mod synthesize;

use std::path::{Path, PathBuf};

use medcurate_core::gateway::LlmGateway;

use crate::config::{ConfigError, LoadedConfig};
use crate::runlog::RunManifest;

/// Per-invocation state: parsed config, effective seed, and the resolved
/// output directory for the subcommand being run.
pub struct Ctx {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Ctx {
    pub fn manifest(&self, command: &str) -> RunManifest {
        RunManifest::new(command, self.seed, &self.loaded.raw)
    }

    /// Resolves an input path that may come from a CLI flag (taken as
    /// given), a config entry (config-relative), or a default under the
    /// output root. The file must exist.
    pub fn input_path(
        &self,
        flag: Option<&Path>,
        section: Option<&Path>,
        default_rel: Option<&str>,
        what: &str,
    ) -> Result<PathBuf, ConfigError> {
        let path = if let Some(p) = flag {
            p.to_path_buf()
        } else if let Some(p) = section {
            self.loaded.resolve(p)
        } else if let Some(rel) = default_rel {
            self.loaded.resolve(&self.loaded.cfg.pipeline.output_root).join(rel)
        } else {
            return Err(ConfigError(format!("{what} must be set")));
        };
        if !path.exists() {
            return Err(ConfigError(format!("{what} {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn media_root(&self) -> PathBuf {
        self.loaded.resolve(&self.loaded.cfg.pipeline.media_root)
    }

    /// Builds the gateway, failing with a config error when the section is
    /// missing.
    pub fn gateway(&self, needed_for: &str) -> Result<LlmGateway, ConfigError> {
        let Some(section) = &self.loaded.cfg.gateway else {
            return Err(ConfigError(format!("{needed_for} needs a [gateway] section")));
        };
        Ok(LlmGateway::new(section.to_gateway_config(&self.loaded.dir)?))
    }
}
