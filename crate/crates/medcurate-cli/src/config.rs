//! Pipeline configuration. One TOML file drives every subcommand so a run
//! is reproducible from a single artifact; relative paths resolve against
//! the directory the file lives in.

use std::fmt;
use std::path::{Path, PathBuf};

use medcurate_core::gateway::{GatewayConfig, GatewayMode, RetryPolicy};
use medcurate_core::geometry::{PositionConfig, TileConfig};
use serde::Deserialize;

/// Error in the configuration itself or in a path it references. Mapped to
/// exit code 2, unlike data errors (1) and gateway errors (3).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub synthesize: SynthesizeSection,
    #[serde(default)]
    pub grpo: GrpoSection,
    #[serde(default)]
    pub budget: BudgetSection,
    #[serde(default)]
    pub score: ScoreSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    pub gateway: Option<GatewaySection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// Dataset registry file.
    pub registry: PathBuf,
    /// Directory that media URIs in records and corpora resolve against.
    #[serde(default = "default_media_root")]
    pub media_root: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Parent directory for per-subcommand output directories.
    pub output_root: PathBuf,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    /// Datasets to ingest; all registered datasets when omitted.
    pub datasets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeSection {
    /// Annotation styles to convert. Any subset of
    /// caption, mask, label, volume, video.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    /// Wrong options per generated multiple-choice question.
    #[serde(default = "default_distractors")]
    pub distractors: usize,
    /// Slices to keep per volume record; all stored slices when omitted.
    pub slice_count: Option<u32>,
    /// Question phrasing pool JSON; built-in pool when omitted.
    pub pool: Option<PathBuf>,
    /// Localization grid JSON; 3x3 grid when omitted.
    pub grid: Option<PathBuf>,
    /// Also ask the gateway for freeform QA pairs on caption and label
    /// records.
    #[serde(default)]
    pub llm_assisted: bool,
    /// Ask the gateway for gateway-check MCQs on video records.
    #[serde(default)]
    pub video_mcq: bool,
    /// Append a translated copy of every sample.
    #[serde(default)]
    pub bilingual: bool,
    pub translation_template: Option<String>,
    /// Directory of ingest record files; `<output_root>/ingest` when
    /// omitted.
    pub input: Option<PathBuf>,
}

impl Default for SynthesizeSection {
    fn default() -> Self {
        SynthesizeSection {
            strategies: default_strategies(),
            distractors: default_distractors(),
            slice_count: None,
            pool: None,
            grid: None,
            llm_assisted: false,
            video_mcq: false,
            bilingual: false,
            translation_template: None,
            input: None,
        }
    }
}

pub const STRATEGY_NAMES: [&str; 5] = ["caption", "mask", "label", "volume", "video"];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrpoSection {
    /// Samples drawn from the corpus before reformulation; whole corpus
    /// when omitted.
    pub draw: Option<usize>,
    #[serde(default = "default_target_yes_no")]
    pub target_yes_no: f64,
    /// Instruction corpus; `<output_root>/synthesize/corpus.jsonl` when
    /// omitted.
    pub input: Option<PathBuf>,
}

impl Default for GrpoSection {
    fn default() -> Self {
        GrpoSection { draw: None, target_yes_no: default_target_yes_no(), input: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    /// Position increment per visual token.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_max_extent")]
    pub max_extent: f64,
    #[serde(default = "default_tile_size")]
    pub tile_size: u32,
    #[serde(default = "default_patch_size")]
    pub patch_size: u32,
    #[serde(default = "default_unshuffle")]
    pub unshuffle: u32,
    #[serde(default = "default_max_tiles")]
    pub max_tiles: u32,
    /// Corpus to check; `<output_root>/synthesize/corpus.jsonl` when
    /// omitted.
    pub corpus: Option<PathBuf>,
}

impl Default for BudgetSection {
    fn default() -> Self {
        BudgetSection {
            delta: default_delta(),
            max_extent: default_max_extent(),
            tile_size: default_tile_size(),
            patch_size: default_patch_size(),
            unshuffle: default_unshuffle(),
            max_tiles: default_max_tiles(),
            corpus: None,
        }
    }
}

impl BudgetSection {
    pub fn tile_config(&self) -> TileConfig {
        TileConfig {
            tile_size: self.tile_size,
            patch_size: self.patch_size,
            unshuffle: self.unshuffle,
            max_tiles: self.max_tiles,
        }
    }

    pub fn position_config(&self) -> Result<PositionConfig, ConfigError> {
        PositionConfig::new(self.delta)
            .map_err(|e| ConfigError(format!("budget.delta: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    /// Generation groups JSONL; may instead come from `--groups`.
    pub groups: Option<PathBuf>,
    #[serde(default = "default_format_marker")]
    pub format_marker: String,
    #[serde(default = "default_true")]
    pub require_reasoning: bool,
    /// Judge prompt with `{question}`, `{reference}`, `{candidate}` slots;
    /// built-in template when omitted.
    pub judge_template: Option<String>,
}

impl Default for ScoreSection {
    fn default() -> Self {
        ScoreSection {
            groups: None,
            format_marker: default_format_marker(),
            require_reasoning: true,
            judge_template: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default = "default_benchmark")]
    pub benchmark: String,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    pub refs: Option<PathBuf>,
    pub preds: Option<PathBuf>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            benchmark: default_benchmark(),
            metrics: default_metrics(),
            refs: None,
            preds: None,
        }
    }
}

/// Mirrors [`GatewayConfig`] with the endpoint optional so replay-only
/// configs stay short.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewaySection {
    #[serde(default)]
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    pub mode: GatewayMode,
    pub cache_dir: PathBuf,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

impl GatewaySection {
    pub fn to_gateway_config(&self, config_dir: &Path) -> Result<GatewayConfig, ConfigError> {
        if self.mode != GatewayMode::Replay && self.endpoint.is_empty() {
            return Err(ConfigError(format!(
                "gateway.endpoint is required in {:?} mode",
                self.mode
            )));
        }
        Ok(GatewayConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            max_concurrency: self.max_concurrency,
            requests_per_minute: self.requests_per_minute,
            retry: self.retry,
            cache_dir: resolve(config_dir, &self.cache_dir),
            mode: self.mode,
            api_key_env: self.api_key_env.clone(),
        })
    }
}

fn default_media_root() -> PathBuf {
    PathBuf::from("media")
}
fn default_strategies() -> Vec<String> {
    STRATEGY_NAMES.iter().map(|s| s.to_string()).collect()
}
fn default_distractors() -> usize {
    3
}
fn default_target_yes_no() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.25
}
fn default_max_extent() -> f64 {
    4096.0
}
fn default_tile_size() -> u32 {
    448
}
fn default_patch_size() -> u32 {
    14
}
fn default_unshuffle() -> u32 {
    2
}
fn default_max_tiles() -> u32 {
    12
}
fn default_format_marker() -> String {
    "Answer:".into()
}
fn default_true() -> bool {
    true
}
fn default_benchmark() -> String {
    "benchmark".into()
}
fn default_metrics() -> Vec<String> {
    vec!["accuracy".into()]
}
fn default_model() -> String {
    "default".into()
}
fn default_concurrency() -> usize {
    4
}
fn default_rpm() -> u32 {
    600
}
fn default_api_key_env() -> String {
    "MEDCURATE_API_KEY".into()
}

/// A parsed config plus the raw text and base directory, kept so run
/// manifests can embed the exact bytes that produced them.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub cfg: PipelineConfig,
    pub dir: PathBuf,
    pub raw: String,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: PipelineConfig = toml::from_str(&raw)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        for name in &cfg.synthesize.strategies {
            if !STRATEGY_NAMES.contains(&name.as_str()) {
                return Err(ConfigError(format!(
                    "synthesize.strategies: unknown strategy {name:?} (expected one of {})",
                    STRATEGY_NAMES.join(", ")
                )));
            }
        }
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(LoadedConfig { cfg, dir, raw })
    }

    /// Resolves a config-relative path.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        resolve(&self.dir, path)
    }

    /// Resolves and checks existence, the rule being that every path named
    /// by the config must exist before any output is written.
    pub fn existing(&self, path: &Path, what: &str) -> Result<PathBuf, ConfigError> {
        let full = self.resolve(path);
        if !full.exists() {
            return Err(ConfigError(format!("{what} {} does not exist", full.display())));
        }
        Ok(full)
    }
}

pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg: PipelineConfig = toml::from_str(
            r#"
            [pipeline]
            registry = "registry.json"
            output_root = "out"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.pipeline.seed, 0);
        assert_eq!(cfg.pipeline.media_root, PathBuf::from("media"));
        assert_eq!(cfg.synthesize.strategies.len(), 5);
        assert_eq!(cfg.synthesize.distractors, 3);
        assert_eq!(cfg.grpo.target_yes_no, 0.05);
        assert_eq!(cfg.budget.delta, 0.25);
        assert_eq!(cfg.score.format_marker, "Answer:");
        assert!(cfg.gateway.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<PipelineConfig>(
            r#"
            [pipeline]
            registry = "registry.json"
            output_root = "out"
            sedd = 7
            "#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("sedd"));
    }

    #[test]
    fn unknown_strategy_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pipeline.toml");
        std::fs::write(
            &path,
            r#"
            [pipeline]
            registry = "registry.json"
            output_root = "out"

            [synthesize]
            strategies = ["caption", "labels"]
            "#,
        )
        .unwrap();
        let err = LoadedConfig::read(&path).unwrap_err();
        assert!(err.to_string().contains("labels"));
    }

    #[test]
    fn gateway_section_maps_to_config() {
        let section: GatewaySection = toml::from_str(
            r#"
            mode = "replay"
            cache_dir = "fixtures"
            "#,
        )
        .unwrap();
        let cfg = section.to_gateway_config(Path::new("/cfg")).unwrap();
        assert_eq!(cfg.mode, GatewayMode::Replay);
        assert_eq!(cfg.cache_dir, PathBuf::from("/cfg/fixtures"));
        assert_eq!(cfg.model, "default");

        let live: GatewaySection = toml::from_str(
            r#"
            mode = "live"
            cache_dir = "fixtures"
            "#,
        )
        .unwrap();
        assert!(live.to_gateway_config(Path::new("/cfg")).is_err());
    }
}
