//! Emit-only record of the training recipe this corpus feeds.
//!
//! Nothing in this crate trains a model or reads these values back; the
//! manifest exists so a prepared RL corpus ships with the hyperparameters
//! it was prepared for, in one auditable file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rewards::GrpoConfig;

/// One gradient-training stage's settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageHyperparameters {
    pub name: String,
    pub bf16: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_scheduler: String,
    pub warmup_ratio: f64,
    pub dynamic_image_size: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub name: String,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub gradient_clip_max_norm: f64,
}

/// Full four-stage recipe plus the RL block. Serialized as-is, never
/// interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    pub stages: Vec<StageHyperparameters>,
    pub optimizer: OptimizerSettings,
    pub effective_batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub epochs_per_stage: u32,
    pub grpo: GrpoConfig,
}

impl TrainingManifest {
    /// The default recipe: three gradient stages at increasing task
    /// specificity, then a cautious RL stage with a much lower learning
    /// rate, no weight decay, longer warmup, and fixed image size.
    pub fn four_stage_default() -> Self {
        let stage = |name: &str, learning_rate: f64| StageHyperparameters {
            name: name.to_string(),
            bf16: true,
            learning_rate,
            weight_decay: 0.05,
            lr_scheduler: "cosine".to_string(),
            warmup_ratio: 0.03,
            dynamic_image_size: true,
        };
        let mut rl = stage("reinforcement-learning", 1e-6);
        rl.weight_decay = 0.0;
        rl.warmup_ratio = 0.1;
        rl.dynamic_image_size = false;

        TrainingManifest {
            stages: vec![
                stage("interleaved-pretraining", 1e-5),
                stage("knowledge-injection", 1e-5),
                stage("instruction-tuning", 2e-5),
                rl,
            ],
            optimizer: OptimizerSettings {
                name: "adamw".to_string(),
                beta1: 0.9,
                beta2: 0.999,
                epsilon: 1e-8,
                gradient_clip_max_norm: 1.0,
            },
            effective_batch_size: 128,
            gradient_accumulation_steps: 2,
            epochs_per_stage: 1,
            grpo: GrpoConfig::default(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        json
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}
