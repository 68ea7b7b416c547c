//! Curation and evaluation toolkit for heterogeneous medical VQA data.
//!
//! The crate turns raw medical annotations (image captions, segmentation
//! boxes, classification labels, 3D volumes, video captions) into a unified
//! instruction corpus, prepares that corpus for group-relative RL training,
//! plans visual token and position budgets for long multimodal samples, and
//! scores benchmark predictions.
//!
//! Modules map one-to-one onto pipeline stages:
//!
//! - [`sample`]: the unified VQA record schema, validation, and the JSONL
//!   corpus format shared by every other module.
//! - [`ingest`]: dataset registry and per-annotation-style adapters,
//!   including 3D volume slice serialization.
//! - [`synthesis`]: the four curation strategies (VQA conversion, template
//!   generation, LLM-assisted synthesis, video tasks) plus RL data prep.
//! - [`geometry`]: tile/token accounting under pixel unshuffle and
//!   fractional-increment position planning.
//! - [`rewards`]: format/accuracy rewards and group-relative advantages.
//! - [`eval`]: accuracy, ROUGE-L, and CIDEr benchmark scoring.
//! - [`gateway`]: rate-limited LLM API client with record/replay fixtures.
//! - [`manifest`]: emit-only training hyperparameter manifest.

pub mod eval;
pub mod gateway;
pub mod geometry;
pub mod ingest;
pub mod manifest;
pub mod rewards;
pub mod sample;
pub mod synthesis;

pub use eval::{EvalReport, MetricKind, PredictionRecord};
pub use gateway::{GatewayConfig, GatewayMode, LlmGateway};
pub use geometry::{BudgetReport, PositionConfig, PositionPlan, TilePlan};
pub use ingest::{DatasetRegistration, IngestRecord, Registry, SliceSampleSpec};
pub use manifest::TrainingManifest;
pub use rewards::{GenerationGroup, GrpoConfig, RewardBreakdown};
pub use sample::{
    ConversationTurn, MediaRef, ModalityTag, SourceRecordRef, TaskKind, VqaSample,
};
pub use synthesis::{RegionGrid, SynonymPool, SynthesisPrompt};
