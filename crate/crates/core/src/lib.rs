//! Task-agnostic runtime-state embeddings for microservice telemetry.
//!
//! Windows of metrics, traces and logs are rendered as text, embedded by a
//! frozen backbone, fused into one unit vector per window by a small gated
//! network trained with contrastive objectives, clustered into runtime states,
//! and finally used by per-state models for anomaly detection, root-cause
//! localization and failure classification.

pub mod artifact;
pub mod config;
pub mod embedding;
mod error;
pub mod eval;
pub mod fusion;
pub mod linalg;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod states;
pub mod synthgen;
pub mod tasks;
pub mod telemetry;

pub use error::{Error, Result};

pub use artifact::{Artifact, ArtifactError, EmbeddingSet, FusionModel, StateSet, TaskBundle, TaskModels};
pub use config::{ConfigError, RunConfig};
pub use embedding::{Backbone, BackboneConfig, Modality, WindowEmbeddings};
pub use eval::{EvalError, EvalReport};
pub use fusion::{FusionError, FusionParams, SystemStateEmbedding, TrainConfig};
pub use states::{StateError, StatePartition};
pub use synthgen::{FailureType, ScenarioConfig, SyntheticTelemetry};
pub use tasks::{StateConditionedBundle, TaskConfig, TaskError};
pub use telemetry::{Corpus, MultimodalObservation, TelemetryError, TimeWindow, Timestamp, WindowLabel};
