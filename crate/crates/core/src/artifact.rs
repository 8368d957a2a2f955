//! Versioned JSON envelopes for every pipeline artifact.
//!
//! Each file is `{"format": "...", "version": N, "payload": ...}`. Floats are
//! written in shortest round-trip form and parsed with exact round-tripping,
//! so `load(save(x)) == x` bit for bit for finite values.

use std::path::Path;

use serde::de::{DeserializeOwned, IgnoredAny};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{BackboneConfig, WindowEmbeddings};
use crate::fusion::{EpochLoss, FusionParams, SystemStateEmbedding, TrainConfig};
use crate::states::StatePartition;
use crate::tasks::{AnomalyModel, ClassifierModel, LocalizerModel, StateConditionedBundle};
use crate::telemetry::Corpus;

pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ArtifactError {
    #[error("expected a {expected} artifact, found {found}")]
    WrongFormat { expected: String, found: String },
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: String, version: u32 },
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("cannot serialise artifact: {0}")]
    Unserialisable(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Ties a payload type to its format tag.
pub trait Artifact: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'static str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[allow(dead_code)]
    payload: IgnoredAny,
}

#[derive(Deserialize)]
struct EnvelopeIn<T> {
    payload: T,
}

pub fn to_bytes<T: Artifact>(value: &T) -> Result<Vec<u8>, ArtifactError> {
    let mut out = serde_json::to_vec(&EnvelopeOut {
        format: T::FORMAT,
        version: VERSION,
        payload: value,
    })
    .map_err(|e| ArtifactError::Unserialisable(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn from_bytes<T: Artifact>(bytes: &[u8]) -> Result<T, ArtifactError> {
    let header: Header = serde_json::from_slice(bytes).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    if header.format != T::FORMAT {
        return Err(ArtifactError::WrongFormat {
            expected: T::FORMAT.to_string(),
            found: header.format,
        });
    }
    if header.version != VERSION {
        return Err(ArtifactError::UnsupportedVersion {
            format: header.format,
            version: header.version,
        });
    }
    let env: EnvelopeIn<T> = serde_json::from_slice(bytes).map_err(|e| ArtifactError::Malformed(e.to_string()))?;
    Ok(env.payload)
}

pub fn save<T: Artifact>(path: impl AsRef<Path>, value: &T) -> Result<(), ArtifactError> {
    let path = path.as_ref();
    let bytes = to_bytes(value)?;
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn load<T: Artifact>(path: impl AsRef<Path>) -> Result<T, ArtifactError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    from_bytes(&bytes)
}

fn io_err(path: &Path, e: std::io::Error) -> ArtifactError {
    ArtifactError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    }
}

impl Artifact for Corpus {
    const FORMAT: &'static str = "rslicer.corpus";
}

impl Artifact for StatePartition {
    const FORMAT: &'static str = "rslicer.partition";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub backbone: BackboneConfig,
    pub dim: usize,
    /// Whether the source corpus carried any labels.
    pub labeled: bool,
    pub windows: Vec<WindowEmbeddings>,
}

impl Artifact for EmbeddingSet {
    const FORMAT: &'static str = "rslicer.embeddings";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub backbone_dim: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
    pub train: TrainConfig,
    pub params: FusionParams,
    pub trace: Vec<EpochLoss>,
}

impl Artifact for FusionModel {
    const FORMAT: &'static str = "rslicer.fusion";
}

/// Fused states plus what produced them, so later stages can re-embed
/// component-filtered windows the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSet {
    pub backbone: BackboneConfig,
    pub model: FusionModel,
    pub states: Vec<SystemStateEmbedding>,
}

impl Artifact for StateSet {
    const FORMAT: &'static str = "rslicer.states";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskModels {
    Ad(StateConditionedBundle<AnomalyModel>),
    Loc(StateConditionedBundle<LocalizerModel>),
    Cls(StateConditionedBundle<ClassifierModel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskBundle {
    pub partition: StatePartition,
    /// Windows `[0, train_windows)` in time order were used for tuning.
    pub train_windows: usize,
    pub models: TaskModels,
}

impl Artifact for TaskBundle {
    const FORMAT: &'static str = "rslicer.bundle";
}
