use thiserror::Error;

use crate::artifact::ArtifactError;
use crate::config::ConfigError;
use crate::embedding::EmbedError;
use crate::eval::EvalError;
use crate::fusion::FusionError;
use crate::states::StateError;
use crate::synthgen::SynthError;
use crate::tasks::TaskError;
use crate::telemetry::TelemetryError;

/// Any failure surfaced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable category, used as the first field of CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Telemetry(_) => "telemetry",
            Error::Synth(_) => "synth",
            Error::Embed(_) => "embedding",
            Error::Fusion(_) => "fusion",
            Error::State(_) => "states",
            Error::Task(_) => "tasks",
            Error::Eval(_) => "eval",
            Error::Artifact(_) => "artifact",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
