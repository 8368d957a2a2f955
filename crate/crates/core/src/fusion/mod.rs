//! Trainable projection heads and gated fusion network producing the
//! system-state embedding, with the contrastive training objectives.

mod forward;
mod loss;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forward::{cosine_sim, fuse, fuse_all, fuse_window, gates, project_modality, SystemStateEmbedding};
pub use loss::{
    anomaly_loss, combine, grad, loss_and_grad, modal_loss, temporal_loss, total_loss, Batch,
    LossBreakdown, MODAL_PAIRS,
};
pub use params::{init_params, FusionParams};
pub use train::{train, EpochLoss, TrainOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("projection of a backbone embedding is the zero vector")]
    DegenerateProjection,
    #[error("fusion output is the zero vector")]
    DegenerateFusion,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training needs at least 2 windows, got {0}")]
    InsufficientData(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid fusion parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// InfoNCE temperature τ.
    pub temperature: f64,
    /// Temporal hinge margin δ.
    pub margin: f64,
    /// Largest tolerated normal/abnormal similarity γ.
    pub max_similarity: f64,
    pub lambda_modal: f64,
    pub lambda_temp: f64,
    pub lambda_anom: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub state_dim: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            temperature: 0.07,
            margin: 0.5,
            max_similarity: 0.3,
            lambda_modal: 1.0,
            lambda_temp: 0.5,
            lambda_anom: 0.5,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            state_dim: 128,
            hidden_dim: 256,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |m: &str| Err(FusionError::InvalidConfig(m.to_string()));
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.margin) {
            return bad("margin must lie in [0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.max_similarity) {
            return bad("max_similarity must lie in [-1, 1]");
        }
        for l in [self.lambda_modal, self.lambda_temp, self.lambda_anom] {
            if !(l >= 0.0 && l.is_finite()) {
                return bad("loss weights must be non-negative");
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.state_dim == 0 || self.hidden_dim == 0 {
            return bad("batch_size, state_dim and hidden_dim must be positive");
        }
        Ok(())
    }
}
