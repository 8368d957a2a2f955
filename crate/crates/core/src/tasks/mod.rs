//! State-conditioned downstream models.
//!
//! Every task keeps one model per runtime state plus a global model. A state
//! with fewer than `min_samples` training windows delegates to the global
//! model, so every cluster id always resolves to something usable.

mod anomaly;
mod classify;
mod localize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use anomaly::{score_anomaly, tune_anomaly, AnomalyModel};
pub use classify::{classify, classify_ranked, relative_encoding, tune_classifier, ClassifierModel};
pub use localize::{component_subembedding, localize, tune_localizer, LocalizerModel};

use crate::embedding::EmbedError;
use crate::fusion::FusionError;
use crate::states::StateError;

#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("no normal training windows")]
    NoNormalData,
    #[error("component {0} does not occur in the window")]
    ComponentAbsent(String),
    #[error("no failure prototypes available")]
    NoPrototypes,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bundle was tuned against partition {expected}, got {got}")]
    PartitionMismatch { expected: String, got: String },
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    /// Clusters with fewer training windows use the global model.
    pub min_samples: usize,
    /// Quantile of training normal scores used as the anomaly threshold.
    pub quantile: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            min_samples: 20,
            quantile: 0.99,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), TaskError> {
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(TaskError::InvalidConfig("quantile must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateConditionedBundle<M> {
    /// `None` marks a cluster that falls back to `global`.
    pub per_cluster: Vec<Option<M>>,
    pub global: M,
    pub min_samples: usize,
    /// Checksum of the partition the bundle was tuned against.
    pub partition_checksum: String,
}

impl<M> StateConditionedBundle<M> {
    pub fn resolve(&self, cluster: usize) -> &M {
        self.per_cluster
            .get(cluster)
            .and_then(Option::as_ref)
            .unwrap_or(&self.global)
    }

    pub fn uses_global(&self, cluster: usize) -> bool {
        !matches!(self.per_cluster.get(cluster), Some(Some(_)))
    }

    pub fn fallback_count(&self) -> usize {
        (0..self.per_cluster.len()).filter(|&k| self.uses_global(k)).count()
    }

    pub fn check_partition(&self, partition: &crate::states::StatePartition) -> Result<(), TaskError> {
        let got = crate::states::partition_checksum(partition);
        if got != self.partition_checksum {
            return Err(TaskError::PartitionMismatch {
                expected: self.partition_checksum.clone(),
                got,
            });
        }
        Ok(())
    }
}

/// Nearest-rank quantile of unsorted values.
pub(crate) fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}
