use serde::{Deserialize, Serialize};

use super::{quantile, StateConditionedBundle, TaskConfig, TaskError};
use crate::fusion::SystemStateEmbedding;
use crate::states::{assign, partition_checksum, StatePartition};

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Diagonal Gaussian over normal state embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyModel {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub threshold: f64,
    pub samples: usize,
}

impl AnomalyModel {
    fn fit(points: &[&[f64]], q: f64) -> Self {
        let d = points[0].len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; d];
        for p in points {
            for (m, x) in mean.iter_mut().zip(p.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut variance = vec![0.0; d];
        for p in points {
            for ((v, x), m) in variance.iter_mut().zip(p.iter()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        variance.iter_mut().for_each(|v| *v = (*v / n).max(VARIANCE_FLOOR));
        let mut model = AnomalyModel {
            mean,
            variance,
            threshold: 0.0,
            samples: points.len(),
        };
        let scores: Vec<f64> = points.iter().map(|p| model.score(p)).collect();
        model.threshold = quantile(&scores, q);
        model
    }

    /// Squared diagonal Mahalanobis distance to the mean.
    pub fn score(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.mean)
            .zip(&self.variance)
            .map(|((x, m), v)| (x - m) * (x - m) / v)
            .sum()
    }
}

/// Unlabeled windows count as normal.
fn is_normal(s: &SystemStateEmbedding) -> bool {
    s.label.as_ref().map_or(true, |l| !l.anomalous)
}

pub fn tune_anomaly(
    partition: &StatePartition,
    train: &[SystemStateEmbedding],
    cfg: &TaskConfig,
) -> Result<StateConditionedBundle<AnomalyModel>, TaskError> {
    cfg.validate()?;
    let normal: Vec<&SystemStateEmbedding> = train.iter().filter(|s| is_normal(s)).collect();
    if normal.is_empty() {
        return Err(TaskError::NoNormalData);
    }
    let mut by_cluster: Vec<Vec<&[f64]>> = vec![Vec::new(); partition.k];
    for s in &normal {
        by_cluster[assign(partition, &s.vector)?].push(&s.vector);
    }
    let all: Vec<&[f64]> = normal.iter().map(|s| s.vector.as_slice()).collect();
    let global = AnomalyModel::fit(&all, cfg.quantile);
    let per_cluster = by_cluster
        .iter()
        .map(|pts| (!pts.is_empty() && pts.len() >= cfg.min_samples).then(|| AnomalyModel::fit(pts, cfg.quantile)))
        .collect();
    Ok(StateConditionedBundle {
        per_cluster,
        global,
        min_samples: cfg.min_samples,
        partition_checksum: partition_checksum(partition),
    })
}

/// Returns the score under the window's state model and whether it exceeds
/// that model's threshold.
pub fn score_anomaly(
    bundle: &StateConditionedBundle<AnomalyModel>,
    partition: &StatePartition,
    z: &[f64],
) -> Result<(f64, bool), TaskError> {
    let k = assign(partition, z)?;
    let model = bundle.resolve(k);
    if model.mean.len() != z.len() {
        return Err(TaskError::DimensionMismatch {
            expected: model.mean.len(),
            got: z.len(),
        });
    }
    let score = model.score(z);
    Ok((score, score > model.threshold))
}
