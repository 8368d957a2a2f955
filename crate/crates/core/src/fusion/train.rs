use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{loss_and_grad, Batch, LossBreakdown};
use super::{init_params, FusionError, FusionParams, TrainConfig};
use crate::embedding::WindowEmbeddings;
use crate::rng::stream_rng;

const SHUFFLE_STREAM: u64 = 0x5348;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

/// Adam moment estimates.
struct Adam {
    m: FusionParams,
    v: FusionParams,
    step: i32,
}

impl Adam {
    fn new(p: &FusionParams) -> Self {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut FusionParams, grad: &FusionParams, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let ps = params.tensors_mut();
        let gs = grad.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPSILON);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub mean: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: FusionParams,
    pub trace: Vec<EpochLoss>,
}

/// Trains the projections and fusion network on backbone embeddings.
///
/// Each epoch reshuffles the windows with the seeded generator and walks them
/// in batches of `batch_size` (the last batch may be short), applying one Adam
/// step per batch.
pub fn train(
    data: &[WindowEmbeddings],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLoss),
) -> Result<TrainOutcome, FusionError> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(FusionError::InsufficientData(data.len()));
    }
    let backbone_dim = data[0].modalities[0].len();
    for e in data {
        for v in &e.modalities {
            if v.len() != backbone_dim {
                return Err(FusionError::DimensionMismatch {
                    expected: backbone_dim,
                    got: v.len(),
                });
            }
        }
    }
    let labeled = data.iter().any(|e| e.label.is_some());
    let mut params = init_params(cfg, backbone_dim);
    let mut adam = Adam::new(&params);
    let mut rng = stream_rng(cfg.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::new(data, chunk.to_vec(), labeled);
            let (loss, grad) = loss_and_grad(&batch, &params, cfg)?;
            if !loss.total.is_finite() || !grad.is_finite() {
                return Err(FusionError::NonFiniteLoss { epoch, batch: bi });
            }
            adam.update(&mut params, &grad, cfg.learning_rate);
            sum.modal += loss.modal;
            sum.temporal += loss.temporal;
            sum.anomaly += loss.anomaly;
            sum.total += loss.total;
            batches += 1;
        }
        let n = batches as f64;
        let entry = EpochLoss {
            epoch,
            mean: LossBreakdown {
                modal: sum.modal / n,
                temporal: sum.temporal / n,
                anomaly: sum.anomaly / n,
                total: sum.total / n,
            },
        };
        on_epoch(&entry);
        trace.push(entry);
    }
    Ok(TrainOutcome { params, trace })
}
