use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FusionError, TrainConfig};
use crate::linalg::Matrix;
use crate::rng::stream_rng;

const INIT_STREAM: u64 = 0x1417;

/// Trainable parameters of the projection heads and the gated fusion MLP.
///
/// The same shape doubles as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Backbone dimension `D_b`.
    pub backbone_dim: usize,
    /// State dimension `d`.
    pub state_dim: usize,
    /// Hidden width `h`.
    pub hidden_dim: usize,
    /// Per-modality projections `d × D_b`, in M, T, L order.
    pub proj: [Matrix; 3],
    /// Gate weights `3 × 3d`.
    pub gate_w: Matrix,
    pub gate_b: Vec<f64>,
    /// `h × 3d`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `d × h`.
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl FusionParams {
    pub fn zeros(backbone_dim: usize, state_dim: usize, hidden_dim: usize) -> Self {
        let d3 = 3 * state_dim;
        FusionParams {
            backbone_dim,
            state_dim,
            hidden_dim,
            proj: std::array::from_fn(|_| Matrix::zeros(state_dim, backbone_dim)),
            gate_w: Matrix::zeros(3, d3),
            gate_b: vec![0.0; 3],
            w1: Matrix::zeros(hidden_dim, d3),
            b1: vec![0.0; hidden_dim],
            w2: Matrix::zeros(state_dim, hidden_dim),
            b2: vec![0.0; state_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.backbone_dim, self.state_dim, self.hidden_dim)
    }

    /// Every parameter block, in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 9] {
        let [pm, pt, pl] = &self.proj;
        [
            &pm.data,
            &pt.data,
            &pl.data,
            &self.gate_w.data,
            &self.gate_b,
            &self.w1.data,
            &self.b1,
            &self.w2.data,
            &self.b2,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        let [pm, pt, pl] = &mut self.proj;
        [
            &mut pm.data,
            &mut pt.data,
            &mut pl.data,
            &mut self.gate_w.data,
            &mut self.gate_b,
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_consistent(&self) -> Result<(), FusionError> {
        let (db, d, h) = (self.backbone_dim, self.state_dim, self.hidden_dim);
        let shapes_ok = self.proj.iter().all(|p| p.rows == d && p.cols == db)
            && (self.gate_w.rows, self.gate_w.cols) == (3, 3 * d)
            && self.gate_b.len() == 3
            && (self.w1.rows, self.w1.cols) == (h, 3 * d)
            && self.b1.len() == h
            && (self.w2.rows, self.w2.cols) == (d, h)
            && self.b2.len() == d;
        let data_ok = self.proj.iter().all(|p| p.data.len() == d * db)
            && self.gate_w.data.len() == 9 * d
            && self.w1.data.len() == h * 3 * d
            && self.w2.data.len() == d * h;
        if !(shapes_ok && data_ok) {
            return Err(FusionError::InvalidParams("inconsistent dimensions".into()));
        }
        if !self.is_finite() {
            return Err(FusionError::InvalidParams("non-finite entry".into()));
        }
        Ok(())
    }
}

fn xavier(m: &mut Matrix, rng: &mut impl Rng) {
    let a = (6.0 / (m.rows + m.cols) as f64).sqrt();
    for w in &mut m.data {
        *w = rng.gen_range(-a..=a);
    }
}

/// Xavier-uniform weights, zero biases, drawn from the config seed.
pub fn init_params(cfg: &TrainConfig, backbone_dim: usize) -> FusionParams {
    let mut p = FusionParams::zeros(backbone_dim, cfg.state_dim, cfg.hidden_dim);
    let mut rng = stream_rng(cfg.seed, INIT_STREAM);
    for m in p.proj.iter_mut() {
        xavier(m, &mut rng);
    }
    xavier(&mut p.gate_w, &mut rng);
    xavier(&mut p.w1, &mut rng);
    xavier(&mut p.w2, &mut rng);
    p
}
