//! The three contrastive objectives and their exact gradient.
//!
//! - modal: InfoNCE between the projected modality vectors of the same
//!   window, averaged over all six ordered modality pairs
//! - temporal: overlap-weighted hinge `max(δ − sim, 0)` over ordered pairs
//!   of distinct windows, normalised by the total overlap weight
//! - anomaly: mean hinge `max(sim − γ, 0)` over (normal, abnormal) pairs
//!
//! Hinges use strict inequalities, so the subgradient at a kink is zero.

use serde::{Deserialize, Serialize};

use super::forward::{forward, triple, WindowForward};
use super::{FusionError, FusionParams, TrainConfig};
use crate::embedding::WindowEmbeddings;
use crate::linalg::dot;
use crate::telemetry::overlap_ratio;

/// Ordered (anchor, candidate) modality pairs of the modal loss.
pub const MODAL_PAIRS: [(usize, usize); 6] = [(1, 0), (0, 1), (1, 2), (2, 1), (0, 2), (2, 0)];

/// A batch of windows drawn from one corpus.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub indices: Vec<usize>,
    pub items: Vec<&'a WindowEmbeddings>,
    /// Whether the corpus carries labels at all; without them the anomaly
    /// term is switched off.
    pub corpus_labeled: bool,
}

impl<'a> Batch<'a> {
    pub fn new(all: &'a [WindowEmbeddings], indices: Vec<usize>, corpus_labeled: bool) -> Self {
        let items = indices.iter().map(|&i| &all[i]).collect();
        Batch {
            indices,
            items,
            corpus_labeled,
        }
    }

    /// Whole slice as one batch.
    pub fn of(all: &'a [WindowEmbeddings]) -> Self {
        let labeled = all.iter().any(|e| e.label.is_some());
        Self::new(all, (0..all.len()).collect(), labeled)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub modal: f64,
    pub temporal: f64,
    pub anomaly: f64,
    pub total: f64,
}

pub(crate) fn forward_batch(params: &FusionParams, batch: &Batch<'_>) -> Result<Vec<WindowForward>, FusionError> {
    batch.items.iter().map(|e| forward(params, triple(e))).collect()
}

/// Gradient accumulators with respect to the unit vectors z^m and s.
struct UnitGrads {
    z: Vec<[Vec<f64>; 3]>,
    s: Vec<Vec<f64>>,
}

impl UnitGrads {
    fn zeros(b: usize, d: usize) -> Self {
        UnitGrads {
            z: (0..b).map(|_| std::array::from_fn(|_| vec![0.0; d])).collect(),
            s: vec![vec![0.0; d]; b],
        }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn modal_term(fw: &[WindowForward], tau: f64, scale: f64, grads: Option<&mut UnitGrads>) -> f64 {
    let b = fw.len();
    let mut total = 0.0;
    let mut grads = grads;
    for &(a, c) in &MODAL_PAIRS {
        let mut pair_loss = 0.0;
        for i in 0..b {
            let logits: Vec<f64> = (0..b).map(|j| dot(&fw[i].z[a], &fw[j].z[c]) / tau).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            let lse = max + sum.ln();
            pair_loss += lse - logits[i];
            if let Some(g) = grads.as_deref_mut() {
                let w = scale / (6.0 * b as f64 * tau);
                for j in 0..b {
                    let p = (logits[j] - lse).exp();
                    let coef = w * (p - if i == j { 1.0 } else { 0.0 });
                    if coef == 0.0 {
                        continue;
                    }
                    axpy(&mut g.z[i][a], coef, &fw[j].z[c]);
                    axpy(&mut g.z[j][c], coef, &fw[i].z[a]);
                }
            }
        }
        total += pair_loss / b as f64;
    }
    total / 6.0
}

fn temporal_term(
    fw: &[WindowForward],
    batch: &Batch<'_>,
    margin: f64,
    scale: f64,
    grads: Option<&mut UnitGrads>,
) -> f64 {
    let b = fw.len();
    let mut z = 0.0;
    let mut weights = vec![0.0; b * b];
    for i in 0..b {
        for j in 0..b {
            if i != j {
                let w = overlap_ratio(&batch.items[i].window, &batch.items[j].window);
                weights[i * b + j] = w;
                z += w;
            }
        }
    }
    if z == 0.0 {
        return 0.0;
    }
    let mut loss = 0.0;
    let mut grads = grads;
    for i in 0..b {
        for j in 0..b {
            let w = weights[i * b + j];
            if i == j || w == 0.0 {
                continue;
            }
            let slack = margin - dot(&fw[i].state, &fw[j].state);
            if slack > 0.0 {
                loss += w * slack;
                if let Some(g) = grads.as_deref_mut() {
                    let coef = -scale * w / z;
                    axpy(&mut g.s[i], coef, &fw[j].state);
                    axpy(&mut g.s[j], coef, &fw[i].state);
                }
            }
        }
    }
    loss / z
}

fn anomaly_term(
    fw: &[WindowForward],
    batch: &Batch<'_>,
    gamma: f64,
    scale: f64,
    grads: Option<&mut UnitGrads>,
) -> f64 {
    let status: Vec<Option<bool>> = batch
        .items
        .iter()
        .map(|e| e.label.as_ref().map(|l| l.anomalous))
        .collect();
    let normal: Vec<usize> = (0..fw.len()).filter(|&i| status[i] == Some(false)).collect();
    let abnormal: Vec<usize> = (0..fw.len()).filter(|&i| status[i] == Some(true)).collect();
    if normal.is_empty() || abnormal.is_empty() {
        return 0.0;
    }
    let pairs = (normal.len() * abnormal.len()) as f64;
    let mut loss = 0.0;
    let mut grads = grads;
    for &n in &normal {
        for &a in &abnormal {
            let excess = dot(&fw[n].state, &fw[a].state) - gamma;
            if excess > 0.0 {
                loss += excess;
                if let Some(g) = grads.as_deref_mut() {
                    let coef = scale / pairs;
                    axpy(&mut g.s[n], coef, &fw[a].state);
                    axpy(&mut g.s[a], coef, &fw[n].state);
                }
            }
        }
    }
    loss / pairs
}

pub fn modal_loss(batch: &Batch<'_>, params: &FusionParams, tau: f64) -> Result<f64, FusionError> {
    let fw = forward_batch(params, batch)?;
    Ok(modal_term(&fw, tau, 1.0, None))
}

pub fn temporal_loss(batch: &Batch<'_>, params: &FusionParams, margin: f64) -> Result<f64, FusionError> {
    let fw = forward_batch(params, batch)?;
    Ok(temporal_term(&fw, batch, margin, 1.0, None))
}

pub fn anomaly_loss(batch: &Batch<'_>, params: &FusionParams, gamma: f64) -> Result<f64, FusionError> {
    let fw = forward_batch(params, batch)?;
    Ok(anomaly_term(&fw, batch, gamma, 1.0, None))
}

/// Weighted sum of the three terms. The anomaly weight is forced to zero for
/// unlabeled corpora.
pub fn combine(terms: (f64, f64, f64), batch: &Batch<'_>, cfg: &TrainConfig) -> LossBreakdown {
    let (modal, temporal, anomaly) = terms;
    let lambda_anom = if batch.corpus_labeled { cfg.lambda_anom } else { 0.0 };
    let anomaly = if batch.corpus_labeled { anomaly } else { 0.0 };
    LossBreakdown {
        modal,
        temporal,
        anomaly,
        total: cfg.lambda_modal * modal + cfg.lambda_temp * temporal + lambda_anom * anomaly,
    }
}

pub fn total_loss(batch: &Batch<'_>, params: &FusionParams, cfg: &TrainConfig) -> Result<LossBreakdown, FusionError> {
    let fw = forward_batch(params, batch)?;
    let terms = (
        modal_term(&fw, cfg.temperature, 1.0, None),
        temporal_term(&fw, batch, cfg.margin, 1.0, None),
        anomaly_term(&fw, batch, cfg.max_similarity, 1.0, None),
    );
    Ok(combine(terms, batch, cfg))
}

/// Loss and exact gradient of [`total_loss`] with respect to every parameter.
pub fn loss_and_grad(
    batch: &Batch<'_>,
    params: &FusionParams,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, FusionParams), FusionError> {
    let fw = forward_batch(params, batch)?;
    let b = fw.len();
    let d = params.state_dim;
    let mut ug = UnitGrads::zeros(b, d);
    let lambda_anom = if batch.corpus_labeled { cfg.lambda_anom } else { 0.0 };
    let modal = modal_term(&fw, cfg.temperature, cfg.lambda_modal, (cfg.lambda_modal != 0.0).then_some(&mut ug));
    let temporal = temporal_term(&fw, batch, cfg.margin, cfg.lambda_temp, (cfg.lambda_temp != 0.0).then_some(&mut ug));
    let anomaly = anomaly_term(&fw, batch, cfg.max_similarity, lambda_anom, (lambda_anom != 0.0).then_some(&mut ug));
    let breakdown = combine((modal, temporal, anomaly), batch, cfg);

    let mut g = params.zeros_like();
    for (i, f) in fw.iter().enumerate() {
        backprop_window(params, f, &batch.items[i].modalities, &ug.z[i], &ug.s[i], &mut g);
    }
    Ok((breakdown, g))
}

/// Gradient only; see [`loss_and_grad`].
pub fn grad(batch: &Batch<'_>, params: &FusionParams, cfg: &TrainConfig) -> Result<FusionParams, FusionError> {
    loss_and_grad(batch, params, cfg).map(|(_, g)| g)
}

/// Gradient of `v ↦ v/‖v‖` applied to upstream `g`, given the unit output.
fn through_normalize(unit: &[f64], norm: f64, g: &[f64]) -> Vec<f64> {
    let proj = dot(unit, g);
    unit.iter().zip(g).map(|(u, gi)| (gi - u * proj) / norm).collect()
}

fn backprop_window(
    params: &FusionParams,
    f: &WindowForward,
    backbone: &[Vec<f64>; 3],
    dz_direct: &[Vec<f64>; 3],
    ds: &[f64],
    g: &mut FusionParams,
) {
    let d = params.state_dim;
    let mut dz: [Vec<f64>; 3] = dz_direct.clone();

    if ds.iter().any(|v| *v != 0.0) {
        let dy = through_normalize(&f.state, f.out_norm, ds);
        g.w2.add_outer(&dy, &f.hidden);
        axpy(&mut g.b2, 1.0, &dy);
        let dhidden = params.w2.t_matvec(&dy);
        let dpre: Vec<f64> = dhidden
            .iter()
            .zip(&f.hidden)
            .map(|(dh, h)| dh * (1.0 - h * h))
            .collect();
        let gated = f.gated();
        g.w1.add_outer(&dpre, &gated);
        axpy(&mut g.b1, 1.0, &dpre);
        let dgated = params.w1.t_matvec(&dpre);

        let mut dlogit = [0.0; 3];
        for m in 0..3 {
            let block = &dgated[m * d..(m + 1) * d];
            let dgate = dot(block, &f.z[m]);
            dlogit[m] = dgate * f.gates[m] * (1.0 - f.gates[m]);
            axpy(&mut dz[m], f.gates[m], block);
        }
        g.gate_w.add_outer(&dlogit, &f.concat());
        axpy(&mut g.gate_b, 1.0, &dlogit);
        let dc = params.gate_w.t_matvec(&dlogit);
        for m in 0..3 {
            axpy(&mut dz[m], 1.0, &dc[m * d..(m + 1) * d]);
        }
    }

    for m in 0..3 {
        if dz[m].iter().all(|v| *v == 0.0) {
            continue;
        }
        let du = through_normalize(&f.z[m], f.proj_norm[m], &dz[m]);
        g.proj[m].add_outer_sparse(&du, &backbone[m], &f.nonzero[m]);
    }
}
