use serde::{Deserialize, Serialize};

use super::{FusionError, FusionParams};
use crate::embedding::{BackboneEmbedding, Modality, WindowEmbeddings};
use crate::linalg::{dot, nonzero_indices, norm};
use crate::telemetry::WindowLabel;

/// Fused, unit-norm state vector of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemStateEmbedding {
    pub vector: Vec<f64>,
    pub window_id: u64,
    pub label: Option<WindowLabel>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one window's forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub(crate) struct WindowForward {
    /// Nonzero backbone entries per modality.
    pub nonzero: [Vec<usize>; 3],
    /// ‖P_m e_m‖.
    pub proj_norm: [f64; 3],
    /// Unit projected vectors z^m.
    pub z: [Vec<f64>; 3],
    pub gates: [f64; 3],
    /// tanh(W1 c' + b1).
    pub hidden: Vec<f64>,
    /// Pre-normalisation output norm.
    pub out_norm: f64,
    /// Unit state vector s.
    pub state: Vec<f64>,
}

impl WindowForward {
    /// Gated concatenation c'.
    pub fn gated(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(3 * self.z[0].len());
        for (g, z) in self.gates.iter().zip(&self.z) {
            c.extend(z.iter().map(|v| g * v));
        }
        c
    }

    pub fn concat(&self) -> Vec<f64> {
        self.z.concat()
    }
}

fn check_dim(params: &FusionParams, e: &[f64]) -> Result<(), FusionError> {
    if e.len() != params.backbone_dim {
        return Err(FusionError::DimensionMismatch {
            expected: params.backbone_dim,
            got: e.len(),
        });
    }
    Ok(())
}

fn project(params: &FusionParams, m: Modality, e: &[f64]) -> Result<(Vec<f64>, f64, Vec<usize>), FusionError> {
    check_dim(params, e)?;
    let nz = nonzero_indices(e);
    let mut u = params.proj[m.index()].matvec_sparse(e, &nz);
    let n = norm(&u);
    if !(n > 0.0 && n.is_finite()) {
        return Err(FusionError::DegenerateProjection);
    }
    u.iter_mut().for_each(|v| *v /= n);
    Ok((u, n, nz))
}

/// L2-normalised `P_m · e` for the embedding's modality.
pub fn project_modality(params: &FusionParams, e: &BackboneEmbedding) -> Result<Vec<f64>, FusionError> {
    project(params, e.modality, &e.vector).map(|(u, _, _)| u)
}

pub(crate) fn forward(params: &FusionParams, e: [&[f64]; 3]) -> Result<WindowForward, FusionError> {
    let mut z: [Vec<f64>; 3] = Default::default();
    let mut proj_norm = [0.0; 3];
    let mut nonzero: [Vec<usize>; 3] = Default::default();
    for m in Modality::ALL {
        let (u, n, nz) = project(params, m, e[m.index()])?;
        z[m.index()] = u;
        proj_norm[m.index()] = n;
        nonzero[m.index()] = nz;
    }
    let c = z.concat();
    let logits = params.gate_w.matvec(&c);
    let gates: [f64; 3] = std::array::from_fn(|i| sigmoid(logits[i] + params.gate_b[i]));
    let mut fw = WindowForward {
        nonzero,
        proj_norm,
        z,
        gates,
        hidden: Vec::new(),
        out_norm: 0.0,
        state: Vec::new(),
    };
    let gated = fw.gated();
    fw.hidden = params
        .w1
        .matvec(&gated)
        .iter()
        .zip(&params.b1)
        .map(|(a, b)| (a + b).tanh())
        .collect();
    let mut y: Vec<f64> = params
        .w2
        .matvec(&fw.hidden)
        .iter()
        .zip(&params.b2)
        .map(|(a, b)| a + b)
        .collect();
    let n = norm(&y);
    if !(n > 0.0 && n.is_finite()) {
        return Err(FusionError::DegenerateFusion);
    }
    y.iter_mut().for_each(|v| *v /= n);
    fw.out_norm = n;
    fw.state = y;
    Ok(fw)
}

/// Gated fusion of the three modality embeddings (fixed M, T, L order) into a
/// unit state vector.
pub fn fuse(params: &FusionParams, e_m: &[f64], e_t: &[f64], e_l: &[f64]) -> Result<Vec<f64>, FusionError> {
    forward(params, [e_m, e_t, e_l]).map(|f| f.state)
}

/// Gate values in (0, 1) for a window, in M, T, L order.
pub fn gates(params: &FusionParams, e: &WindowEmbeddings) -> Result<[f64; 3], FusionError> {
    forward(params, triple(e)).map(|f| f.gates)
}

pub(crate) fn triple(e: &WindowEmbeddings) -> [&[f64]; 3] {
    [&e.modalities[0], &e.modalities[1], &e.modalities[2]]
}

pub fn fuse_window(params: &FusionParams, e: &WindowEmbeddings) -> Result<SystemStateEmbedding, FusionError> {
    Ok(SystemStateEmbedding {
        vector: forward(params, triple(e))?.state,
        window_id: e.window.window_id,
        label: e.label.clone(),
    })
}

pub fn fuse_all(params: &FusionParams, es: &[WindowEmbeddings]) -> Result<Vec<SystemStateEmbedding>, FusionError> {
    es.iter().map(|e| fuse_window(params, e)).collect()
}

/// Cosine similarity; errors on a zero vector.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64, FusionError> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(FusionError::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
