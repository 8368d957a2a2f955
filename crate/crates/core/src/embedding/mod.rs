//! Shared text backbone: each modality of a window is rendered to canonical
//! text and embedded by the same frozen function into a unit vector.

mod hashing;
mod remote;
mod textualize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hashing::HashBackbone;
pub use remote::{RemoteBackbone, RemoteConfig};
pub use textualize::{log_template, nearest_rank, textualize, ModalityText};

use crate::telemetry::{Corpus, ObservationView, TimeWindow, WindowLabel};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("remote backbone unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote backbone returned dimension {got}, expected {expected}")]
    RemoteDimensionMismatch { expected: usize, got: usize },
    #[error("remote backbone protocol error: {0}")]
    RemoteProtocol(String),
    #[error("invalid backbone config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "M")]
    Metrics,
    #[serde(rename = "T")]
    Traces,
    #[serde(rename = "L")]
    Logs,
}

impl Modality {
    /// Fixed concatenation order used everywhere.
    pub const ALL: [Modality; 3] = [Modality::Metrics, Modality::Traces, Modality::Logs];

    pub fn tag(self) -> &'static str {
        match self {
            Modality::Metrics => "M",
            Modality::Traces => "T",
            Modality::Logs => "L",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneEmbedding {
    pub modality: Modality,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackboneConfig {
    BuiltinHash { dim: usize },
    Remote(RemoteConfig),
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig::BuiltinHash { dim: 1024 }
    }
}

pub enum Backbone {
    Hash(HashBackbone),
    Remote(RemoteBackbone),
}

impl Backbone {
    pub fn from_config(cfg: &BackboneConfig) -> Result<Self, EmbedError> {
        match cfg {
            BackboneConfig::BuiltinHash { dim } => HashBackbone::new(*dim)
                .map(Backbone::Hash)
                .ok_or_else(|| {
                    EmbedError::InvalidConfig(format!("dim {dim} is not a power of two >= 8"))
                }),
            BackboneConfig::Remote(r) => {
                if r.endpoint.is_empty() || r.model.is_empty() {
                    return Err(EmbedError::InvalidConfig(
                        "remote backbone needs an endpoint and a model".into(),
                    ));
                }
                Ok(Backbone::Remote(RemoteBackbone::new(r.clone())))
            }
        }
    }

    /// Output dimension, if already known.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Backbone::Hash(h) => Some(h.dim()),
            Backbone::Remote(r) => r.dim(),
        }
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        match self {
            Backbone::Hash(h) => Ok(texts.iter().map(|t| h.embed(t)).collect()),
            Backbone::Remote(r) => r.embed_batch(texts),
        }
    }

    pub fn embed_text(&self, mt: &ModalityText) -> Result<BackboneEmbedding, EmbedError> {
        let vector = self
            .embed_texts(std::slice::from_ref(&mt.text))?
            .pop()
            .expect("one text in, one vector out");
        Ok(BackboneEmbedding {
            modality: mt.modality,
            vector,
        })
    }
}

/// Normalises `v` in place; false when it is zero or not finite.
pub(crate) fn l2_normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

pub fn embed_text(cfg: &BackboneConfig, mt: &ModalityText) -> Result<BackboneEmbedding, EmbedError> {
    Backbone::from_config(cfg)?.embed_text(mt)
}

/// Backbone embeddings of one window, indexed by [`Modality::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEmbeddings {
    pub window: TimeWindow,
    pub label: Option<WindowLabel>,
    pub modalities: [Vec<f64>; 3],
}

impl WindowEmbeddings {
    pub fn get(&self, m: Modality) -> &[f64] {
        &self.modalities[m.index()]
    }
}

pub fn embed_window(
    backbone: &Backbone,
    obs: &ObservationView<'_>,
) -> Result<WindowEmbeddings, EmbedError> {
    let texts: Vec<String> = Modality::ALL
        .iter()
        .map(|&m| textualize(obs, m).text)
        .collect();
    let mut vs = backbone.embed_texts(&texts)?.into_iter();
    let mut next = || vs.next().expect("three texts in, three vectors out");
    Ok(WindowEmbeddings {
        window: obs.window,
        label: obs.label.cloned(),
        modalities: [next(), next(), next()],
    })
}

/// Embeds every window of `corpus`, preserving order. All texts go to the
/// backbone in one call so a remote service can batch them.
pub fn embed_corpus(backbone: &Backbone, corpus: &Corpus) -> Result<Vec<WindowEmbeddings>, EmbedError> {
    let texts: Vec<String> = corpus
        .observations()
        .flat_map(|obs| Modality::ALL.map(|m| textualize(&obs, m).text))
        .collect();
    let vectors = backbone.embed_texts(&texts)?;
    let mut it = vectors.into_iter();
    Ok(corpus
        .observations()
        .map(|obs| WindowEmbeddings {
            window: obs.window,
            label: obs.label.cloned(),
            modalities: [
                it.next().expect("aligned"),
                it.next().expect("aligned"),
                it.next().expect("aligned"),
            ],
        })
        .collect())
}
