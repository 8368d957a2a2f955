use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StateConditionedBundle, TaskConfig, TaskError};
use crate::embedding::{embed_window, Backbone};
use crate::fusion::{cosine_sim, fuse_window, FusionParams, SystemStateEmbedding};
use crate::states::{assign, partition_checksum, StatePartition};
use crate::telemetry::{Corpus, ObservationView};

/// Per-component normal profiles: mean unit sub-embedding over normal windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizerModel {
    pub profiles: BTreeMap<String, Vec<f64>>,
    pub samples: usize,
}

/// State embedding of the window restricted to one component's items.
pub fn component_subembedding(
    backbone: &Backbone,
    params: &FusionParams,
    obs: &ObservationView<'_>,
    component: &str,
) -> Result<Vec<f64>, TaskError> {
    let filtered = obs.filter_component(component);
    if filtered.view().is_empty() {
        return Err(TaskError::ComponentAbsent(component.to_string()));
    }
    let e = embed_window(backbone, &filtered.view())?;
    Ok(fuse_window(params, &e)?.vector)
}

#[derive(Default)]
struct ProfileSums {
    sums: BTreeMap<String, Vec<f64>>,
    windows: usize,
}

impl ProfileSums {
    fn add(&mut self, subs: &[(String, Vec<f64>)]) {
        self.windows += 1;
        for (c, v) in subs {
            let acc = self.sums.entry(c.clone()).or_insert_with(|| vec![0.0; v.len()]);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
    }

    fn finish(&self) -> LocalizerModel {
        let profiles = self
            .sums
            .iter()
            .filter_map(|(c, s)| {
                let n = s.iter().map(|x| x * x).sum::<f64>().sqrt();
                (n > 0.0).then(|| (c.clone(), s.iter().map(|x| x / n).collect()))
            })
            .collect();
        LocalizerModel {
            profiles,
            samples: self.windows,
        }
    }
}

/// Builds per-state component profiles from the normal windows among
/// `train` (indices into `corpus`, whose state embeddings are `states`).
pub fn tune_localizer(
    partition: &StatePartition,
    corpus: &Corpus,
    states: &[SystemStateEmbedding],
    train: &[usize],
    backbone: &Backbone,
    params: &FusionParams,
    cfg: &TaskConfig,
) -> Result<StateConditionedBundle<LocalizerModel>, TaskError> {
    cfg.validate()?;
    let mut global = ProfileSums::default();
    let mut per: Vec<ProfileSums> = (0..partition.k).map(|_| ProfileSums::default()).collect();
    for &i in train {
        let obs = corpus.observation(i);
        if obs.label.map_or(false, |l| l.anomalous) {
            continue;
        }
        let k = assign(partition, &states[i].vector)?;
        let subs = obs
            .components()
            .into_iter()
            .map(|c| component_subembedding(backbone, params, &obs, &c).map(|v| (c, v)))
            .collect::<Result<Vec<_>, _>>()?;
        global.add(&subs);
        per[k].add(&subs);
    }
    if global.windows == 0 {
        return Err(TaskError::NoNormalData);
    }
    Ok(StateConditionedBundle {
        per_cluster: per
            .iter()
            .map(|p| (p.windows > 0 && p.windows >= cfg.min_samples).then(|| p.finish()))
            .collect(),
        global: global.finish(),
        min_samples: cfg.min_samples,
        partition_checksum: partition_checksum(partition),
    })
}

/// Ranks the window's components by `1 − cos(sub-embedding, profile)`;
/// components without a profile score 1. Ties break by component name.
pub fn localize(
    bundle: &StateConditionedBundle<LocalizerModel>,
    partition: &StatePartition,
    obs: &ObservationView<'_>,
    backbone: &Backbone,
    params: &FusionParams,
) -> Result<Vec<(String, f64)>, TaskError> {
    let full = fuse_window(params, &embed_window(backbone, obs)?)?;
    let model = bundle.resolve(assign(partition, &full.vector)?);
    let mut ranked = Vec::new();
    for c in obs.components() {
        let score = match model.profiles.get(&c) {
            Some(profile) => {
                let sub = component_subembedding(backbone, params, obs, &c)?;
                1.0 - cosine_sim(&sub, profile)?
            }
            None => 1.0,
        };
        ranked.push((c, score));
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}
