use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{StateConditionedBundle, TaskConfig, TaskError};
use crate::fusion::SystemStateEmbedding;
use crate::linalg::{dot, norm};
use crate::states::{assign, partition_checksum, StatePartition};

/// Failure-type prototypes in relative-encoding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub prototypes: BTreeMap<String, Vec<f64>>,
    pub samples: usize,
}

/// `normalize(z − μ_k)` for the state `k` that `z` is assigned to. A zero
/// offset stays zero.
pub fn relative_encoding(partition: &StatePartition, z: &[f64]) -> Result<Vec<f64>, TaskError> {
    let k = assign(partition, z)?;
    let mut r: Vec<f64> = z.iter().zip(&partition.centroids[k]).map(|(a, b)| a - b).collect();
    let n = norm(&r);
    if n > 0.0 {
        r.iter_mut().for_each(|x| *x /= n);
    }
    Ok(r)
}

#[derive(Default)]
struct PrototypeSums {
    sums: BTreeMap<String, Vec<f64>>,
    samples: usize,
}

impl PrototypeSums {
    fn add(&mut self, ty: &str, r: &[f64]) {
        self.samples += 1;
        let acc = self.sums.entry(ty.to_string()).or_insert_with(|| vec![0.0; r.len()]);
        for (a, x) in acc.iter_mut().zip(r) {
            *a += x;
        }
    }

    fn finish(&self) -> ClassifierModel {
        let prototypes = self
            .sums
            .iter()
            .map(|(t, s)| {
                let n = norm(s);
                let v = if n > 0.0 { s.iter().map(|x| x / n).collect() } else { s.clone() };
                (t.clone(), v)
            })
            .collect();
        ClassifierModel {
            prototypes,
            samples: self.samples,
        }
    }
}

/// Prototypes from the labeled failure windows among `train`.
pub fn tune_classifier(
    partition: &StatePartition,
    train: &[SystemStateEmbedding],
    cfg: &TaskConfig,
) -> Result<StateConditionedBundle<ClassifierModel>, TaskError> {
    cfg.validate()?;
    let mut global = PrototypeSums::default();
    let mut per: Vec<PrototypeSums> = (0..partition.k).map(|_| PrototypeSums::default()).collect();
    for s in train {
        let Some(ty) = s
            .label
            .as_ref()
            .filter(|l| l.anomalous)
            .and_then(|l| l.failure_type.as_deref())
        else {
            continue;
        };
        let k = assign(partition, &s.vector)?;
        let r = relative_encoding(partition, &s.vector)?;
        global.add(ty, &r);
        per[k].add(ty, &r);
    }
    if global.samples == 0 {
        return Err(TaskError::NoPrototypes);
    }
    Ok(StateConditionedBundle {
        per_cluster: per
            .iter()
            .map(|p| (p.samples > 0 && p.samples >= cfg.min_samples).then(|| p.finish()))
            .collect(),
        global: global.finish(),
        min_samples: cfg.min_samples,
        partition_checksum: partition_checksum(partition),
    })
}

/// Failure types ranked by similarity of the relative encoding to each
/// prototype. The state's own prototype is used where it has one, the global
/// prototype otherwise. Ties break by type name.
pub fn classify_ranked(
    bundle: &StateConditionedBundle<ClassifierModel>,
    partition: &StatePartition,
    z: &[f64],
) -> Result<Vec<(String, f64)>, TaskError> {
    let k = assign(partition, z)?;
    let own = bundle.per_cluster.get(k).and_then(Option::as_ref);
    let r = relative_encoding(partition, z)?;
    let mut types: Vec<&String> = bundle.global.prototypes.keys().collect();
    if let Some(m) = own {
        types.extend(m.prototypes.keys());
    }
    types.sort();
    types.dedup();
    if types.is_empty() {
        return Err(TaskError::NoPrototypes);
    }
    let mut ranked: Vec<(String, f64)> = types
        .into_iter()
        .map(|t| {
            let proto = own
                .and_then(|m| m.prototypes.get(t))
                .or_else(|| bundle.global.prototypes.get(t))
                .expect("type comes from one of the maps");
            (t.clone(), dot(&r, proto))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn classify(
    bundle: &StateConditionedBundle<ClassifierModel>,
    partition: &StatePartition,
    z: &[f64],
) -> Result<String, TaskError> {
    Ok(classify_ranked(bundle, partition, z)?.swap_remove(0).0)
}
