//! Stage functions shared by the command line and the end-to-end tests.
//!
//! Windows are split in time order: the leading `train_fraction` share tunes
//! the task models and the rest is held out for evaluation. Fusion training
//! sees every window, but anomaly labels of held-out windows are hidden from
//! it.

use std::ops::Range;

use crate::artifact::{EmbeddingSet, FusionModel, StateSet};
use crate::config::RunConfig;
use crate::embedding::{embed_corpus, Backbone, WindowEmbeddings};
use crate::eval::{confusion, rank_of, EvalError, EvalReport};
use crate::fusion::{fuse_all, train, EpochLoss, FusionParams, SystemStateEmbedding};
use crate::states::{assign, partition, StatePartition};
use crate::synthgen::SyntheticTelemetry;
use crate::tasks::{
    classify_ranked, localize, score_anomaly, AnomalyModel, ClassifierModel, LocalizerModel, StateConditionedBundle,
};
use crate::telemetry::{build_windows, Corpus, FaultInterval, LabelSource, RegimeInterval, WindowLabel};
use crate::Result;

/// Number of leading windows used for tuning; at least one window lands on
/// each side whenever there are two or more.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    let k = (n as f64 * train_fraction).floor() as usize;
    if n < 2 {
        n
    } else {
        k.clamp(1, n - 1)
    }
}

pub fn corpus_from_synth(tel: &SyntheticTelemetry, cfg: &RunConfig) -> Result<Corpus> {
    let (len, stride) = cfg.windowing()?;
    let labels = LabelSource {
        faults: Some(tel.faults.clone()),
        regimes: Some(tel.regimes.clone()),
    };
    Ok(build_windows(
        tel.metrics.clone(),
        tel.spans.clone(),
        tel.logs.clone(),
        len,
        stride,
        &labels,
    )?)
}

pub fn embed(corpus: &Corpus, cfg: &RunConfig) -> Result<EmbeddingSet> {
    let backbone_cfg = cfg.backbone_config()?;
    let backbone = Backbone::from_config(&backbone_cfg)?;
    let windows = embed_corpus(&backbone, corpus)?;
    let dim = windows.first().map_or_else(|| backbone.dim().unwrap_or(0), |w| w.modalities[0].len());
    Ok(EmbeddingSet {
        backbone: backbone_cfg,
        dim,
        labeled: corpus.is_labeled(),
        windows,
    })
}

/// Copies `windows`, dropping the labels of everything from `n_train` on.
pub fn hide_heldout_labels(windows: &[WindowEmbeddings], n_train: usize) -> Vec<WindowEmbeddings> {
    windows
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut w = w.clone();
            if i >= n_train {
                w.label = None;
            }
            w
        })
        .collect()
}

pub fn train_model(set: &EmbeddingSet, cfg: &RunConfig, on_epoch: impl FnMut(&EpochLoss)) -> Result<FusionModel> {
    let tc = cfg.train_config();
    let n_train = train_count(set.windows.len(), cfg.train_fraction);
    let data = hide_heldout_labels(&set.windows, n_train);
    let outcome = train(&data, &tc, on_epoch)?;
    Ok(FusionModel {
        backbone_dim: outcome.params.backbone_dim,
        state_dim: outcome.params.state_dim,
        hidden_dim: outcome.params.hidden_dim,
        seed: tc.seed,
        train: tc,
        params: outcome.params,
        trace: outcome.trace,
    })
}

pub fn fuse_states(set: &EmbeddingSet, model: &FusionModel) -> Result<StateSet> {
    Ok(StateSet {
        backbone: set.backbone.clone(),
        model: model.clone(),
        states: fuse_all(&model.params, &set.windows)?,
    })
}

pub fn partition_states(states: &[SystemStateEmbedding], cfg: &RunConfig) -> Result<StatePartition> {
    let k_max = cfg.k_max.min(states.len());
    let k_min = cfg.k_min.min(k_max);
    Ok(partition(states, k_min, k_max, cfg.seed)?)
}

/// Ground-truth labels of the corpus windows under `faults`.
pub fn truth_labels(corpus: &Corpus, faults: &[FaultInterval]) -> Vec<WindowLabel> {
    let src = LabelSource {
        faults: Some(faults.to_vec()),
        regimes: None,
    };
    corpus
        .windows
        .iter()
        .map(|w| src.label_for(&w.window).unwrap_or_default())
        .collect()
}

/// Ground-truth regime of each window (largest overlap), if any.
pub fn truth_regimes(corpus: &Corpus, regimes: &[RegimeInterval]) -> Vec<Option<u32>> {
    let src = LabelSource {
        faults: None,
        regimes: Some(regimes.to_vec()),
    };
    corpus
        .windows
        .iter()
        .map(|w| src.label_for(&w.window).and_then(|l| l.regime_id))
        .collect()
}

/// Flags every held-out window and compares with the truth.
pub fn evaluate_anomaly(
    bundle: &StateConditionedBundle<AnomalyModel>,
    partition: &StatePartition,
    states: &[SystemStateEmbedding],
    truth: &[WindowLabel],
    test: Range<usize>,
) -> Result<EvalReport> {
    let mut predicted = Vec::with_capacity(test.len());
    let mut actual = Vec::with_capacity(test.len());
    for i in test {
        predicted.push(score_anomaly(bundle, partition, &states[i].vector)?.1);
        actual.push(truth[i].anomalous);
    }
    if !actual.iter().any(|&a| a) {
        return Err(EvalError::NoPositives.into());
    }
    let (tp, fp, fn_) = confusion(&predicted, &actual)?;
    Ok(EvalReport::from_counts("ad", tp, fp, fn_, actual.len()))
}

/// Ranked-prediction report: top-1 hits count as true positives, misses as
/// one false positive and one false negative, so P = R = F1 = accuracy.
fn ranked_report(task: &str, ranked: &[Vec<String>], truths: &[String]) -> Result<EvalReport> {
    if truths.is_empty() {
        return Err(EvalError::NoPositives.into());
    }
    let hits = ranked
        .iter()
        .zip(truths)
        .filter(|(r, t)| rank_of(r, t) == Some(1))
        .count();
    let misses = truths.len() - hits;
    let mut report = EvalReport::from_counts(task, hits, misses, misses, truths.len());
    report.mrr = Some(crate::eval::mrr(ranked, truths)?);
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_localization(
    bundle: &StateConditionedBundle<LocalizerModel>,
    partition: &StatePartition,
    corpus: &Corpus,
    backbone: &Backbone,
    params: &FusionParams,
    truth: &[WindowLabel],
    test: Range<usize>,
) -> Result<EvalReport> {
    let mut ranked = Vec::new();
    let mut truths = Vec::new();
    for i in test {
        let Some(rc) = truth[i].root_cause_component.as_ref().filter(|_| truth[i].anomalous) else {
            continue;
        };
        let obs = corpus.observation(i);
        let list = localize(bundle, partition, &obs, backbone, params)?;
        ranked.push(list.into_iter().map(|(c, _)| c).collect());
        truths.push(rc.clone());
    }
    ranked_report("loc", &ranked, &truths)
}

pub fn evaluate_classification(
    bundle: &StateConditionedBundle<ClassifierModel>,
    partition: &StatePartition,
    states: &[SystemStateEmbedding],
    truth: &[WindowLabel],
    test: Range<usize>,
) -> Result<EvalReport> {
    let mut ranked = Vec::new();
    let mut truths = Vec::new();
    for i in test {
        let Some(ft) = truth[i].failure_type.as_ref().filter(|_| truth[i].anomalous) else {
            continue;
        };
        let list = classify_ranked(bundle, partition, &states[i].vector)?;
        ranked.push(list.into_iter().map(|(t, _)| t).collect());
        truths.push(ft.clone());
    }
    ranked_report("cls", &ranked, &truths)
}

/// Cluster of every state.
pub fn clusters(partition: &StatePartition, states: &[SystemStateEmbedding]) -> Result<Vec<usize>> {
    Ok(states
        .iter()
        .map(|s| assign(partition, &s.vector))
        .collect::<std::result::Result<_, _>>()?)
}
