use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rslicer_core::embedding::{Backbone, BackboneConfig};
use rslicer_core::fusion::fuse_all;
use rslicer_core::pipeline::{corpus_from_synth, embed, train_model};
use rslicer_core::states::{partition, partition_checksum};
use rslicer_core::synthgen::{default_scenario, generate, FailureType, FaultSpec};
use rslicer_core::tasks::{
    classify, classify_ranked, component_subembedding, localize, relative_encoding, score_anomaly, tune_anomaly,
    tune_classifier, tune_localizer, LocalizerModel,
};
use rslicer_core::{RunConfig, StateConditionedBundle, StatePartition, SystemStateEmbedding, TaskConfig, TaskError, WindowLabel};

fn two_states() -> StatePartition {
    StatePartition {
        k: 2,
        centroids: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
        sizes: vec![0, 0],
        diagnostics: Vec::new(),
        seed: 0,
    }
}

fn state(vector: Vec<f64>, label: Option<(bool, &str)>) -> SystemStateEmbedding {
    SystemStateEmbedding {
        vector,
        window_id: 0,
        label: label.map(|(anomalous, ty)| WindowLabel {
            anomalous,
            failure_type: (!ty.is_empty()).then(|| ty.to_string()),
            ..Default::default()
        }),
    }
}

/// `n` normal points near `center`.
fn cloud(center: [f64; 3], n: usize, spread: f64, seed: u64) -> Vec<SystemStateEmbedding> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| state(center.iter().map(|c| c + rng.gen_range(-spread..spread)).collect(), Some((false, ""))))
        .collect()
}

fn cfg(min_samples: usize) -> TaskConfig {
    TaskConfig {
        min_samples,
        quantile: 0.99,
    }
}

#[test]
fn identical_normals_floor_the_variance() {
    let p = two_states();
    let train = vec![state(vec![0.9, 0.1, 0.0], None); 30];
    let b = tune_anomaly(&p, &train, &cfg(20)).unwrap();
    let m = b.resolve(0);
    assert_eq!(m.variance, vec![1e-6; 3]);
    assert!(m.threshold < 1e-12);
    let (s, flagged) = score_anomaly(&b, &p, &[0.9, 0.1, 0.0]).unwrap();
    assert!(s < 1e-12 && !flagged);
    let (s, flagged) = score_anomaly(&b, &p, &[0.9, 0.1, 0.001]).unwrap();
    assert!(flagged && (s - 1.0).abs() < 1e-6);
}

#[test]
fn gaussian_matches_naive_moments() {
    let p = two_states();
    let train = cloud([0.9, 0.1, 0.2], 100, 0.05, 1);
    let b = tune_anomaly(&p, &train, &cfg(20)).unwrap();
    let m = b.per_cluster[0].as_ref().unwrap();
    assert_eq!(m.samples, 100);
    for d in 0..3 {
        let xs: Vec<f64> = train.iter().map(|s| s.vector[d]).collect();
        let mean = xs.iter().sum::<f64>() / 100.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 100.0;
        assert!((m.mean[d] - mean).abs() < 1e-12);
        assert!((m.variance[d] - var).abs() < 1e-12);
    }
    let z = [0.7, 0.3, 0.25];
    let want: f64 = (0..3).map(|d| (z[d] - m.mean[d]).powi(2) / m.variance[d]).sum();
    assert!((m.score(&z) - want).abs() < 1e-9 * want);

    let mut scores: Vec<f64> = train.iter().map(|s| m.score(&s.vector)).collect();
    scores.sort_by(f64::total_cmp);
    assert_eq!(m.threshold, scores[98]);
}

#[test]
fn score_grows_away_from_the_mean() {
    let p = two_states();
    let b = tune_anomaly(&p, &cloud([0.9, 0.1, 0.2], 50, 0.05, 2), &cfg(20)).unwrap();
    let m = b.resolve(0);
    let mut last = -1.0;
    for step in 0..10 {
        let mut z = m.mean.clone();
        z[2] += 0.02 * step as f64;
        let s = m.score(&z);
        assert!(s > last);
        last = s;
    }
}

#[test]
fn sparse_states_fall_back_to_global() {
    let p = two_states();
    let mut train = cloud([0.9, 0.1, 0.0], 40, 0.05, 3);
    train.extend(cloud([0.1, 0.9, 0.0], 5, 0.05, 4));
    let b = tune_anomaly(&p, &train, &cfg(20)).unwrap();
    assert!(!b.uses_global(0) && b.uses_global(1) && b.uses_global(7));
    assert_eq!(b.fallback_count(), 1);
    assert_eq!(b.resolve(1), &b.global);
    assert_eq!(b.global.samples, 45);
    assert_eq!(b.partition_checksum, partition_checksum(&p));
}

#[test]
fn anomaly_needs_normal_windows() {
    let p = two_states();
    let train = vec![state(vec![1.0, 0.0, 0.0], Some((true, "cpu_stress")))];
    assert_eq!(tune_anomaly(&p, &train, &cfg(1)).unwrap_err(), TaskError::NoNormalData);
    let bad = TaskConfig { quantile: 0.0, ..cfg(1) };
    assert!(matches!(tune_anomaly(&p, &cloud([1.0, 0.0, 0.0], 3, 0.1, 0), &bad), Err(TaskError::InvalidConfig(_))));
}

#[test]
fn sole_exemplar_is_its_own_prototype() {
    let p = two_states();
    let z = vec![0.8, 0.1, 0.3];
    let train = vec![state(z.clone(), Some((true, "latency_spike")))];
    let b = tune_classifier(&p, &train, &cfg(1)).unwrap();
    let proto = &b.per_cluster[0].as_ref().unwrap().prototypes["latency_spike"];
    assert_eq!(proto, &relative_encoding(&p, &z).unwrap());
    let ranked = classify_ranked(&b, &p, &z).unwrap();
    assert_eq!(ranked.len(), 1);
    assert!((ranked[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn classifier_prefers_the_matching_offset() {
    let p = two_states();
    let mut train = Vec::new();
    for i in 0..25 {
        let e = i as f64 * 0.001;
        train.push(state(vec![0.9, 0.0, 0.3 + e], Some((true, "cpu_stress"))));
        train.push(state(vec![0.9, 0.0, -0.3 - e], Some((true, "error_burst"))));
    }
    train.push(state(vec![0.1, 0.9, 0.3], Some((true, "latency_spike"))));
    let b = tune_classifier(&p, &train, &cfg(20)).unwrap();
    assert!(b.uses_global(1) && !b.uses_global(0));
    assert_eq!(classify(&b, &p, &[0.95, 0.0, 0.2]).unwrap(), "cpu_stress");
    assert_eq!(classify(&b, &p, &[0.95, 0.0, -0.2]).unwrap(), "error_burst");
    // State 1 uses the global prototypes, where latency_spike lives.
    let ranked = classify_ranked(&b, &p, &[0.0, 0.8, 0.3]).unwrap();
    let names: Vec<&str> = ranked.iter().map(|(t, _)| t.as_str()).collect();
    assert_eq!(names.len(), 3);
    assert!(names.contains(&"latency_spike"));
}

#[test]
fn classifier_needs_labeled_failures() {
    let p = two_states();
    assert_eq!(
        tune_classifier(&p, &cloud([1.0, 0.0, 0.0], 10, 0.1, 5), &cfg(1)).unwrap_err(),
        TaskError::NoPrototypes
    );
}

fn localizer_fixture() -> (rslicer_core::Corpus, Vec<SystemStateEmbedding>, Backbone, rslicer_core::FusionParams) {
    let mut scenario = default_scenario(1, 0, 11);
    let spacing = scenario.duration_us / 6;
    scenario.faults = (0..6)
        .map(|i| FaultSpec {
            start_us: spacing * i + spacing / 2,
            end_us: spacing * i + spacing / 2 + 120_000_000,
            target_component: "svc-c".into(),
            failure_type: FailureType::CpuStress,
            magnitude: 3.0,
        })
        .collect();
    let run = RunConfig {
        backbone_dim: 256,
        ..Default::default()
    };
    let corpus = corpus_from_synth(&generate(&scenario).unwrap(), &run).unwrap();
    let set = embed(&corpus, &run).unwrap();
    let params = train_model(&set, &run, |_| {}).unwrap().params;
    let states = fuse_all(&params, &set.windows).unwrap();
    let backbone = Backbone::from_config(&BackboneConfig::BuiltinHash { dim: 256 }).unwrap();
    (corpus, states, backbone, params)
}

#[test]
fn localizer_finds_the_stressed_component() {
    let (corpus, states, backbone, params) = localizer_fixture();
    let part = partition(&states, 1, 1, 0).unwrap();
    let all: Vec<usize> = (0..corpus.len()).collect();
    let b = tune_localizer(&part, &corpus, &states, &all, &backbone, &params, &cfg(20)).unwrap();
    assert_eq!(b.global.profiles.len(), 5);

    let mut faulty = 0;
    let mut hits = 0;
    for i in 0..corpus.len() {
        let obs = corpus.observation(i);
        let ranked = localize(&b, &part, &obs, &backbone, &params).unwrap();
        let mut names: Vec<String> = ranked.iter().map(|(c, _)| c.clone()).collect();
        assert!(ranked.windows(2).all(|w| w[0].1 >= w[1].1));
        names.sort();
        assert_eq!(names, obs.components());
        if obs.label.is_some_and(|l| l.anomalous) {
            faulty += 1;
            hits += usize::from(ranked[0].0 == "svc-c");
        }
    }
    assert!(faulty >= 6);
    assert!(hits as f64 >= 0.7 * faulty as f64, "{hits}/{faulty}");
}

#[test]
fn single_component_window_equals_full_state() {
    let (corpus, states, backbone, params) = localizer_fixture();
    let obs = corpus.observation(0).filter_component("svc-b");
    let sub = component_subembedding(&backbone, &params, &obs.view(), "svc-b").unwrap();
    let full = fuse_all(
        &params,
        &[rslicer_core::embedding::embed_window(&backbone, &obs.view()).unwrap()],
    )
    .unwrap();
    assert_eq!(sub, full[0].vector);
    assert_eq!(
        component_subembedding(&backbone, &params, &obs.view(), "svc-z").unwrap_err(),
        TaskError::ComponentAbsent("svc-z".into())
    );
    assert!(!states.is_empty());
}

#[test]
fn components_without_a_profile_score_one() {
    let (corpus, states, backbone, params) = localizer_fixture();
    let part = partition(&states, 1, 1, 0).unwrap();
    let bundle = StateConditionedBundle {
        per_cluster: vec![None],
        global: LocalizerModel {
            profiles: BTreeMap::new(),
            samples: 0,
        },
        min_samples: 20,
        partition_checksum: partition_checksum(&part),
    };
    let ranked = localize(&bundle, &part, &corpus.observation(3), &backbone, &params).unwrap();
    assert_eq!(ranked.len(), 5);
    assert!(ranked.iter().all(|(_, s)| *s == 1.0));
    let names: Vec<&str> = ranked.iter().map(|(c, _)| c.as_str()).collect();
    assert_eq!(names, ["svc-a", "svc-b", "svc-c", "svc-d", "svc-e"]);
}

#[test]
fn exact_profile_scores_zero_and_ranks_last() {
    let (corpus, states, backbone, params) = localizer_fixture();
    let part = partition(&states, 1, 1, 0).unwrap();
    let obs = corpus.observation(3);
    let sub = component_subembedding(&backbone, &params, &obs, "svc-d").unwrap();
    let bundle = StateConditionedBundle {
        per_cluster: vec![None],
        global: LocalizerModel {
            profiles: BTreeMap::from([("svc-d".to_string(), sub)]),
            samples: 1,
        },
        min_samples: 20,
        partition_checksum: partition_checksum(&part),
    };
    let ranked = localize(&bundle, &part, &obs, &backbone, &params).unwrap();
    let (last, score) = ranked.last().unwrap();
    assert_eq!(last, "svc-d");
    assert!(score.abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn raising_min_samples_only_adds_fallbacks(
        n0 in 1usize..40, n1 in 1usize..40, lo in 1usize..40, extra in 0usize..40, seed in 0u64..100,
    ) {
        let p = two_states();
        let mut train = cloud([0.9, 0.1, 0.0], n0, 0.05, seed);
        train.extend(cloud([0.1, 0.9, 0.0], n1, 0.05, seed + 1));
        let a = tune_anomaly(&p, &train, &cfg(lo)).unwrap();
        let b = tune_anomaly(&p, &train, &cfg(lo + extra)).unwrap();
        prop_assert!(b.fallback_count() >= a.fallback_count());
        for k in 0..2 {
            prop_assert!(!a.uses_global(k) || b.uses_global(k));
        }
    }

    #[test]
    fn classification_ignores_offset_scale(
        z in prop::collection::vec(-1.0f64..1.0, 3), c in 0.2f64..1.0,
    ) {
        let p = two_states();
        let mut train = Vec::new();
        for (i, ty) in ["cpu_stress", "latency_spike", "error_burst"].iter().enumerate() {
            let mut v = vec![0.8, 0.1, 0.0];
            v[2] = -0.5 + 0.5 * i as f64;
            v[1] += 0.1 * i as f64;
            train.push(state(v, Some((true, ty))));
        }
        let b = tune_classifier(&p, &train, &cfg(1)).unwrap();
        let k = rslicer_core::states::assign(&p, &z).unwrap();
        let mu = &p.centroids[k];
        let scaled: Vec<f64> = z.iter().zip(mu).map(|(x, m)| m + c * (x - m)).collect();
        prop_assume!(rslicer_core::states::assign(&p, &scaled).unwrap() == k);
        let a = classify_ranked(&b, &p, &z).unwrap();
        let s = classify_ranked(&b, &p, &scaled).unwrap();
        prop_assert_eq!(a.len(), s.len());
        for (x, y) in a.iter().zip(&s) {
            prop_assert!((x.1 - y.1).abs() < 1e-12);
        }
    }
}
