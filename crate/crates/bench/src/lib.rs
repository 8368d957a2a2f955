//! Shared fixtures for the benchmarks under benches/.

use rslicer_core::pipeline::{corpus_from_synth, embed};
use rslicer_core::synthgen::{default_scenario, generate};
use rslicer_core::{Corpus, EmbeddingSet, RunConfig};

/// Two-regime synthetic corpus with a few faults, and its backbone embeddings.
pub fn fixture(backbone_dim: usize) -> (RunConfig, Corpus, EmbeddingSet) {
    let cfg = RunConfig {
        backbone_dim,
        ..Default::default()
    };
    let tel = generate(&default_scenario(2, 6, 0)).expect("default scenario is valid");
    let corpus = corpus_from_synth(&tel, &cfg).expect("synthetic corpus windows");
    let set = embed(&corpus, &cfg).expect("builtin backbone");
    (cfg, corpus, set)
}
