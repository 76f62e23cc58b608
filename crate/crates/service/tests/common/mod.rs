#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use feedrank_core::domain::Dataset;
use feedrank_core::survey::{build_weight_table, WeightTable};
use feedrank_core::synth::{generate, generate_survey, GenConfig};
use feedrank_service::{Engine, EngineConfig};

pub fn small_config(seed: u64) -> GenConfig {
    GenConfig {
        n_users: 40,
        n_posts: 150,
        n_categories: 4,
        interaction_rate: 8.0,
        seed,
        ..GenConfig::default()
    }
}

pub fn base(seed: u64) -> (Dataset, WeightTable) {
    let cfg = small_config(seed);
    let ds = generate(&cfg).unwrap().dataset;
    let table = build_weight_table(&ds.vocab, &generate_survey(&cfg).unwrap()).unwrap();
    (ds, table)
}

pub fn engine(dir: &Path, seed: u64, config: EngineConfig) -> Arc<Engine> {
    let (ds, table) = base(seed);
    Arc::new(Engine::open(ds, &dir.join("events.jsonl"), table, None, config).unwrap())
}
