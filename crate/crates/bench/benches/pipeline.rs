use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mds_core::selection::{select, SelectionConfig};
use mds_core::{
    score_corpus, synth_bundle, validate_bundle, Aggregation, ManifestRng, MdsMethod, ScoreTable,
    StorageMode, SynthConfig,
};

fn scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_corpus_2000");
    group.sample_size(10);
    for mode in [StorageMode::Dense, StorageMode::Sparse] {
        let bundle = validate_bundle(synth_bundle(&SynthConfig {
            sentences: 2000,
            vocab: 4096,
            mode,
            sparse_k: 64,
            ..SynthConfig::default()
        }))
        .unwrap();
        for method in [
            MdsMethod::AvgEntropy,
            MdsMethod::Perents { aggregation: Aggregation::Max },
            MdsMethod::El2n,
            MdsMethod::Selfsup { k: None, seed: 1, normalize: false },
        ] {
            group.bench_function(format!("{}/{mode:?}", method.name()), |b| {
                b.iter(|| score_corpus(black_box(&bundle), method).unwrap())
            });
        }
    }
    group.finish();
}

fn selection(c: &mut Criterion) {
    let mut rng = ManifestRng::new(9);
    let table = ScoreTable::from_values(
        MdsMethod::AvgEntropy,
        (0..200_000).map(|i| (format!("id{i:06}"), Some(rng.unit_f64()))),
    )
    .unwrap();
    let config = SelectionConfig::default();
    let mut group = c.benchmark_group("select");
    group.sample_size(10);
    group.bench_function("200k_S4_n2000_3seeds", |b| b.iter(|| select(black_box(&table), &config).unwrap()));
    group.finish();
}

criterion_group!(benches, scoring, selection);
criterion_main!(benches);
