use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use cleanscore_bench::{bimodal_scores, noisy_corpus};
use cleanscore_core::config::PipelineConfig;
use cleanscore_core::gmm::fit_gmm;
use cleanscore_core::noise_lab::auc;
use cleanscore_core::pipeline::score_corpus;
use cleanscore_core::retrieval::{retrieve_dpp, retrieve_topk, Embedder, HashedTfIdf, RetrievalPool, DEFAULT_DIM};

fn scoring(c: &mut Criterion) {
    let (data, scorer) = noisy_corpus(100, 4);
    let mut group = c.benchmark_group("score_corpus");
    group.sample_size(10);
    for n_neighbor in [10, 50] {
        let config = PipelineConfig { n_neighbor, parallelism: 1, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(n_neighbor), &config, |b, config| {
            b.iter(|| score_corpus(black_box(&data), config, &scorer, None).unwrap())
        });
    }
    group.finish();
}

fn mixture(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_gmm");
    for n in [1_000, 10_000] {
        let (scores, _) = bimodal_scores(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &scores, |b, s| {
            b.iter(|| fit_gmm(black_box(s), 200, 1e-8, 0).unwrap())
        });
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let (scores, gold) = bimodal_scores(10_000, 2);
    c.bench_function("auc/10000", |b| b.iter(|| auc(black_box(&scores), &gold)));
}

fn retrieval(c: &mut Criterion) {
    let (data, _) = noisy_corpus(250, 4);
    let embedder = HashedTfIdf::fit(DEFAULT_DIM, data.iter().map(|d| d.query.as_str()));
    let query = embedder.embed(&data[0].query).unwrap();
    let pool = RetrievalPool::build(data, &embedder).unwrap();
    let mut group = c.benchmark_group("retrieve");
    group.bench_function("topk/8", |b| b.iter(|| retrieve_topk(black_box(&query), &pool, 8)));
    group.bench_function("dpp/8", |b| b.iter(|| retrieve_dpp(black_box(&query), &pool, 8)));
    group.finish();
}

criterion_group!(benches, scoring, mixture, ranking, retrieval);
criterion_main!(benches);
