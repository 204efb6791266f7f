//! Throughput of the moment accumulation passes and the fitting stages.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use eca::moments::{accumulate, MomentOptions};
use eca::pipeline::{fit_lda, fit_lda_from_moments, FitOptions, SvdMethod};
use eca_bench::bench_corpus;

fn accumulation(c: &mut Criterion) {
    let mut group = c.benchmark_group("accumulate");
    for &docs in &[1_000usize, 10_000] {
        let (corpus, _) = bench_corpus(50, 5, docs, 3);
        group.throughput(Throughput::Elements(docs as u64));
        group.bench_with_input(BenchmarkId::from_parameter(docs), &corpus, |b, corpus| {
            b.iter(|| accumulate(corpus, &MomentOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn whitened_tensor(c: &mut Criterion) {
    let (corpus, prior) = bench_corpus(50, 5, 10_000, 3);
    let ms = accumulate(&corpus, &MomentOptions::default()).unwrap().finalize().unwrap();
    let mean = ms.mean().clone();
    let a0 = prior.alpha0();
    let modified = ms.pairs_dense().unwrap() - (a0 / (a0 + 1.0)) * &mean * mean.transpose();
    let w = eca::spectral::truncated_whiten(&modified, 5).unwrap();
    c.bench_function("whitened_triples_10k_docs", |b| {
        b.iter(|| ms.whitened_triples(w.w()))
    });
}

fn end_to_end(c: &mut Criterion) {
    let (corpus, prior) = bench_corpus(50, 5, 10_000, 3);
    let dense = FitOptions::new(5, prior.alpha0()).with_seed(3);
    let mut power = dense.clone();
    power.svd_method = SvdMethod::PowerIteration;
    power.max_iter = 300;
    c.bench_function("fit_lda_dense_10k_docs", |b| {
        b.iter(|| fit_lda(&corpus, &dense).unwrap())
    });
    let ms = accumulate(&corpus, &MomentOptions::default()).unwrap().finalize().unwrap();
    c.bench_function("fit_from_moments_dense", |b| {
        b.iter(|| fit_lda_from_moments(&ms, &dense).unwrap())
    });
    c.bench_function("fit_from_moments_power_iteration", |b| {
        b.iter(|| fit_lda_from_moments(&ms, &power).unwrap())
    });
}

criterion_group!(benches, accumulation, whitened_tensor, end_to_end);
criterion_main!(benches);
