//! Shared fixtures for the criterion benchmarks.

use eca::model::{Corpus, DirichletParams};
use eca::synthetic::{concentrated_topics, generate_lda_corpus};
use rand::SeedableRng;

/// A reproducible synthetic corpus for throughput benchmarks.
pub fn bench_corpus(d: usize, k: usize, docs: usize, doc_len: usize) -> (Corpus, DirichletParams) {
    let topics = concentrated_topics(d, k, 0.8).expect("valid topic shape");
    let prior = DirichletParams::uniform(k, 0.2).expect("valid prior");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let corpus =
        generate_lda_corpus(&topics, &prior, docs, doc_len, &mut rng).expect("generation");
    (corpus, prior)
}
