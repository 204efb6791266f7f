//! Streaming empirical moment accumulation over bag-of-words corpora.
//!
//! The unbiased estimators average over ordered tuples of distinct token
//! positions within each document, which by exchangeability share the
//! expectation of the positional moments while using every token. A strict
//! first-three-tokens mode is available for replication.
//!
//! The d^3 third-moment tensor is never materialized: documents are kept as
//! sparse count vectors and contracted on demand, and the whitened k x k x k
//! statistics are accumulated directly against a fixed whitening matrix.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{symmetrize, MomentSet, PairsOperator};
use crate::error::{Error, Result};
use crate::model::Corpus;

/// Above this dimension the dense d x d pairs matrix is not materialized and
/// the pairs moment is kept as a document-backed operator.
pub const DEFAULT_DENSE_PAIRS_CAP: usize = 20_000;

/// Which token-position estimator to use per document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EstimatorMode {
    /// Average over all ordered tuples of distinct positions (default; same
    /// expectation by exchangeability, lower variance).
    #[default]
    AllDistinctTriples,
    /// Use only the first two / three tokens of each document.
    FirstThreeTokens,
}

/// Options fixed over one accumulation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    pub estimator_mode: EstimatorMode,
    /// Require four tokens per document (fourth-moment estimation).
    pub need_fourth: bool,
    pub dense_pairs_cap: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        Self {
            estimator_mode: EstimatorMode::default(),
            need_fourth: false,
            dense_pairs_cap: DEFAULT_DENSE_PAIRS_CAP,
        }
    }
}

#[derive(Debug, Clone)]
struct DocStats {
    ids: Vec<u32>,
    counts: Vec<f64>,
    total: f64,
    first3: [u32; 3],
}

/// Per-document sparse contributions retained so that any eta-contraction of
/// the empirical third moment (and the pairs action at large d) can be
/// evaluated after accumulation.
pub struct DocMoments {
    d: usize,
    mode: EstimatorMode,
    docs: Vec<DocStats>,
}

impl DocMoments {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    /// `v -> Pairs_hat v` without materializing the d x d matrix.
    pub fn pairs_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.d);
        let n = self.docs.len() as f64;
        for doc in &self.docs {
            match self.mode {
                EstimatorMode::AllDistinctTriples => {
                    let w = 1.0 / (doc.total * (doc.total - 1.0));
                    let dot: f64 = doc
                        .ids
                        .iter()
                        .zip(&doc.counts)
                        .map(|(&id, &c)| c * v[id as usize])
                        .sum();
                    for (&id, &c) in doc.ids.iter().zip(&doc.counts) {
                        out[id as usize] += w * c * (dot - v[id as usize]);
                    }
                }
                EstimatorMode::FirstThreeTokens => {
                    let [t1, t2, _] = doc.first3;
                    out[t1 as usize] += 0.5 * v[t2 as usize];
                    out[t2 as usize] += 0.5 * v[t1 as usize];
                }
            }
        }
        out / n
    }

    /// `Triples_hat(eta)`, averaging the per-document distinct-position sums.
    pub fn triples_contract(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(eta.len(), self.d, "eta dimension mismatch");
        let mut out = DMatrix::zeros(self.d, self.d);
        let n = self.docs.len() as f64;
        for doc in &self.docs {
            match self.mode {
                EstimatorMode::AllDistinctTriples => {
                    let w = 1.0 / (doc.total * (doc.total - 1.0) * (doc.total - 2.0));
                    let ce: f64 = doc
                        .ids
                        .iter()
                        .zip(&doc.counts)
                        .map(|(&id, &c)| c * eta[id as usize])
                        .sum();
                    for (&ia, &ca) in doc.ids.iter().zip(&doc.counts) {
                        let ea = eta[ia as usize];
                        for (&ib, &cb) in doc.ids.iter().zip(&doc.counts) {
                            let eb = eta[ib as usize];
                            out[(ia as usize, ib as usize)] +=
                                w * ca * cb * (ce - ea - eb);
                        }
                        out[(ia as usize, ia as usize)] += w * ca * (2.0 * ea - ce);
                    }
                }
                EstimatorMode::FirstThreeTokens => {
                    let [t1, t2, t3] = doc.first3;
                    out[(t1 as usize, t2 as usize)] += eta[t3 as usize];
                }
            }
        }
        out / n
    }

    /// The k slices `W^T Triples_hat(w_j) W`, accumulated directly in the
    /// whitened space: per document only k x k work plus k^3 for the
    /// repeated-position corrections.
    pub fn whitened_triples(&self, w: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        assert_eq!(w.nrows(), self.d, "whitener row dimension mismatch");
        let k = w.ncols();
        let mut slices = vec![DMatrix::zeros(k, k); k];
        let n = self.docs.len() as f64;
        let mut s = DMatrix::zeros(k, k);
        let mut h = vec![DMatrix::zeros(k, k); k];
        for doc in &self.docs {
            match self.mode {
                EstimatorMode::AllDistinctTriples => {
                    let wgt = 1.0 / (doc.total * (doc.total - 1.0) * (doc.total - 2.0));
                    let mut ct = DVector::zeros(k);
                    s.fill(0.0);
                    for hm in h.iter_mut() {
                        hm.fill(0.0);
                    }
                    for (&id, &c) in doc.ids.iter().zip(&doc.counts) {
                        let row = w.row(id as usize).transpose();
                        ct.axpy(c, &row, 1.0);
                        let outer = c * &row * row.transpose();
                        s += &outer;
                        for j in 0..k {
                            h[j] += &outer * row[j];
                        }
                    }
                    let cc = &ct * ct.transpose();
                    for j in 0..k {
                        let gj = s.column(j).into_owned();
                        let mut slice = (&cc - &s) * ct[j];
                        slice -= &gj * ct.transpose();
                        slice -= &ct * gj.transpose();
                        slice += 2.0 * &h[j];
                        slices[j] += wgt * slice;
                    }
                }
                EstimatorMode::FirstThreeTokens => {
                    let [t1, t2, t3] = doc.first3;
                    let r1 = w.row(t1 as usize).transpose();
                    let r2 = w.row(t2 as usize).transpose();
                    let r3 = w.row(t3 as usize).transpose();
                    let outer = &r1 * r2.transpose();
                    for j in 0..k {
                        slices[j] += r3[j] * &outer;
                    }
                }
            }
        }
        for slice in slices.iter_mut() {
            *slice /= n;
        }
        slices
    }
}

/// Running sums of the empirical first and second moments plus the retained
/// per-document statistics needed for on-demand third-moment contraction.
#[derive(Debug)]
pub struct MomentAccumulator {
    d: usize,
    opts: MomentOptions,
    stats: Vec<DocStats>,
    sum_mean: DVector<f64>,
    sum_pairs: Option<DMatrix<f64>>,
    skipped: usize,
}

impl MomentAccumulator {
    pub fn empty(d: usize, opts: MomentOptions) -> Self {
        let dense = d <= opts.dense_pairs_cap;
        Self {
            d,
            opts,
            stats: Vec::new(),
            sum_mean: DVector::zeros(d),
            sum_pairs: dense.then(|| DMatrix::zeros(d, d)),
            skipped: 0,
        }
    }

    pub fn n_docs(&self) -> usize {
        self.stats.len()
    }

    pub fn skipped_docs(&self) -> usize {
        self.skipped
    }

    fn min_tokens(&self) -> u64 {
        if self.opts.need_fourth {
            4
        } else {
            3
        }
    }

    fn push_doc(&mut self, doc: &crate::model::Document) {
        if doc.total_tokens() < self.min_tokens() {
            self.skipped += 1;
            return;
        }
        let first3: [u32; 3] = doc
            .leading_tokens(3)
            .expect("document has >= 3 tokens")
            .try_into()
            .expect("exactly three leading tokens");
        let ids: Vec<u32> = doc.counts().iter().map(|&(id, _)| id).collect();
        let counts: Vec<f64> = doc.counts().iter().map(|&(_, c)| c as f64).collect();
        let total = doc.total_tokens() as f64;
        let stats = DocStats { ids, counts, total, first3 };

        match self.opts.estimator_mode {
            EstimatorMode::AllDistinctTriples => {
                for (&id, &c) in stats.ids.iter().zip(&stats.counts) {
                    self.sum_mean[id as usize] += c / total;
                }
                if let Some(p) = self.sum_pairs.as_mut() {
                    let w = 1.0 / (total * (total - 1.0));
                    for (&ia, &ca) in stats.ids.iter().zip(&stats.counts) {
                        for (&ib, &cb) in stats.ids.iter().zip(&stats.counts) {
                            p[(ia as usize, ib as usize)] += w * ca * cb;
                        }
                        p[(ia as usize, ia as usize)] -= w * ca;
                    }
                }
            }
            EstimatorMode::FirstThreeTokens => {
                let [t1, t2, _] = stats.first3;
                self.sum_mean[t1 as usize] += 1.0;
                if let Some(p) = self.sum_pairs.as_mut() {
                    p[(t1 as usize, t2 as usize)] += 1.0;
                }
            }
        }
        self.stats.push(stats);
    }

    /// Commutative, associative combination of two accumulation passes.
    pub fn merge(mut self, other: MomentAccumulator) -> Result<MomentAccumulator> {
        if self.d != other.d || self.opts != other.opts {
            return Err(Error::OptionsMismatch);
        }
        self.sum_mean += other.sum_mean;
        match (self.sum_pairs.as_mut(), other.sum_pairs) {
            (Some(a), Some(b)) => *a += b,
            (None, None) => {}
            _ => return Err(Error::OptionsMismatch),
        }
        self.stats.extend(other.stats);
        self.skipped += other.skipped;
        Ok(self)
    }

    /// Finishes the averages and exposes the contraction oracles.
    pub fn finalize(self) -> Result<MomentSet> {
        let n = self.stats.len();
        if n == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let mean = self.sum_mean / n as f64;
        let docs = Arc::new(DocMoments { d: self.d, mode: self.opts.estimator_mode, docs: self.stats });
        let pairs = match self.sum_pairs {
            Some(p) => PairsOperator::Dense(symmetrize(p / n as f64)),
            None => PairsOperator::DocBacked(Arc::clone(&docs)),
        };
        Ok(MomentSet::empirical(mean, pairs, docs, n))
    }
}

/// Accumulates empirical moments over every qualifying document of `corpus`.
/// Documents with fewer than three tokens (four when fourth moments are
/// requested) are skipped and counted; `EmptyCorpus` if none qualifies.
pub fn accumulate(corpus: &Corpus, opts: &MomentOptions) -> Result<MomentAccumulator> {
    let mut acc = MomentAccumulator::empty(corpus.d(), *opts);
    for doc in corpus.docs() {
        acc.push_doc(doc);
    }
    if acc.n_docs() == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(acc)
}
