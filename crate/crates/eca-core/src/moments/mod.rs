//! Moment sets: the mean, the pairwise moment matrix and contraction oracles
//! for the third (and optionally fourth) moments, backed either by closed-form
//! constructors or by empirical accumulation over a corpus.

mod analytic;
mod empirical;

pub use analytic::{
    central_from_raw, central_moment_set, dirichlet_raw_moments, exact_pairs,
    exact_quad_contract, exact_triples_contract, lda_raw_moment_set, modified_pairs,
    modified_triples_contract, single_topic_moment_set, DirichletRawMoments,
};
pub use empirical::{
    accumulate, DocMoments, EstimatorMode, MomentAccumulator, MomentOptions,
    DEFAULT_DENSE_PAIRS_CAP,
};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Whether a moment set came from closed forms or from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Analytic,
    Empirical,
}

/// Contraction oracle type: eta -> d x d matrix, linear in eta.
pub type TriplesFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Fourth-moment contraction oracle: (eta, eta') -> d x d matrix.
pub type QuadFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// The pairwise moment, either materialized or kept as a document-backed
/// operator when the dimension makes a dense d x d matrix unreasonable.
#[derive(Clone)]
pub enum PairsOperator {
    Dense(DMatrix<f64>),
    DocBacked(Arc<DocMoments>),
}

impl PairsOperator {
    pub fn dim(&self) -> usize {
        match self {
            PairsOperator::Dense(m) => m.nrows(),
            PairsOperator::DocBacked(d) => d.dim(),
        }
    }

    /// Applies `v -> Pairs v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            PairsOperator::Dense(m) => m * v,
            PairsOperator::DocBacked(d) => d.pairs_apply(v),
        }
    }

    /// Applies the operator to every column of `m`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            PairsOperator::Dense(p) => p * m,
            PairsOperator::DocBacked(d) => {
                let cols: Vec<DVector<f64>> =
                    m.column_iter().map(|c| d.pairs_apply(&c.into_owned())).collect();
                DMatrix::from_columns(&cols)
            }
        }
    }

    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            PairsOperator::Dense(m) => Some(m),
            PairsOperator::DocBacked(_) => None,
        }
    }
}

enum TriplesRep {
    Oracle(TriplesFn),
    DocBacked(Arc<DocMoments>),
}

/// Mean vector, pairwise moment and higher-order contraction oracles.
///
/// Depending on the constructor the pairwise moment and the triples are either
/// central moments (independent-factor algorithms) or raw moments (Dirichlet /
/// LDA path, which modifies them by `alpha0` downstream).
pub struct MomentSet {
    mean: DVector<f64>,
    pairs: PairsOperator,
    triples: TriplesRep,
    quad: Option<QuadFn>,
    provenance: Provenance,
    n_samples: Option<usize>,
}

impl MomentSet {
    /// Wraps closed-form moments. The pairs matrix is symmetrized.
    pub fn analytic(
        mean: DVector<f64>,
        pairs: DMatrix<f64>,
        triples: TriplesFn,
        quad: Option<QuadFn>,
    ) -> Result<Self> {
        let d = mean.len();
        if pairs.nrows() != d || pairs.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "pairs is {}x{}, mean has d = {d}",
                pairs.nrows(),
                pairs.ncols()
            )));
        }
        Ok(Self {
            mean,
            pairs: PairsOperator::Dense(symmetrize(pairs)),
            triples: TriplesRep::Oracle(triples),
            quad,
            provenance: Provenance::Analytic,
            n_samples: None,
        })
    }

    pub(crate) fn empirical(
        mean: DVector<f64>,
        pairs: PairsOperator,
        docs: Arc<DocMoments>,
        n_samples: usize,
    ) -> Self {
        Self {
            mean,
            pairs,
            triples: TriplesRep::DocBacked(docs),
            quad: None,
            provenance: Provenance::Empirical,
            n_samples: Some(n_samples),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn pairs(&self) -> &PairsOperator {
        &self.pairs
    }

    /// Dense pairs matrix; available unless the set is document backed above
    /// the dense cap.
    pub fn pairs_dense(&self) -> Option<&DMatrix<f64>> {
        self.pairs.dense()
    }

    /// Evaluates the third-moment contraction `Triples(eta)`.
    pub fn triples_contract(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        match &self.triples {
            TriplesRep::Oracle(f) => f(eta),
            TriplesRep::DocBacked(d) => d.triples_contract(eta),
        }
    }

    /// Evaluates the fourth-moment contraction `Quad(eta, eta')` when present.
    pub fn quad_contract(&self, eta: &DVector<f64>, eta2: &DVector<f64>) -> Option<DMatrix<f64>> {
        self.quad.as_ref().map(|f| f(eta, eta2))
    }

    pub fn has_quad(&self) -> bool {
        self.quad.is_some()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn n_samples(&self) -> Option<usize> {
        self.n_samples
    }

    /// The k slices `W^T Triples(w_j) W` of the whitened third moment, where
    /// `w_j` runs over the columns of `w`. Document-backed sets accumulate the
    /// k x k x k statistics in one pass without materializing anything of size
    /// d^2; oracle-backed sets fall back to k contractions.
    pub fn whitened_triples(&self, w: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        match &self.triples {
            TriplesRep::Oracle(f) => (0..w.ncols())
                .map(|j| {
                    let slice = f(&w.column(j).into_owned());
                    w.transpose() * slice * w
                })
                .collect(),
            TriplesRep::DocBacked(d) => d.whitened_triples(w),
        }
    }
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}
