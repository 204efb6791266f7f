//! Shared domain types: topic matrices, latent factor moment specifications,
//! Dirichlet priors, corpora and recovery results.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance distinguishing genuine rank deficiency from roundoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// How the columns of a topic matrix are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopicMode {
    /// No scaling convention.
    Raw,
    /// Every entry nonnegative and each column sums to one.
    ProbabilityColumns,
    /// Columns rescaled so the implied factor variances are one.
    Canonical,
}

/// The d x k conditional-mean matrix `O` with `E[x|h] = O h`.
///
/// Columns are topics (or component means). Construction checks that the
/// columns are linearly independent and records the extreme singular values.
#[derive(Debug, Clone)]
pub struct TopicMatrix {
    entries: DMatrix<f64>,
    mode: TopicMode,
    sigma_min: f64,
    sigma_max: f64,
}

impl TopicMatrix {
    /// Validates and wraps a d x k matrix. Fails with `RankDeficient` when
    /// `sigma_k / sigma_1 < rank_tol` and with `BadColumnNormalization` when
    /// `mode` is `ProbabilityColumns` but a column is not a distribution.
    pub fn new(entries: DMatrix<f64>, mode: TopicMode, rank_tol: f64) -> Result<Self> {
        let (d, k) = (entries.nrows(), entries.ncols());
        if d < k || k == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need d >= k >= 1, got d = {d}, k = {k}"
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite entry in topic matrix".into()));
        }
        if mode == TopicMode::ProbabilityColumns {
            for j in 0..k {
                let col = entries.column(j);
                if let Some(neg) = col.iter().find(|&&x| x < 0.0) {
                    return Err(Error::BadColumnNormalization {
                        col: j,
                        reason: format!("negative entry {neg}"),
                    });
                }
                let sum: f64 = col.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::BadColumnNormalization {
                        col: j,
                        reason: format!("column sum {sum} is not 1 within 1e-12"),
                    });
                }
            }
        }
        let svals = entries.clone().singular_values();
        let sigma_max = svals.max();
        let sigma_min = svals[k - 1].min(svals.min());
        if sigma_max == 0.0 || sigma_min / sigma_max < rank_tol {
            return Err(Error::RankDeficient {
                ratio: if sigma_max == 0.0 { 0.0 } else { sigma_min / sigma_max },
                tol: rank_tol,
            });
        }
        Ok(Self { entries, mode, sigma_min, sigma_max })
    }

    pub fn with_default_tol(entries: DMatrix<f64>, mode: TopicMode) -> Result<Self> {
        Self::new(entries, mode, DEFAULT_RANK_TOL)
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn k(&self) -> usize {
        self.entries.ncols()
    }

    pub fn mode(&self) -> TopicMode {
        self.mode
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.entries.column(j).into_owned()
    }

    pub fn columns_vec(&self) -> Vec<DVector<f64>> {
        (0..self.k()).map(|j| self.column(j)).collect()
    }

    /// Smallest singular value sigma_k(O).
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    /// Largest singular value sigma_1(O).
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// `O^+ = (O^T O)^{-1} O^T`.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        let gram = self.entries.transpose() * &self.entries;
        let inv = gram
            .try_inverse()
            .expect("Gram matrix invertible for a full-rank TopicMatrix");
        inv * self.entries.transpose()
    }

    /// Rescales columns by the factor standard deviations, `O diag(sigma_1, ..., sigma_k)`,
    /// so the implied factor variances are all one. Column signs are then fixed so the
    /// largest-magnitude entry of each column is positive.
    pub fn canonicalize(&self, factors: &FactorSpec) -> Result<TopicMatrix> {
        if factors.k() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "factor spec has k = {}, topic matrix has k = {}",
                factors.k(),
                self.k()
            )));
        }
        let mut entries = self.entries.clone();
        for (j, f) in factors.factors().iter().enumerate() {
            let scale = f.variance.sqrt();
            entries.column_mut(j).scale_mut(scale);
        }
        for j in 0..entries.ncols() {
            let mut col = entries.column_mut(j);
            orient_largest_positive(&mut col);
        }
        TopicMatrix::new(entries, TopicMode::Canonical, DEFAULT_RANK_TOL)
    }
}

/// Flips the vector in place so its largest-magnitude entry is positive.
pub fn orient_largest_positive(col: &mut nalgebra::DVectorViewMut<f64>) {
    let mut best = 0usize;
    for i in 1..col.len() {
        if col[i].abs() > col[best].abs() {
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.neg_mut();
    }
}

/// Owned-vector variant of [`orient_largest_positive`].
pub fn oriented(mut v: DVector<f64>) -> DVector<f64> {
    orient_largest_positive(&mut v.column_mut(0));
    v
}

/// Central moments of one latent factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorMoments {
    /// Variance, strictly positive.
    pub variance: f64,
    /// Third central moment.
    pub third_central: f64,
    /// Fourth central moment; must satisfy `mu4 >= variance^2`.
    pub fourth_central: f64,
}

/// Per-factor central moments (sigma_i^2, mu_{i,3}, mu_{i,4}) with derived
/// skewness and excess kurtosis, plus an optional factor mean vector.
#[derive(Debug, Clone)]
pub struct FactorSpec {
    factors: Vec<FactorMoments>,
    mean: Option<DVector<f64>>,
}

impl FactorSpec {
    pub fn new(factors: Vec<FactorMoments>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidParameter("factor spec needs k >= 1".into()));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.variance <= 0.0 || !f.variance.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "factor {i}: variance {} must be strictly positive",
                    f.variance
                )));
            }
            if !f.third_central.is_finite() || !f.fourth_central.is_finite() {
                return Err(Error::InvalidParameter(format!("factor {i}: non-finite moment")));
            }
            if f.fourth_central < f.variance * f.variance {
                return Err(Error::InvalidParameter(format!(
                    "factor {i}: mu4 = {} below variance^2 = {}",
                    f.fourth_central,
                    f.variance * f.variance
                )));
            }
        }
        Ok(Self { factors, mean: None })
    }

    pub fn with_mean(mut self, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, expected {}",
                mean.len(),
                self.k()
            )));
        }
        self.mean = Some(mean);
        Ok(self)
    }

    /// Unit-variance factors with Gaussian third and fourth moments.
    pub fn unit(k: usize) -> Self {
        Self {
            factors: vec![
                FactorMoments { variance: 1.0, third_central: 0.0, fourth_central: 3.0 };
                k
            ],
            mean: None,
        }
    }

    pub fn k(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[FactorMoments] {
        &self.factors
    }

    pub fn mean(&self) -> Option<&DVector<f64>> {
        self.mean.as_ref()
    }

    pub fn variances(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.factors.iter().map(|f| f.variance))
    }

    pub fn std_devs(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.factors.iter().map(|f| f.variance.sqrt()))
    }

    pub fn third_moments(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.factors.iter().map(|f| f.third_central))
    }

    pub fn fourth_moments(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), self.factors.iter().map(|f| f.fourth_central))
    }

    /// Skewness gamma_i = mu_{i,3} / sigma_i^3.
    pub fn skewness(&self, i: usize) -> f64 {
        let f = &self.factors[i];
        f.third_central / f.variance.powf(1.5)
    }

    pub fn skewnesses(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), (0..self.k()).map(|i| self.skewness(i)))
    }

    /// Excess kurtosis kappa_i = mu_{i,4} / sigma_i^4 - 3.
    pub fn excess_kurtosis(&self, i: usize) -> f64 {
        let f = &self.factors[i];
        f.fourth_central / (f.variance * f.variance) - 3.0
    }

    pub fn excess_kurtoses(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), (0..self.k()).map(|i| self.excess_kurtosis(i)))
    }
}

/// Dirichlet prior parameters: the pseudo-count vector alpha, its sum alpha0,
/// and quantities derived from the modified-moment analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidParameter("alpha must have k >= 1 entries".into()));
        }
        if alpha.iter().any(|&a| a <= 0.0 || !a.is_finite()) {
            return Err(Error::InvalidParameter("alpha entries must be finite and > 0".into()));
        }
        Ok(Self { alpha })
    }

    /// Homogeneous prior with every entry equal to `value`.
    pub fn uniform(k: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; k])
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.alpha)
    }

    pub fn alpha_slice(&self) -> &[f64] {
        &self.alpha
    }

    /// Sum of the pseudo-counts.
    pub fn alpha0(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// `min_i alpha_i / alpha0`; always in (0, 1/k].
    pub fn pmin(&self) -> f64 {
        let a0 = self.alpha0();
        self.alpha.iter().cloned().fold(f64::INFINITY, f64::min) / a0
    }

    /// Effective skewness of factor i under the modified moments:
    /// `2 sqrt(alpha0 (alpha0 + 1) / ((alpha0 + 2)^2 alpha_i))`.
    pub fn effective_skewness(&self, i: usize) -> f64 {
        let a0 = self.alpha0();
        2.0 * (a0 * (a0 + 1.0) / ((a0 + 2.0) * (a0 + 2.0) * self.alpha[i])).sqrt()
    }

    pub fn effective_skewnesses(&self) -> DVector<f64> {
        DVector::from_iterator(self.k(), (0..self.k()).map(|i| self.effective_skewness(i)))
    }

    /// Per-column scale `Z_i = sqrt(alpha_i / ((alpha0 + 1) alpha0))` converting
    /// probability columns to the canonical form implied by the modified moments.
    pub fn canonical_scales(&self) -> DVector<f64> {
        let a0 = self.alpha0();
        DVector::from_iterator(
            self.k(),
            self.alpha.iter().map(|&a| (a / ((a0 + 1.0) * a0)).sqrt()),
        )
    }

    /// Factor spec whose variances are the effective (modified-moment) variances
    /// `Z_i^2` and whose third moments reproduce the effective skewness. Useful for
    /// canonicalizing an LDA topic matrix.
    pub fn effective_factor_spec(&self) -> FactorSpec {
        let factors = (0..self.k())
            .map(|i| {
                let var = self.alpha[i] / ((self.alpha0() + 1.0) * self.alpha0());
                let sigma3 = var.powf(1.5);
                FactorMoments {
                    variance: var,
                    third_central: self.effective_skewness(i) * sigma3,
                    fourth_central: 3.0 * var * var,
                }
            })
            .collect();
        FactorSpec { factors, mean: None }
    }
}

/// One document as sparse token counts, with the ordered token stream kept
/// when it is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    counts: Vec<(u32, u32)>,
    tokens: Option<Vec<u32>>,
    total: u64,
}

impl Document {
    /// Builds a document from an ordered token stream.
    pub fn from_tokens(tokens: Vec<u32>) -> Self {
        let mut sorted = tokens.clone();
        sorted.sort_unstable();
        let mut counts: Vec<(u32, u32)> = Vec::new();
        for t in sorted {
            match counts.last_mut() {
                Some((id, c)) if *id == t => *c += 1,
                _ => counts.push((t, 1)),
            }
        }
        let total = tokens.len() as u64;
        Self { counts, tokens: Some(tokens), total }
    }

    /// Builds a document from (token id, count) pairs; counts must be >= 1.
    pub fn from_counts(pairs: Vec<(u32, u32)>) -> Result<Self> {
        if pairs.iter().any(|&(_, c)| c == 0) {
            return Err(Error::InvalidParameter("document counts must be >= 1".into()));
        }
        let mut counts = pairs;
        counts.sort_unstable_by_key(|&(id, _)| id);
        let mut merged: Vec<(u32, u32)> = Vec::with_capacity(counts.len());
        for (id, c) in counts {
            match merged.last_mut() {
                Some((mid, mc)) if *mid == id => *mc += c,
                _ => merged.push((id, c)),
            }
        }
        let total = merged.iter().map(|&(_, c)| c as u64).sum();
        Ok(Self { counts: merged, tokens: None, total })
    }

    pub fn counts(&self) -> &[(u32, u32)] {
        &self.counts
    }

    pub fn tokens(&self) -> Option<&[u32]> {
        self.tokens.as_deref()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    /// The first `n` tokens when ordered tokens are stored; otherwise the counts
    /// expanded in token-id order (a deterministic stand-in for count-only data).
    pub fn leading_tokens(&self, n: usize) -> Option<Vec<u32>> {
        if self.total < n as u64 {
            return None;
        }
        if let Some(toks) = &self.tokens {
            return Some(toks[..n].to_vec());
        }
        let mut out = Vec::with_capacity(n);
        'outer: for &(id, c) in &self.counts {
            for _ in 0..c {
                out.push(id);
                if out.len() == n {
                    break 'outer;
                }
            }
        }
        Some(out)
    }
}

/// A bag-of-words corpus over a vocabulary of size d.
#[derive(Debug, Clone)]
pub struct Corpus {
    d: usize,
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(d: usize, docs: Vec<Document>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("vocabulary size must be >= 1".into()));
        }
        for doc in &docs {
            if let Some(&(id, _)) = doc.counts().last() {
                if id as usize >= d {
                    return Err(Error::IndexOutOfRange {
                        what: "token id",
                        value: id as i64,
                        max: d,
                        line: 0,
                    });
                }
            }
        }
        Ok(Self { d, docs })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    /// Total tokens across all documents.
    pub fn total_tokens(&self) -> u64 {
        self.docs.iter().map(Document::total_tokens).sum()
    }
}

/// Status of a recovery run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RecoveryStatus {
    #[default]
    AllRecovered,
    NotAllRecovered,
    NotConverged,
}

/// Numerical diagnostics carried alongside recovered columns.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// `|W^T Pairs W - I|` recorded by the whitening step.
    pub whitening_residual: f64,
    /// Adjacent gaps of the singular values used for uniqueness decisions.
    pub singular_value_gaps: Vec<f64>,
    /// Columns dropped because their entry sum was degenerate (LDA path).
    pub dropped_columns: usize,
    /// Indices of columns whose rescaling denominator was too small to trust.
    pub unreliable_columns: Vec<usize>,
    /// Number of direction vectors drawn.
    pub theta_draws: usize,
    /// Documents skipped for not meeting the moment preconditions.
    pub skipped_documents: usize,
    pub status: RecoveryStatus,
}

/// Result of an ECA recovery: candidate columns of O, the singular values they
/// came from (sorted descending, paired with the columns), per-column skewness
/// and scale estimates, and the recovered Dirichlet parameters when available.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub columns: Vec<DVector<f64>>,
    pub singular_values: Vec<f64>,
    pub skewness_estimates: Vec<f64>,
    pub scale_estimates: Vec<f64>,
    pub alpha_hat: Option<DVector<f64>>,
    pub theta_used: DVector<f64>,
    pub diagnostics: Diagnostics,
}

impl RecoveryResult {
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Checks the structural invariants: columns finite, singular values sorted
    /// descending and paired with the columns.
    pub fn check_invariants(&self, k: usize) -> Result<()> {
        if self.columns.len() > k {
            return Err(Error::InvalidParameter(format!(
                "{} columns returned for k = {k}",
                self.columns.len()
            )));
        }
        if self.columns.len() != self.singular_values.len() {
            return Err(Error::InvalidParameter(
                "columns and singular values must pair up".into(),
            ));
        }
        for c in &self.columns {
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("non-finite recovered column".into()));
            }
        }
        for w in self.singular_values.windows(2) {
            if w[0] < w[1] {
                return Err(Error::InvalidParameter(
                    "singular values not sorted descending".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_probability_columns_accepted() {
        let o = TopicMatrix::new(DMatrix::identity(3, 3), TopicMode::ProbabilityColumns, 1e-10)
            .unwrap();
        assert_relative_eq!(o.sigma_min(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(o.sigma_max(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn duplicated_columns_rejected() {
        let m = DMatrix::from_columns(&[
            DVector::from_column_slice(&[0.5, 0.5, 0.0]),
            DVector::from_column_slice(&[0.5, 0.5, 0.0]),
        ]);
        match TopicMatrix::new(m, TopicMode::ProbabilityColumns, 1e-10) {
            Err(Error::RankDeficient { .. }) => {}
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn random_stochastic_matrix_sigma_matches_gram_eigen_oracle() {
        // Oracle: sigma_k via eigenvalues of the Gram matrix O^T O, an
        // independent algebraic route from the SVD used at construction.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (d, k) = (12, 4);
        let mut m = DMatrix::from_fn(d, k, |_, _| rng.gen::<f64>());
        for j in 0..k {
            let s: f64 = m.column(j).iter().sum();
            m.column_mut(j).scale_mut(1.0 / s);
        }
        let o = TopicMatrix::new(m.clone(), TopicMode::ProbabilityColumns, 1e-10).unwrap();
        assert!(o.sigma_min() > 0.0);
        let gram = m.transpose() * &m;
        let eig = nalgebra::SymmetricEigen::new(gram);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_eig = eig.eigenvalues.max();
        assert_relative_eq!(o.sigma_min(), min_eig.sqrt(), epsilon = 1e-10);
        assert_relative_eq!(o.sigma_max(), max_eig.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn column_sum_off_by_more_than_tolerance_rejected() {
        let m = DMatrix::from_columns(&[
            DVector::from_column_slice(&[0.6, 0.5]),
            DVector::from_column_slice(&[0.2, 0.8]),
        ]);
        match TopicMatrix::new(m, TopicMode::ProbabilityColumns, 1e-10) {
            Err(Error::BadColumnNormalization { col: 0, .. }) => {}
            other => panic!("expected BadColumnNormalization, got {other:?}"),
        }
    }

    #[test]
    fn canonicalize_identity_unit_variances() {
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::Raw, 1e-10).unwrap();
        let f = FactorSpec::unit(2);
        let c = o.canonicalize(&f).unwrap();
        assert_eq!(c.mode(), TopicMode::Canonical);
        assert_relative_eq!(c.entries(), &DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn canonicalize_diagonal_scaling() {
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::Raw, 1e-10).unwrap();
        let f = FactorSpec::new(vec![
            FactorMoments { variance: 4.0, third_central: 0.0, fourth_central: 48.0 },
            FactorMoments { variance: 9.0, third_central: 0.0, fourth_central: 243.0 },
        ])
        .unwrap();
        let c = o.canonicalize(&f).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]));
        assert_relative_eq!(c.entries(), &expected, epsilon = 1e-14);
    }

    #[test]
    fn canonicalize_lda_effective_scaling() {
        // For O = I_2, alpha = (1, 1): scale = sqrt(alpha_i / ((a0+1) a0)) = 1/sqrt(6).
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::ProbabilityColumns, 1e-10)
            .unwrap();
        let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let c = o.canonicalize(&p.effective_factor_spec()).unwrap();
        let s = 1.0 / 6.0_f64.sqrt();
        assert_relative_eq!(c.entries()[(0, 0)], s, epsilon = 1e-12);
        assert_relative_eq!(c.entries()[(1, 1)], s, epsilon = 1e-12);
        assert_relative_eq!(c.entries()[(0, 0)], 0.4082, epsilon = 5e-5);
    }

    #[test]
    fn canonicalize_idempotent_given_unit_variances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let m = DMatrix::from_fn(6, 3, |_, _| rng.gen::<f64>() - 0.3);
        let o = TopicMatrix::new(m, TopicMode::Raw, 1e-10).unwrap();
        let f = FactorSpec::new(vec![
            FactorMoments { variance: 2.0, third_central: 0.5, fourth_central: 20.0 };
            3
        ])
        .unwrap();
        let once = o.canonicalize(&f).unwrap();
        let twice = once.canonicalize(&FactorSpec::unit(3)).unwrap();
        assert_relative_eq!(once.entries(), twice.entries(), epsilon = 1e-14);
        // Same matrix up to column sign: singular values are preserved exactly.
        assert_relative_eq!(once.sigma_min(), twice.sigma_min(), epsilon = 1e-14);
        // sigma_k(canonicalize(O, f)) equals sigma_k(O diag(sigma)) computed directly.
        let mut scaled = o.entries().clone();
        for (j, fm) in f.factors().iter().enumerate() {
            scaled.column_mut(j).scale_mut(fm.variance.sqrt());
        }
        let direct = scaled.singular_values();
        assert_relative_eq!(once.sigma_min(), direct.min(), epsilon = 1e-12);
        assert_relative_eq!(once.sigma_max(), direct.max(), epsilon = 1e-12);
    }

    #[test]
    fn factor_spec_rejects_impossible_fourth_moment() {
        let err = FactorSpec::new(vec![FactorMoments {
            variance: 1.0,
            third_central: 0.0,
            fourth_central: 0.5,
        }]);
        assert!(err.is_err());
    }

    #[test]
    fn dirichlet_params_invariants() {
        let p = DirichletParams::new(vec![0.3, 0.7, 1.1, 0.9]).unwrap();
        assert_relative_eq!(p.alpha0(), 3.0, epsilon = 1e-12);
        assert_relative_eq!(p.pmin(), 0.1, epsilon = 1e-12);
        assert!(p.pmin() <= 1.0 / p.k() as f64 + 1e-15);
        // Effective skewness for alpha = (1,1): 2 sqrt(2*3 / (16*1)) = 1.2247...
        let q = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        assert_relative_eq!(q.effective_skewness(0), 1.224744871391589, epsilon = 1e-12);
        // Z_i for alpha = (1,1,1): sqrt(1/12).
        let r = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(r.canonical_scales()[0], (1.0f64 / 12.0).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn document_round_trips_counts_and_tokens() {
        let doc = Document::from_tokens(vec![2, 0, 2, 5]);
        assert_eq!(doc.total_tokens(), 4);
        assert_eq!(doc.counts(), &[(0, 1), (2, 2), (5, 1)]);
        assert_eq!(doc.leading_tokens(3).unwrap(), vec![2, 0, 2]);

        let from_counts = Document::from_counts(vec![(5, 1), (2, 2), (0, 1)]).unwrap();
        assert_eq!(from_counts.counts(), doc.counts());
        assert_eq!(from_counts.leading_tokens(3).unwrap(), vec![0, 2, 2]);
        assert!(from_counts.leading_tokens(5).is_none());
    }

    #[test]
    fn corpus_rejects_out_of_range_token() {
        let doc = Document::from_tokens(vec![0, 3]);
        assert!(Corpus::new(3, vec![doc]).is_err());
    }
}
