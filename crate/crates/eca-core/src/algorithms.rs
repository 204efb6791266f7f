//! The exact-moment recovery algorithms: two SVDs — whiten the pairwise
//! moment, then diagonalize a contracted higher-order moment — followed by
//! back-projection of the unique singular vectors.
//!
//! Every returned column is a true column (in canonical form) for any
//! projection direction; randomness of the direction only affects how many
//! columns come back. Running with several directions and keeping the union
//! of uniquely-flagged vectors therefore never fabricates columns.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{oriented, Diagnostics, RecoveryResult, RecoveryStatus};
use crate::moments::{
    modified_pairs, modified_triples_contract, MomentSet, PairsOperator, TriplesFn,
};
use crate::spectral::{
    randomized_range, unique_singular_vectors, unit_sphere_vector, whiten, WhiteningMap,
    DEFAULT_GAP_TOL,
};

/// Candidate vectors closer than this in absolute inner product are the same
/// column seen from two directions.
const DEDUP_DOT: f64 = 1.0 - 1e-6;
/// Condition-number ceiling for the projected cross moment `A Pairs12 B^T`.
const MULTIVIEW_COND_LIMIT: f64 = 1e10;
/// Fresh draws of the multi-view projections before giving up.
const MULTIVIEW_RETRIES: usize = 5;
/// A recovered LDA column is degenerate when its entry sum is below this
/// fraction of its l1 norm.
const COLUMN_SUM_TOL: f64 = 1e-8;

/// Options shared by the exact-moment algorithms.
#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Relative spectral-gap tolerance for the uniqueness decision.
    pub gap_tol: f64,
    /// Seed for the range finder and any extra direction draws.
    pub seed: u64,
    /// Extra directions to try when fewer than k unique vectors come back.
    pub theta_retries: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { gap_tol: DEFAULT_GAP_TOL, seed: 0, theta_retries: 5 }
    }
}

impl SpectralOptions {
    pub fn seeded(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }
}

// Seed substreams.
const STREAM_RANGE: u64 = 0x01;
const STREAM_THETA: u64 = 0x02;
const STREAM_AB: u64 = 0x03;

struct TwoSvdOutcome {
    w: WhiteningMap,
    /// (whitened singular vector, singular value), sorted descending.
    kept: Vec<(DVector<f64>, f64)>,
    theta_used: DVector<f64>,
    diagnostics: Diagnostics,
}

/// Shared driver: range finding, whitening, then repeated direction draws
/// collecting the union of uniquely-flagged singular vectors (deduplicated by
/// near-parallelism) until k are found or the retry budget is spent.
fn run_two_svd(
    pairs: &PairsOperator,
    k: usize,
    theta0: &DVector<f64>,
    opts: &SpectralOptions,
    mut operator: impl FnMut(&WhiteningMap, &DVector<f64>, &mut ChaCha8Rng) -> DMatrix<f64>,
) -> Result<TwoSvdOutcome> {
    let d = pairs.dim();
    if theta0.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "theta has length {}, expected k = {k}",
            theta0.len()
        )));
    }
    let action = |v: &DVector<f64>| pairs.apply(v);
    let u = randomized_range(&action, d, k, derive_seed(opts.seed, STREAM_RANGE))?;
    let w = whiten(pairs, &u)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_THETA));
    let mut kept: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut gaps = Vec::new();
    let mut draws = 0usize;
    for attempt in 0..=opts.theta_retries {
        let theta = if attempt == 0 { theta0.clone() } else { unit_sphere_vector(k, &mut rng) };
        draws += 1;
        let t_k = operator(&w, &theta, &mut rng);
        let ext = unique_singular_vectors(&t_k, opts.gap_tol);
        if attempt == 0 {
            gaps = ext.gaps();
        }
        for (i, vec) in ext.vectors.iter().enumerate() {
            if !ext.uniqueness[i] {
                continue;
            }
            let duplicate = kept.iter().any(|(v, _)| v.dot(vec).abs() > DEDUP_DOT);
            if !duplicate {
                kept.push((vec.clone(), ext.values[i]));
            }
        }
        if kept.len() >= k {
            break;
        }
    }
    kept.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite singular values"));
    kept.truncate(k);
    let status = if kept.len() == k {
        RecoveryStatus::AllRecovered
    } else {
        RecoveryStatus::NotAllRecovered
    };
    let diagnostics = Diagnostics {
        whitening_residual: w.residual(),
        singular_value_gaps: gaps,
        theta_draws: draws,
        status,
        ..Default::default()
    };
    Ok(TwoSvdOutcome { w, kept, theta_used: theta0.clone(), diagnostics })
}

fn whitened_triples_sandwich(
    moments: &MomentSet,
    w: &WhiteningMap,
    theta: &DVector<f64>,
) -> DMatrix<f64> {
    let eta = w.w() * theta;
    w.w().transpose() * moments.triples_contract(&eta) * w.w()
}

/// ECA for independent skewed factors: diagonalizes `W^T Triples(W theta) W`
/// and back-projects. Returns canonical-form columns; empty for symmetric
/// factors (never a wrong column).
///
/// Expects central moments ([`central_moment_set`](crate::moments::central_moment_set)
/// or [`central_from_raw`](crate::moments::central_from_raw) for raw corpus
/// accumulations).
pub fn eca_skew(
    moments: &MomentSet,
    k: usize,
    theta: &DVector<f64>,
    opts: &SpectralOptions,
) -> Result<RecoveryResult> {
    let outcome = run_two_svd(moments.pairs(), k, theta, opts, |w, th, _| {
        whitened_triples_sandwich(moments, w, th)
    })?;
    let mut columns = Vec::new();
    let mut values = Vec::new();
    let mut skew = Vec::new();
    for (lambda, sigma) in &outcome.kept {
        // The sign of lambda is tied to the sign of the column it produces;
        // fixing the column's orientation fixes the matched skewness too.
        let col = outcome.w.reconstruct(lambda);
        let flipped = oriented(col.clone());
        let lam = if (&flipped - &col).norm() > 0.0 { -lambda.clone() } else { lambda.clone() };
        columns.push(flipped);
        values.push(*sigma);
        skew.push(estimate_skewness(&outcome.w, moments, &lam));
    }
    Ok(RecoveryResult {
        columns,
        singular_values: values,
        skewness_estimates: skew,
        scale_estimates: Vec::new(),
        alpha_hat: None,
        theta_used: outcome.theta_used,
        diagnostics: outcome.diagnostics,
    })
}

/// ECA for independent kurtotic factors: as [`eca_skew`] but diagonalizing
/// `W^T Quad(W theta, W theta') W` over central moments. Exact when every
/// excess kurtosis is nonzero. The per-column diagnostics reported in
/// `skewness_estimates` are the analogous fourth-order functionals
/// `lambda^T W^T Quad(W lambda, W lambda) W lambda`.
pub fn eca_kurtosis(
    moments: &MomentSet,
    k: usize,
    theta: &DVector<f64>,
    theta2: &DVector<f64>,
    opts: &SpectralOptions,
) -> Result<RecoveryResult> {
    if !moments.has_quad() {
        return Err(Error::InvalidParameter(
            "moment set provides no fourth-moment contraction".into(),
        ));
    }
    if theta2.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "theta' has length {}, expected k = {k}",
            theta2.len()
        )));
    }
    let theta2 = theta2.clone();
    let theta0 = theta.clone();
    let outcome = run_two_svd(moments.pairs(), k, theta, opts, |w, th, rng| {
        let second = if *th == theta0 { theta2.clone() } else { unit_sphere_vector(k, rng) };
        let eta = w.w() * th;
        let eta2 = w.w() * second;
        let quad = moments.quad_contract(&eta, &eta2).expect("quad oracle checked above");
        w.w().transpose() * quad * w.w()
    })?;
    let mut columns = Vec::new();
    let mut values = Vec::new();
    let mut kurt = Vec::new();
    for (lambda, sigma) in &outcome.kept {
        columns.push(oriented(outcome.w.reconstruct(lambda)));
        values.push(*sigma);
        let eta = outcome.w.w() * lambda;
        let q = moments.quad_contract(&eta, &eta).expect("quad oracle checked above");
        let sandwiched = outcome.w.w().transpose() * q * outcome.w.w();
        kurt.push((lambda.transpose() * sandwiched * lambda)[(0, 0)]);
    }
    Ok(RecoveryResult {
        columns,
        singular_values: values,
        skewness_estimates: kurt,
        scale_estimates: Vec::new(),
        alpha_hat: None,
        theta_used: outcome.theta_used,
        diagnostics: outcome.diagnostics,
    })
}

/// ECA for latent Dirichlet allocation on raw (unmodified, non-central)
/// moments — exactly what corpus accumulation produces: builds the
/// alpha0-modified pairs and triples, runs the two-SVD pipeline, normalizes
/// each recovered column by its entry sum, and recovers alpha from the
/// modified pairs. Columns whose entry sum is degenerate are dropped and
/// counted, never guessed.
pub fn eca_lda(
    moments: &MomentSet,
    k: usize,
    alpha0: f64,
    theta: &DVector<f64>,
    opts: &SpectralOptions,
) -> Result<RecoveryResult> {
    let p_mod = modified_pairs(moments, alpha0)?;
    let pairs_op = PairsOperator::Dense(p_mod.clone());
    let outcome = run_two_svd(&pairs_op, k, theta, opts, |w, th, _| {
        let eta = w.w() * th;
        let t = modified_triples_contract(moments, alpha0, &eta)
            .expect("alpha0 validated by modified_pairs");
        w.w().transpose() * t * w.w()
    })?;

    let mut columns = Vec::new();
    let mut values = Vec::new();
    let mut skew = Vec::new();
    let mut scales = Vec::new();
    let mut dropped = 0usize;
    for (lambda, sigma) in &outcome.kept {
        let mut raw = outcome.w.reconstruct(lambda);
        let mut sum: f64 = raw.iter().sum();
        let l1: f64 = raw.iter().map(|x| x.abs()).sum();
        if sum.abs() <= COLUMN_SUM_TOL * l1 {
            dropped += 1;
            continue;
        }
        // Resolve the sign so the normalized column sums to +1; the matched
        // effective skewness shares lambda's sign.
        let mut lam = lambda.clone();
        if sum < 0.0 {
            raw.neg_mut();
            lam.neg_mut();
            sum = -sum;
        }
        columns.push(raw / sum);
        values.push(*sigma);
        let eta = outcome.w.w() * &lam;
        let t = modified_triples_contract(moments, alpha0, &eta)?;
        let sandwiched = outcome.w.w().transpose() * t * outcome.w.w();
        let gamma = (lam.transpose() * sandwiched * &lam)[(0, 0)];
        skew.push(gamma);
        scales.push(2.0 / ((alpha0 + 2.0) * gamma));
    }
    let alpha_hat =
        if columns.len() == k { Some(recover_alpha(&columns, &p_mod, alpha0)?) } else { None };
    let mut diagnostics = outcome.diagnostics;
    diagnostics.dropped_columns = dropped;
    if columns.len() < k {
        diagnostics.status = RecoveryStatus::NotAllRecovered;
    }
    Ok(RecoveryResult {
        columns,
        singular_values: values,
        skewness_estimates: skew,
        scale_estimates: scales,
        alpha_hat,
        theta_used: outcome.theta_used,
        diagnostics,
    })
}

/// Parameter recovery: `alpha = alpha0 (alpha0 + 1) O^+ Pairs_alpha0 (O^+)^T 1`.
pub fn recover_alpha(
    o_hat: &[DVector<f64>],
    pairs_alpha0: &DMatrix<f64>,
    alpha0: f64,
) -> Result<DVector<f64>> {
    if alpha0 < 0.0 {
        return Err(Error::NegativeAlpha0(alpha0));
    }
    let k = o_hat.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no recovered columns".into()));
    }
    let d = o_hat[0].len();
    if pairs_alpha0.nrows() != d || pairs_alpha0.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "pairs is {}x{}, columns have d = {d}",
            pairs_alpha0.nrows(),
            pairs_alpha0.ncols()
        )));
    }
    let o = DMatrix::from_columns(o_hat);
    let svd = o.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin / smax < crate::spectral::RANK_EPS {
        return Err(Error::RankDeficient {
            ratio: if smax > 0.0 { smin / smax } else { 0.0 },
            tol: crate::spectral::RANK_EPS,
        });
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut sinv = DMatrix::zeros(k, k);
    for i in 0..k {
        sinv[(i, i)] = 1.0 / svd.singular_values[i];
    }
    let pinv = vt.transpose() * sinv * u.transpose();
    let ones = DVector::from_element(k, 1.0);
    Ok(alpha0 * (alpha0 + 1.0) * (&pinv * pairs_alpha0 * pinv.transpose()) * ones)
}

/// The skewness of the factor matched to a recovered singular vector:
/// `lambda^T W^T Triples(W lambda) W lambda`.
pub fn estimate_skewness(w: &WhiteningMap, moments: &MomentSet, lambda: &DVector<f64>) -> f64 {
    let sandwiched = whitened_triples_sandwich(moments, w, lambda);
    (lambda.transpose() * sandwiched * lambda)[(0, 0)]
}

/// Cross moments of a three-view model: the pairwise blocks and the
/// `Triples_132` contraction (a d1 x d2 matrix per direction in view 3).
pub struct MultiViewMoments {
    pairs12: DMatrix<f64>,
    pairs31: DMatrix<f64>,
    pairs32: DMatrix<f64>,
    triples132: TriplesFn,
}

impl MultiViewMoments {
    pub fn new(
        pairs12: DMatrix<f64>,
        pairs31: DMatrix<f64>,
        pairs32: DMatrix<f64>,
        triples132: TriplesFn,
    ) -> Result<Self> {
        if pairs31.ncols() != pairs12.nrows()
            || pairs32.ncols() != pairs12.ncols()
            || pairs31.nrows() != pairs32.nrows()
        {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent view dimensions: pairs12 {}x{}, pairs31 {}x{}, pairs32 {}x{}",
                pairs12.nrows(),
                pairs12.ncols(),
                pairs31.nrows(),
                pairs31.ncols(),
                pairs32.nrows(),
                pairs32.ncols()
            )));
        }
        Ok(Self { pairs12, pairs31, pairs32, triples132 })
    }

    /// Closed-form moments for view matrices `o1, o2, o3` sharing independent
    /// factors with the given central moments.
    pub fn analytic(
        o1: &crate::model::TopicMatrix,
        o2: &crate::model::TopicMatrix,
        o3: &crate::model::TopicMatrix,
        factors: &crate::model::FactorSpec,
    ) -> Result<Self> {
        let k = factors.k();
        if o1.k() != k || o2.k() != k || o3.k() != k {
            return Err(Error::DimensionMismatch("views disagree on k".into()));
        }
        let var = factors.variances();
        let pairs12 = scale_columns(o1.entries(), &var) * o2.entries().transpose();
        let pairs31 = scale_columns(o3.entries(), &var) * o1.entries().transpose();
        let pairs32 = scale_columns(o3.entries(), &var) * o2.entries().transpose();
        let (m1, m2, m3) = (o1.entries().clone(), o2.entries().clone(), o3.entries().clone());
        let mu3 = factors.third_moments();
        let triples132: TriplesFn = std::sync::Arc::new(move |eta| {
            let proj = m3.transpose() * eta;
            let scale = proj.component_mul(&mu3);
            scale_columns(&m1, &scale) * m2.transpose()
        });
        Self::new(pairs12, pairs31, pairs32, triples132)
    }

    pub fn d1(&self) -> usize {
        self.pairs12.nrows()
    }

    pub fn d2(&self) -> usize {
        self.pairs12.ncols()
    }

    pub fn d3(&self) -> usize {
        self.pairs31.nrows()
    }

    pub fn pairs12(&self) -> &DMatrix<f64> {
        &self.pairs12
    }

    pub fn pairs31(&self) -> &DMatrix<f64> {
        &self.pairs31
    }

    pub fn pairs32(&self) -> &DMatrix<f64> {
        &self.pairs32
    }

    /// The cross moment between views `v` and `vp`; reversed orders are the
    /// transposes of the stored blocks.
    pub fn pairs(&self, v: usize, vp: usize) -> Result<DMatrix<f64>> {
        match (v, vp) {
            (1, 2) => Ok(self.pairs12.clone()),
            (2, 1) => Ok(self.pairs12.transpose()),
            (3, 1) => Ok(self.pairs31.clone()),
            (1, 3) => Ok(self.pairs31.transpose()),
            (3, 2) => Ok(self.pairs32.clone()),
            (2, 3) => Ok(self.pairs32.transpose()),
            _ => Err(Error::InvalidParameter(format!("no pairs block for views ({v}, {vp})"))),
        }
    }

    pub fn triples132_contract(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        (self.triples132)(eta)
    }
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, &v) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(v);
    }
    out
}

/// Draws projections `A` (k x d1) and `B` (k x d2) with `A Pairs12 B^T`
/// invertible almost surely, by sketching the cross moment with standard
/// normal matrices and orthonormalizing. Redraws until the product is well
/// conditioned.
pub fn find_projectors_ab(
    pairs12: &DMatrix<f64>,
    pairs21: &DMatrix<f64>,
    k: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (d1, d2) = (pairs12.nrows(), pairs12.ncols());
    if pairs21.nrows() != d2 || pairs21.ncols() != d1 {
        return Err(Error::DimensionMismatch(format!(
            "pairs21 is {}x{}, expected {}x{}",
            pairs21.nrows(),
            pairs21.ncols(),
            d2,
            d1
        )));
    }
    for attempt in 0..MULTIVIEW_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_AB + attempt as u64));
        let theta = crate::spectral::standard_normal_matrix(d2, k, &mut rng);
        let theta2 = crate::spectral::standard_normal_matrix(d1, k, &mut rng);
        let a_sketch = pairs12 * theta;
        let b_sketch = pairs21 * theta2;
        let (a, b) = match (orth_or_none(&a_sketch, k), orth_or_none(&b_sketch, k)) {
            (Some(a), Some(b)) => (a.transpose(), b.transpose()),
            _ => continue,
        };
        let product = &a * pairs12 * b.transpose();
        let svals = product.singular_values();
        let (smax, smin) = (svals.max(), svals.min());
        if smin > 0.0 && smax / smin <= MULTIVIEW_COND_LIMIT {
            return Ok((a, b));
        }
    }
    Err(Error::SingularProjection { retries: MULTIVIEW_RETRIES })
}

fn orth_or_none(m: &DMatrix<f64>, k: usize) -> Option<DMatrix<f64>> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
    let smax = svd.singular_values[order[0]];
    if smax <= 0.0 {
        return None;
    }
    let rank =
        svd.singular_values.iter().filter(|&&s| s > crate::spectral::RANK_EPS * smax).count();
    if rank < k {
        return None;
    }
    let cols: Vec<DVector<f64>> = order[..k].iter().map(|&i| u.column(i).into_owned()).collect();
    Some(DMatrix::from_columns(&cols))
}

/// Symmetrization: reduces the three-view moments to single-view moments of
/// view 3 through the projected blocks,
/// `Pairs_3 = (P31 A^T) (A P12 B^T)^{-T} (P32 B^T)^T`,
/// `Triples_3(eta) = (P32 B^T) (A P12 B^T)^{-1} A T132(eta) B^T (A P12 B^T)^{-1} (P31 A^T)^T`,
/// which equal `O3 diag(sigma^2) O3^T` and `O3 diag(O3^T eta) diag(mu3) O3^T`.
pub fn multiview_symmetrize(
    mv: &MultiViewMoments,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<MomentSet> {
    let p12t = a * mv.pairs12() * b.transpose();
    let svals = p12t.singular_values();
    if svals.min() <= 0.0 || svals.max() / svals.min() > MULTIVIEW_COND_LIMIT {
        return Err(Error::SingularProjection { retries: 0 });
    }
    let inv = p12t.clone().try_inverse().ok_or(Error::SingularProjection { retries: 0 })?;
    let p31t = mv.pairs31() * a.transpose();
    let p32t = mv.pairs32() * b.transpose();
    let pairs3 = &p31t * inv.transpose() * p32t.transpose();
    let left = &p32t * &inv;
    let right = &inv * p31t.transpose();
    let (a_c, b_c) = (a.clone(), b.clone());
    let inner = std::sync::Arc::clone(&mv.triples132);
    let triples: TriplesFn =
        std::sync::Arc::new(move |eta| &left * (&a_c * inner(eta) * b_c.transpose()) * &right);
    MomentSet::analytic(DVector::zeros(mv.d3()), pairs3, triples, None)
}

/// ECA for the multi-view model: project views 1 and 2, symmetrize down to
/// view 3, then run the skewness-based recovery. Returns canonical columns of
/// `O_3`.
pub fn eca_multiview(
    mv: &MultiViewMoments,
    k: usize,
    theta: &DVector<f64>,
    opts: &SpectralOptions,
) -> Result<RecoveryResult> {
    let pairs21 = mv.pairs12().transpose();
    let (a, b) = find_projectors_ab(mv.pairs12(), &pairs21, k, opts.seed)?;
    let single_view = multiview_symmetrize(mv, &a, &b)?;
    eca_skew(&single_view, k, theta, opts)
}
