//! The sampled-data LDA path: empirical moments, truncated whitening, a
//! dense or power-iteration SVD of the whitened modified third moment, and
//! the per-column rescaling `O_i = (W^+)^T v_i / Z_i` with
//! `Z_i = 2 / ((alpha0 + 2) (W v_i)^T Triples_a0(W v_i) W v_i)`.
//!
//! Two passes over the data: the first builds the pairs moment and the
//! whitener, the second accumulates the whitened k x k x k third-moment
//! statistics. Nothing of size d^2 x d is ever formed, and with the
//! document-backed pairs operator nothing of size d^2 either.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{Corpus, Diagnostics, RecoveryResult, RecoveryStatus};
use crate::moments::{
    accumulate, EstimatorMode, MomentOptions, MomentSet, DEFAULT_DENSE_PAIRS_CAP,
};
use crate::spectral::{
    power_iteration_svd, truncated_whiten, truncated_whiten_action, unique_singular_vectors,
    unit_sphere_vector, ExtractionStatus, SvdExtraction, WhiteningMap, DEFAULT_GAP_TOL,
};

/// Which SVD backs the second factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvdMethod {
    /// Dense SVD of the k x k contracted operator (default; k is small).
    Dense,
    /// Simultaneous power iteration on the operator action, matrix-free.
    PowerIteration,
}

/// Options for [`fit_lda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub k: usize,
    pub alpha0: f64,
    pub seed: u64,
    pub svd_method: SvdMethod,
    pub theta_retries: usize,
    pub clip_normalize: bool,
    pub clip_fraction: f64,
    pub max_iter: usize,
    pub conv_tol: f64,
    pub estimator_mode: EstimatorMode,
    pub gap_tol: f64,
    pub dense_pairs_cap: usize,
}

impl FitOptions {
    pub fn new(k: usize, alpha0: f64) -> Self {
        Self {
            k,
            alpha0,
            seed: 0,
            svd_method: SvdMethod::Dense,
            theta_retries: 5,
            clip_normalize: false,
            clip_fraction: 0.01,
            max_iter: 200,
            conv_tol: 1e-10,
            estimator_mode: EstimatorMode::AllDistinctTriples,
            gap_tol: DEFAULT_GAP_TOL,
            dense_pairs_cap: DEFAULT_DENSE_PAIRS_CAP,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if self.alpha0 < 0.0 {
            return Err(Error::NegativeAlpha0(self.alpha0));
        }
        if !(0.0..1.0).contains(&self.clip_fraction) {
            return Err(Error::InvalidParameter(format!(
                "clip_fraction {} outside [0, 1)",
                self.clip_fraction
            )));
        }
        Ok(())
    }

    fn moment_options(&self) -> MomentOptions {
        MomentOptions {
            estimator_mode: self.estimator_mode,
            need_fourth: false,
            dense_pairs_cap: self.dense_pairs_cap,
        }
    }
}

/// The whitened modified third moment: the k slices of the whitened raw
/// tensor plus the low-order corrections, evaluable for any direction without
/// touching the documents again.
pub struct WhitenedLdaOperator {
    raw_slices: Vec<DMatrix<f64>>,
    pairs_tilde: DMatrix<f64>,
    mean_tilde: DVector<f64>,
    alpha0: f64,
}

impl WhitenedLdaOperator {
    pub fn build(moments: &MomentSet, w: &WhiteningMap, alpha0: f64) -> Self {
        let raw_slices = moments.whitened_triples(w.w());
        let pairs_tilde = w.w().transpose() * moments.pairs().apply_matrix(w.w());
        let mean_tilde = w.w().transpose() * moments.mean();
        Self { raw_slices, pairs_tilde, mean_tilde, alpha0 }
    }

    pub fn k(&self) -> usize {
        self.mean_tilde.len()
    }

    /// `W^T Triples_a0(W theta) W`.
    pub fn contract(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let mut out = DMatrix::zeros(k, k);
        for (j, slice) in self.raw_slices.iter().enumerate() {
            out += slice * theta[j];
        }
        let a0 = self.alpha0;
        let c1 = a0 / (a0 + 2.0);
        let c2 = 2.0 * a0 * a0 / ((a0 + 2.0) * (a0 + 1.0));
        let p_theta = &self.pairs_tilde * theta;
        let tm = theta.dot(&self.mean_tilde);
        out -= c1
            * (&p_theta * self.mean_tilde.transpose()
                + &self.mean_tilde * p_theta.transpose()
                + tm * &self.pairs_tilde);
        out += c2 * tm * &self.mean_tilde * self.mean_tilde.transpose();
        out
    }

    /// The tensor power map `v -> [W^T Triples_a0(W v) W] v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.contract(v) * v
    }

    /// The cubic form `(W v)^T Triples_a0(W v) W v`.
    pub fn cubic(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * self.contract(v) * v)[(0, 0)]
    }
}

/// Fits LDA topics to a corpus: accumulate empirical moments, then run the
/// moment pipeline. All randomness derives from `opts.seed`. With the
/// power-iteration method no projection direction exists and `theta_used`
/// comes back zero.
pub fn fit_lda(corpus: &Corpus, opts: &FitOptions) -> Result<RecoveryResult> {
    opts.validate()?;
    if corpus.d() < opts.k {
        return Err(Error::DimensionMismatch(format!(
            "d = {} below k = {}",
            corpus.d(),
            opts.k
        )));
    }
    let acc = accumulate(corpus, &opts.moment_options())?;
    let skipped = acc.skipped_docs();
    let moments = acc.finalize()?;
    let mut result = fit_lda_from_moments(&moments, opts)?;
    result.diagnostics.skipped_documents = skipped;
    Ok(result)
}

/// The moment-space pipeline behind [`fit_lda`]; feeding analytic moments
/// through here reproduces the exact-moment algorithm to rounding error.
pub fn fit_lda_from_moments(moments: &MomentSet, opts: &FitOptions) -> Result<RecoveryResult> {
    opts.validate()?;
    let k = opts.k;
    let a0 = opts.alpha0;
    let mean = moments.mean().clone();

    // Whitener of the modified pairs, dense or sketched.
    let w = match moments.pairs_dense() {
        Some(p) => {
            let modified = p - (a0 / (a0 + 1.0)) * &mean * mean.transpose();
            truncated_whiten(&modified, k)?
        }
        None => {
            let coeff = a0 / (a0 + 1.0);
            let action = |v: &DVector<f64>| {
                moments.pairs().apply(v) - coeff * &mean * mean.dot(v)
            };
            truncated_whiten_action(
                &action,
                moments.dim(),
                k,
                derive_seed(opts.seed, 0x10),
            )?
        }
    };

    let op = WhitenedLdaOperator::build(moments, &w, a0);

    let (extraction, theta_used) = match opts.svd_method {
        SvdMethod::Dense => extract_dense(&op, k, opts)?,
        SvdMethod::PowerIteration => {
            let action = |v: &DVector<f64>| op.apply(v);
            let ext = power_iteration_svd(
                &action,
                k,
                derive_seed(opts.seed, 0x11),
                opts.max_iter,
                opts.conv_tol,
                opts.gap_tol,
            );
            (ext, DVector::zeros(k))
        }
    };

    // Keep the uniquely determined vectors on the dense path; the power
    // iteration determines its basis jointly, so take it whole when it
    // converged.
    let take_all = matches!(opts.svd_method, SvdMethod::PowerIteration)
        && matches!(extraction.status, ExtractionStatus::Converged { .. });
    let mut columns = Vec::new();
    let mut values = Vec::new();
    let mut gammas = Vec::new();
    let mut scales = Vec::new();
    let mut unreliable = Vec::new();
    for (i, v) in extraction.vectors.iter().enumerate() {
        if !take_all && !extraction.uniqueness[i] {
            continue;
        }
        let mut vec = v.clone();
        let mut gamma = op.cubic(&vec);
        if gamma < 0.0 {
            // sign of v is free; pick the orientation with positive cubic
            vec.neg_mut();
            gamma = -gamma;
        }
        let denom = (a0 + 2.0) * gamma;
        let raw = w.reconstruct(&vec);
        if denom.abs() <= 1e-12 {
            unreliable.push(columns.len());
            columns.push(raw);
            values.push(extraction.values[i]);
            gammas.push(gamma);
            scales.push(f64::INFINITY);
            continue;
        }
        let z = 2.0 / denom;
        columns.push(raw / z);
        values.push(extraction.values[i]);
        gammas.push(gamma);
        scales.push(z);
    }

    // alpha recovery sees the unclipped columns; clipping is an output
    // transformation for l1 robustness, not a better estimate of O.
    let alpha_hat = if columns.len() == k && unreliable.is_empty() {
        let coeff = a0 / (a0 + 1.0);
        let modified_action = |v: &DVector<f64>| {
            moments.pairs().apply(v) - coeff * &mean * mean.dot(v)
        };
        Some(recover_alpha_action(&columns, &modified_action, a0)?)
    } else {
        None
    };

    if opts.clip_normalize {
        for (i, col) in columns.iter_mut().enumerate() {
            if unreliable.contains(&i) {
                continue;
            }
            *col = clip_normalize(col, opts.clip_fraction)?;
        }
    }

    let status = match extraction.status {
        ExtractionStatus::NotConverged { .. } => RecoveryStatus::NotConverged,
        _ if columns.len() < k => RecoveryStatus::NotAllRecovered,
        _ => RecoveryStatus::AllRecovered,
    };
    let diagnostics = Diagnostics {
        whitening_residual: w.residual(),
        singular_value_gaps: extraction.gaps(),
        dropped_columns: 0,
        unreliable_columns: unreliable,
        theta_draws: if matches!(opts.svd_method, SvdMethod::Dense) {
            opts.theta_retries + 1
        } else {
            0
        },
        skipped_documents: 0,
        status,
    };
    Ok(RecoveryResult {
        columns,
        singular_values: values,
        skewness_estimates: gammas,
        scale_estimates: scales,
        alpha_hat,
        theta_used,
        diagnostics,
    })
}

/// Dense-SVD extraction with direction retries: every direction in the budget
/// is evaluated and the extraction with the most unique vectors wins, ties
/// broken by the largest relative spectral gap. On sampled moments the gap
/// controls how far the vectors rotate, so the best-separated direction is
/// the accurate one.
fn extract_dense(
    op: &WhitenedLdaOperator,
    k: usize,
    opts: &FitOptions,
) -> Result<(SvdExtraction, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 0x12));
    let mut best: Option<(SvdExtraction, DVector<f64>, usize, f64)> = None;
    for _ in 0..=opts.theta_retries {
        let theta = unit_sphere_vector(k, &mut rng);
        let ext = unique_singular_vectors(&op.contract(&theta), opts.gap_tol);
        let unique = ext.unique_count();
        let gap = ext.min_relative_gap();
        let better = match &best {
            None => true,
            Some((_, _, bu, bg)) => unique > *bu || (unique == *bu && gap > *bg),
        };
        if better {
            best = Some((ext, theta, unique, gap));
        }
    }
    let (ext, theta, _, _) = best.expect("at least one direction drawn");
    Ok((ext, theta))
}

/// alpha recovery against a pairs operator given by action only.
fn recover_alpha_action(
    o_hat: &[DVector<f64>],
    pairs_action: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    alpha0: f64,
) -> Result<DVector<f64>> {
    let d = o_hat[0].len();
    let k = o_hat.len();
    // Materialize only the k columns P (O^+)^T actually needed.
    let o = DMatrix::from_columns(o_hat);
    let gram = o.transpose() * &o;
    let inv = gram.try_inverse().ok_or(Error::RankDeficient {
        ratio: 0.0,
        tol: crate::spectral::RANK_EPS,
    })?;
    let pinv_t = &o * inv.transpose(); // (O^+)^T, d x k
    let mut p_pinv_t = DMatrix::zeros(d, k);
    for j in 0..k {
        p_pinv_t.set_column(j, &pairs_action(&pinv_t.column(j).into_owned()));
    }
    let small = pinv_t.transpose() * p_pinv_t; // O^+ P (O^+)^T, k x k
    let ones = DVector::from_element(k, 1.0);
    Ok(alpha0 * (alpha0 + 1.0) * small * ones)
}

/// Clip-then-normalize: zeroes the smallest-magnitude entries while at most
/// `clip_fraction` of the total l1 mass is removed, zeroes any remaining
/// negatives, and l1-normalizes onto the probability simplex.
pub fn clip_normalize(column: &DVector<f64>, clip_fraction: f64) -> Result<DVector<f64>> {
    if !(0.0..1.0).contains(&clip_fraction) {
        return Err(Error::InvalidParameter(format!(
            "clip_fraction {clip_fraction} outside [0, 1)"
        )));
    }
    if column.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite column entry".into()));
    }
    let total: f64 = column.iter().map(|x| x.abs()).sum();
    if total <= 0.0 {
        return Err(Error::AllZeroAfterClip);
    }
    let budget = clip_fraction * total;
    let mut order: Vec<usize> = (0..column.len()).collect();
    order.sort_by(|&a, &b| {
        column[a].abs().partial_cmp(&column[b].abs()).expect("finite entries").then(a.cmp(&b))
    });
    let mut out = column.clone();
    let mut removed = 0.0;
    for idx in order {
        let mass = column[idx].abs();
        if removed + mass <= budget {
            out[idx] = 0.0;
            removed += mass;
        } else {
            break;
        }
    }
    for x in out.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let sum: f64 = out.iter().sum();
    if sum <= 0.0 {
        return Err(Error::AllZeroAfterClip);
    }
    Ok(out / sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DirichletParams, TopicMatrix, TopicMode};
    use crate::moments::lda_raw_moment_set;
    use crate::synthetic::{concentrated_topics, generate_lda_corpus, random_probability_topics};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn aligned_error(truth: &TopicMatrix, recovered: &[DVector<f64>]) -> f64 {
        // max over recovered columns of the distance to the closest truth column
        let mut worst: f64 = 0.0;
        for col in recovered {
            let best = (0..truth.k())
                .map(|j| (col - truth.column(j)).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        worst
    }

    #[test]
    fn exact_moment_injection_matches_eca_lda() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let o = random_probability_topics(20, 4, 0.02, &mut rng).unwrap();
        let p = DirichletParams::new(vec![0.3, 0.7, 1.1, 0.9]).unwrap();
        let ms = lda_raw_moment_set(&o, &p).unwrap();
        let opts = FitOptions::new(4, p.alpha0()).with_seed(7);
        let fit = fit_lda_from_moments(&ms, &opts).unwrap();
        assert_eq!(fit.n_columns(), 4);
        assert!(aligned_error(&o, &fit.columns) <= 1e-8, "pipeline not exact");

        let theta = unit_sphere_vector(4, &mut rng);
        let exact = crate::algorithms::eca_lda(
            &ms,
            4,
            p.alpha0(),
            &theta,
            &crate::algorithms::SpectralOptions::seeded(7),
        )
        .unwrap();
        assert!(aligned_error(&o, &exact.columns) <= 1e-8);
        // both land on the true columns, hence on each other
        for col in &fit.columns {
            let best = exact
                .columns
                .iter()
                .map(|c| (col - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-8);
        }

        // Z_i identity on analytic moments
        let mut zs: Vec<f64> = fit.scale_estimates.clone();
        zs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<f64> = p.canonical_scales().iter().cloned().collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (z, w) in zs.iter().zip(&want) {
            assert_relative_eq!(*z, *w, epsilon = 1e-8);
        }

        // alpha recovery through the pipeline
        let ah = fit.alpha_hat.as_ref().unwrap();
        let mut got: Vec<f64> = ah.iter().cloned().collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (g, w) in got.iter().zip(&[0.3, 0.7, 0.9, 1.1]) {
            assert_relative_eq!(*g, *w, epsilon = 1e-8);
        }
    }

    #[test]
    fn z_identity_uniform_prior() {
        let o = TopicMatrix::new(DMatrix::identity(3, 3), TopicMode::ProbabilityColumns, 1e-10)
            .unwrap();
        let p = DirichletParams::new(vec![1.0, 1.0, 1.0]).unwrap();
        let ms = lda_raw_moment_set(&o, &p).unwrap();
        let fit = fit_lda_from_moments(&ms, &FitOptions::new(3, 3.0).with_seed(1)).unwrap();
        let expected = (1.0f64 / 12.0).sqrt();
        for z in &fit.scale_estimates {
            assert_relative_eq!(*z, expected, epsilon = 1e-10);
        }
        assert_relative_eq!(expected, 0.2887, epsilon = 5e-5);
    }

    #[test]
    fn power_iteration_parity_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let o = random_probability_topics(15, 4, 0.02, &mut rng).unwrap();
        let p = DirichletParams::new(vec![0.4, 0.9, 1.3, 0.6]).unwrap();
        let ms = lda_raw_moment_set(&o, &p).unwrap();
        let dense = fit_lda_from_moments(&ms, &FitOptions::new(4, p.alpha0()).with_seed(3))
            .unwrap();
        let mut popts = FitOptions::new(4, p.alpha0()).with_seed(3);
        popts.svd_method = SvdMethod::PowerIteration;
        popts.max_iter = 500;
        popts.conv_tol = 1e-13;
        let power = fit_lda_from_moments(&ms, &popts).unwrap();
        assert_eq!(power.n_columns(), 4);
        for col in &power.columns {
            let best = dense
                .columns
                .iter()
                .map(|c| (col - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 1e-6, "power-iteration column off by {best}");
        }
    }

    #[test]
    fn k_equals_one_returns_word_frequencies() {
        // Single topic: the lone probability column is the word marginal.
        let o = concentrated_topics(6, 1, 0.5).unwrap();
        let w = o.column(0);
        let st = crate::moments::single_topic_moment_set(
            &o,
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        let fit = fit_lda_from_moments(&st, &FitOptions::new(1, 0.0).with_seed(5)).unwrap();
        assert_eq!(fit.n_columns(), 1);
        assert!((fit.columns[0].clone() - &w).norm() <= 1e-10);

        // sampled corpus: recovered topic approximates the empirical frequency
        let prior = DirichletParams::new(vec![1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let corpus = generate_lda_corpus(&o, &prior, 20_000, 3, &mut rng).unwrap();
        let fit = fit_lda(&corpus, &FitOptions::new(1, 0.0).with_seed(6)).unwrap();
        let mut freq = DVector::zeros(6);
        let mut total = 0.0;
        for doc in corpus.docs() {
            for &(id, c) in doc.counts() {
                freq[id as usize] += c as f64;
                total += c as f64;
            }
        }
        freq /= total;
        assert!((fit.columns[0].clone() - freq).norm() <= 0.02);
    }

    #[test]
    fn sampled_identity_topics_within_budget() {
        // O = I_5, alpha = 1^5, 1e5 docs of 3 tokens: within 0.1 aligned error.
        // The uniform prior ties every effective skewness, which makes the
        // single-direction SVD gap-fragile; the power iteration resolves the
        // basis jointly and is the robust choice on this instance.
        let o = TopicMatrix::new(DMatrix::identity(5, 5), TopicMode::ProbabilityColumns, 1e-10)
            .unwrap();
        let p = DirichletParams::new(vec![1.0; 5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let corpus = generate_lda_corpus(&o, &p, 100_000, 3, &mut rng).unwrap();
        let mut opts = FitOptions::new(5, 5.0).with_seed(52);
        opts.svd_method = SvdMethod::PowerIteration;
        opts.max_iter = 500;
        opts.conv_tol = 1e-12;
        let fit = fit_lda(&corpus, &opts).unwrap();
        assert_eq!(fit.n_columns(), 5, "status {:?}", fit.diagnostics.status);
        let err = aligned_error(&o, &fit.columns);
        assert!(err <= 0.1, "aligned error {err}");
    }

    #[test]
    fn determinism_same_inputs_same_bytes() {
        let o = concentrated_topics(12, 3, 0.8).unwrap();
        let p = DirichletParams::new(vec![0.4, 0.4, 0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let corpus = generate_lda_corpus(&o, &p, 2_000, 4, &mut rng).unwrap();
        let opts = FitOptions::new(3, p.alpha0()).with_seed(11);
        let a = fit_lda(&corpus, &opts).unwrap();
        let b = fit_lda(&corpus, &opts).unwrap();
        assert_eq!(format!("{:?}", a.columns), format!("{:?}", b.columns));
        assert_eq!(format!("{:?}", a.singular_values), format!("{:?}", b.singular_values));
        assert_eq!(format!("{:?}", a.scale_estimates), format!("{:?}", b.scale_estimates));
    }

    #[test]
    fn clip_normalize_examples() {
        let keep = clip_normalize(&DVector::from_column_slice(&[0.5, 0.5, 0.0]), 0.0).unwrap();
        assert_relative_eq!(keep, DVector::from_column_slice(&[0.5, 0.5, 0.0]), epsilon = 0.0);

        let negs = clip_normalize(&DVector::from_column_slice(&[0.7, 0.35, -0.05]), 0.0).unwrap();
        assert_relative_eq!(
            negs,
            DVector::from_column_slice(&[2.0 / 3.0, 1.0 / 3.0, 0.0]),
            epsilon = 1e-15
        );

        match clip_normalize(&DVector::from_column_slice(&[-0.2, -0.8]), 0.0) {
            Err(Error::AllZeroAfterClip) => {}
            other => panic!("expected AllZeroAfterClip, got {other:?}"),
        }

        // mass-budgeted clipping removes the smallest entries first
        let clipped =
            clip_normalize(&DVector::from_column_slice(&[0.02, 0.08, 0.9]), 0.05).unwrap();
        assert_eq!(clipped[0], 0.0);
        assert!(clipped[1] > 0.0);
        assert_relative_eq!(clipped.sum(), 1.0, epsilon = 1e-12);

        // clipped output always lands on the simplex
        let on_simplex =
            clip_normalize(&DVector::from_column_slice(&[0.3, -0.1, 0.5, 0.01]), 0.02).unwrap();
        assert!(on_simplex.iter().all(|&x| x >= 0.0));
        assert_relative_eq!(on_simplex.sum(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn clip_normalize_applied_in_pipeline() {
        let o = concentrated_topics(10, 2, 0.85).unwrap();
        let p = DirichletParams::new(vec![0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let corpus = generate_lda_corpus(&o, &p, 30_000, 3, &mut rng).unwrap();
        let mut opts = FitOptions::new(2, 1.0).with_seed(8);
        opts.clip_normalize = true;
        opts.clip_fraction = 0.01;
        let fit = fit_lda(&corpus, &opts).unwrap();
        for col in &fit.columns {
            assert!(col.iter().all(|&x| x >= 0.0));
            assert_relative_eq!(col.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn doc_backed_large_d_path_agrees_with_dense() {
        let o = concentrated_topics(40, 3, 0.8).unwrap();
        let p = DirichletParams::new(vec![0.5, 0.7, 0.9]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let corpus = generate_lda_corpus(&o, &p, 20_000, 3, &mut rng).unwrap();
        let dense_opts = FitOptions::new(3, p.alpha0()).with_seed(10);
        let mut backed_opts = dense_opts.clone();
        backed_opts.dense_pairs_cap = 8; // force the action-backed representation
        let dense = fit_lda(&corpus, &dense_opts).unwrap();
        let backed = fit_lda(&corpus, &backed_opts).unwrap();
        assert_eq!(dense.n_columns(), backed.n_columns());
        // The sketched whitener only matches the dense one up to the sketch
        // accuracy on a full-rank empirical matrix, so compare both paths to
        // the truth at the statistical budget and to each other loosely.
        assert!(aligned_error(&o, &dense.columns) <= 0.08);
        assert!(aligned_error(&o, &backed.columns) <= 0.08);
        for col in &backed.columns {
            let best = dense
                .columns
                .iter()
                .map(|c| (col - c).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best <= 0.02, "doc-backed column off by {best}");
        }
    }

    #[test]
    fn insufficient_rank_detected() {
        // rank-1 moment set cannot support k = 2
        let o = concentrated_topics(6, 1, 0.5).unwrap();
        let st =
            crate::moments::single_topic_moment_set(&o, &DVector::from_element(1, 1.0)).unwrap();
        match fit_lda_from_moments(&st, &FitOptions::new(2, 0.0)) {
            Err(Error::InsufficientRank { k: 2, .. }) => {}
            other => panic!("expected InsufficientRank, got {other:?}"),
        }
    }

    #[test]
    fn fit_options_round_trip_serde() {
        let mut opts = FitOptions::new(7, 0.5).with_seed(123);
        opts.svd_method = SvdMethod::PowerIteration;
        opts.estimator_mode = EstimatorMode::FirstThreeTokens;
        let json = serde_json::to_string(&opts).unwrap();
        let back: FitOptions = serde_json::from_str(&json).unwrap();
        assert_eq!(opts, back);
    }

    #[test]
    fn zero_skewness_directions_flagged_unreliable() {
        // Symmetric (Rademacher) factors through the alpha0 = 0 path: the
        // modified triples vanish identically, so every scale denominator is
        // degenerate and the columns must come back flagged, never silently
        // rescaled.
        use crate::model::{FactorMoments, FactorSpec};
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let o = crate::synthetic::random_gaussian_topics(8, 2, 0.1, &mut rng).unwrap();
        let f = FactorSpec::new(vec![
            FactorMoments { variance: 1.0, third_central: 0.0, fourth_central: 1.0 };
            2
        ])
        .unwrap();
        let ms = crate::moments::central_moment_set(&o, &f).unwrap();
        let fit = fit_lda_from_moments(&ms, &FitOptions::new(2, 0.0).with_seed(1)).unwrap();
        assert_eq!(fit.diagnostics.unreliable_columns.len(), fit.n_columns());
        assert!(fit.alpha_hat.is_none());
        assert!(fit.scale_estimates.iter().all(|z| !z.is_finite()));
    }
}
