//! Alignment of recovered columns against ground truth, moment error
//! metrics, and the sample-complexity experiment harness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::model::{DirichletParams, TopicMatrix};
use crate::moments::MomentSet;
use crate::pipeline::{fit_lda, FitOptions};
use crate::spectral::spectral_norm;
use crate::synthetic::generate_lda_corpus;

/// Outcome of matching recovered columns to ground-truth columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// For each recovered column, the index of the truth column it matched.
    pub permutation: Vec<usize>,
    /// Whether the match used the negated recovered column.
    pub sign_flips: Vec<bool>,
    pub per_column_l2: Vec<f64>,
    pub per_column_l1: Vec<f64>,
    pub max_l2: f64,
    pub mean_l2: f64,
    /// Truth columns with no recovered partner.
    pub missing_columns: usize,
    pub alpha_error: Option<f64>,
}

/// Minimum-cost assignment of rows to distinct columns for a rectangular cost
/// matrix with `nrows <= ncols`; the classic O(n^2 m) potentials algorithm.
/// Exact, which matters at the tolerances the recovery tests use.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    let m = cost.ncols();
    assert!(n <= m, "assignment needs nrows <= ncols");
    if n == 0 {
        return Vec::new();
    }
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut matched = vec![0usize; m + 1]; // row matched to column j (1-based; 0 = none)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![usize::MAX; n];
    for j in 1..=m {
        if matched[j] != 0 {
            assignment[matched[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Matches each recovered column to a distinct truth column by minimum total
/// l2 cost (optimal assignment, sign resolved per pair when `allow_sign`).
pub fn align_columns(
    o_true: &TopicMatrix,
    o_hat: &[DVector<f64>],
    allow_sign: bool,
) -> EvalReport {
    let k = o_true.k();
    let r = o_hat.len();
    assert!(r <= k, "more recovered columns than truth columns");
    let mut cost = DMatrix::zeros(r, k);
    let mut flip = vec![vec![false; k]; r];
    for (i, col) in o_hat.iter().enumerate() {
        for j in 0..k {
            let t = o_true.column(j);
            let plus = (col - &t).norm();
            if allow_sign {
                let minus = (col + &t).norm();
                if minus < plus {
                    cost[(i, j)] = minus;
                    flip[i][j] = true;
                } else {
                    cost[(i, j)] = plus;
                }
            } else {
                cost[(i, j)] = plus;
            }
        }
    }
    let permutation = min_cost_assignment(&cost);
    let mut per_l2 = Vec::with_capacity(r);
    let mut per_l1 = Vec::with_capacity(r);
    let mut signs = Vec::with_capacity(r);
    for (i, &j) in permutation.iter().enumerate() {
        let t = o_true.column(j);
        let flipped = flip[i][j];
        let diff = if flipped { &o_hat[i] + &t } else { &o_hat[i] - &t };
        per_l2.push(diff.norm());
        per_l1.push(diff.iter().map(|x| x.abs()).sum());
        signs.push(flipped);
    }
    let max_l2 = per_l2.iter().cloned().fold(0.0, f64::max);
    let mean_l2 =
        if r > 0 { per_l2.iter().sum::<f64>() / r as f64 } else { 0.0 };
    EvalReport {
        permutation,
        sign_flips: signs,
        per_column_l2: per_l2,
        per_column_l1: per_l1,
        max_l2,
        mean_l2,
        missing_columns: k - r,
        alpha_error: None,
    }
}

/// Aligned max error with missing columns counted as infinite.
pub fn aligned_max_error(o_true: &TopicMatrix, o_hat: &[DVector<f64>], allow_sign: bool) -> f64 {
    let report = align_columns(o_true, o_hat, allow_sign);
    if report.missing_columns > 0 {
        f64::INFINITY
    } else {
        report.max_l2
    }
}

/// Spectral-norm moment errors: `E_P` on the pairs matrices and `E_T` as the
/// max over the probe directions (normalized to unit length) of the
/// contracted-triples error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentErrors {
    pub pairs: f64,
    pub triples: f64,
}

pub fn moment_errors(
    ground_truth: &MomentSet,
    empirical: &MomentSet,
    probes: &[DVector<f64>],
) -> Result<MomentErrors> {
    if ground_truth.dim() != empirical.dim() {
        return Err(Error::DimensionMismatch(format!(
            "moment sets have d = {} and d = {}",
            ground_truth.dim(),
            empirical.dim()
        )));
    }
    let gp = ground_truth.pairs_dense().ok_or_else(|| {
        Error::InvalidParameter("moment_errors requires dense pairs".into())
    })?;
    let ep = empirical.pairs_dense().ok_or_else(|| {
        Error::InvalidParameter("moment_errors requires dense pairs".into())
    })?;
    let pairs = spectral_norm(&(gp - ep));
    let mut triples: f64 = 0.0;
    for eta in probes {
        let n = eta.norm();
        if n == 0.0 {
            continue;
        }
        let unit = eta / n;
        let diff = ground_truth.triples_contract(&unit) - empirical.triples_contract(&unit);
        triples = triples.max(spectral_norm(&diff));
    }
    Ok(MomentErrors { pairs, triples })
}

/// Seeded unit-norm probe directions for [`moment_errors`].
pub fn default_probes(d: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::SeedableRng as _;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| crate::spectral::unit_sphere_vector(d, &mut rng)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points for a slope");
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Error statistics at one sample size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_docs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub errors: Vec<f64>,
}

impl SweepRow {
    /// Normal-approximation confidence halfwidth of the median,
    /// `1.57 (q3 - q1) / sqrt(trials)`.
    pub fn median_ci_halfwidth(&self) -> f64 {
        1.57 * (self.q3 - self.q1) / (self.errors.len() as f64).sqrt()
    }
}

/// Sweep result: per-N error quartiles and the fitted log-log slope of the
/// median error against N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub slope: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// [`sample_complexity_sweep`] driven by a [`GeneratorSpec`]; the generator
/// must carry LDA ground truth.
pub fn sample_complexity_sweep_spec(
    spec: &crate::synthetic::GeneratorSpec,
    ns: &[usize],
    trials: usize,
    fit_template: &FitOptions,
) -> Result<SweepReport> {
    match &spec.model {
        crate::synthetic::GeneratorModel::Lda { topics, prior, doc_len, .. } => {
            sample_complexity_sweep(topics, prior, *doc_len, ns, trials, fit_template, spec.seed)
        }
        _ => Err(Error::InvalidParameter(
            "sample-complexity sweep needs an LDA generator with ground truth".into(),
        )),
    }
}

/// Sample-complexity experiment: for each N, generate `trials` synthetic LDA
/// corpora, fit, and record the aligned max column error against the known
/// topics. Trials run concurrently with per-trial derived seeds; aggregation
/// is deterministic.
pub fn sample_complexity_sweep(
    truth: &TopicMatrix,
    prior: &DirichletParams,
    doc_len: usize,
    ns: &[usize],
    trials: usize,
    fit_template: &FitOptions,
    base_seed: u64,
) -> Result<SweepReport> {
    if ns.len() < 2 {
        return Err(Error::InvalidParameter("sweep needs at least two sample sizes".into()));
    }
    let mut rows = Vec::with_capacity(ns.len());
    for (ni, &n) in ns.iter().enumerate() {
        let mut errors: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|trial| -> Result<f64> {
                use rand::SeedableRng;
                let seed = derive_seed(base_seed, (ni as u64) << 32 | trial as u64);
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let corpus = generate_lda_corpus(truth, prior, n, doc_len, &mut rng)?;
                let opts = fit_template.clone().with_seed(derive_seed(seed, 0xF17));
                let fit = fit_lda(&corpus, &opts)?;
                Ok(aligned_max_error(truth, &fit.columns, false))
            })
            .collect::<Result<Vec<f64>>>()?;
        errors.sort_by(|a, b| a.partial_cmp(b).expect("finite or inf errors"));
        rows.push(SweepRow {
            n_docs: n,
            median: quantile(&errors, 0.5),
            q1: quantile(&errors, 0.25),
            q3: quantile(&errors, 0.75),
            errors,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n_docs as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let slope = log_log_slope(&xs, &ys);
    Ok(SweepReport { rows, slope })
}

/// Empirical mean of a set of samples.
pub fn mc_mean(samples: &[DVector<f64>]) -> DVector<f64> {
    let d = samples[0].len();
    let mut out = DVector::zeros(d);
    for s in samples {
        out += s;
    }
    out / samples.len() as f64
}

/// Monte-Carlo central cross moment `E[(a - mu_a)(b - mu_b)^T]` with
/// per-entry standard errors, for verifying analytic constructors.
pub fn mc_central_pairs_with_se(
    a: &[DVector<f64>],
    b: &[DVector<f64>],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.len();
    let mu_a = mc_mean(a);
    let mu_b = mc_mean(b);
    let d1 = mu_a.len();
    let d2 = mu_b.len();
    let mut sum = DMatrix::zeros(d1, d2);
    let mut sumsq = DMatrix::zeros(d1, d2);
    for (x, y) in a.iter().zip(b) {
        let contrib = (x - &mu_a) * (y - &mu_b).transpose();
        sumsq += contrib.map(|v| v * v);
        sum += contrib;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean.map(|v| v * v);
    let se = var.map(|v| (v.max(0.0) / n as f64).sqrt());
    (mean, se)
}

/// Monte-Carlo central triple contraction
/// `E[(x1 - mu)(x2 - mu)^T <eta, x3 - mu>]` with per-entry standard errors.
pub fn mc_central_triples_with_se(
    x1: &[DVector<f64>],
    x2: &[DVector<f64>],
    x3: &[DVector<f64>],
    eta: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x1.len();
    let mu1 = mc_mean(x1);
    let mu2 = mc_mean(x2);
    let mu3 = mc_mean(x3);
    let d1 = mu1.len();
    let d2 = mu2.len();
    let mut sum = DMatrix::zeros(d1, d2);
    let mut sumsq = DMatrix::zeros(d1, d2);
    for ((a, b), c) in x1.iter().zip(x2).zip(x3) {
        let w = eta.dot(&(c - &mu3));
        let contrib = (a - &mu1) * (b - &mu2).transpose() * w;
        sumsq += contrib.map(|v| v * v);
        sum += contrib;
    }
    let mean = sum / n as f64;
    let var = sumsq / n as f64 - mean.map(|v| v * v);
    let se = var.map(|v| (v.max(0.0) / n as f64).sqrt());
    (mean, se)
}

/// Monte-Carlo estimate of the Gaussian-corrected fourth-moment contraction:
/// the raw contracted average minus the three pair-product terms computed
/// from the estimated central pairs.
pub fn mc_quad_with_se(
    x1: &[DVector<f64>],
    x2: &[DVector<f64>],
    x3: &[DVector<f64>],
    x4: &[DVector<f64>],
    eta: &DVector<f64>,
    eta2: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = x1.len();
    let mu1 = mc_mean(x1);
    let mu2 = mc_mean(x2);
    let mu3 = mc_mean(x3);
    let mu4 = mc_mean(x4);
    let d = mu1.len();
    let mut sum = DMatrix::zeros(d, d);
    let mut sumsq = DMatrix::zeros(d, d);
    for (((a, b), c), e) in x1.iter().zip(x2).zip(x3).zip(x4) {
        let w = eta.dot(&(c - &mu3)) * eta2.dot(&(e - &mu4));
        let contrib = (a - &mu1) * (b - &mu2).transpose() * w;
        sumsq += contrib.map(|v| v * v);
        sum += contrib;
    }
    let raw = sum / n as f64;
    let var = sumsq / n as f64 - raw.map(|v| v * v);
    let se = var.map(|v| (v.max(0.0) / n as f64).sqrt());
    // subtract the Gaussian pair products using pooled central pairs
    let (p12, _) = mc_central_pairs_with_se(x1, x2);
    let quad = &raw
        - (eta.transpose() * &p12 * eta2)[(0, 0)] * &p12
        - (&p12 * eta) * (&p12 * eta2).transpose()
        - (&p12 * eta2) * (&p12 * eta).transpose();
    (quad, se)
}
