//! Whitening and SVD plumbing shared by the recovery algorithms: randomized
//! range finding, whitening maps, unique-singular-vector extraction and the
//! simultaneous power iteration. Operators of size d are accessed by action;
//! factorizations happen on k x k matrices.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::oriented;
use crate::moments::PairsOperator;

/// Relative spectral-gap tolerance for declaring a singular value unique.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// Eigenvalues of the projected pairs below this fraction of the largest are
/// treated as singular.
pub const WHITEN_EIG_TOL: f64 = 1e-12;
/// Relative singular-value threshold for numerical rank decisions.
pub const RANK_EPS: f64 = 1e-10;

/// Action of a symmetric operator, `v -> M v`.
pub type MatrixAction<'a> = &'a dyn Fn(&DVector<f64>) -> DVector<f64>;

/// The whitening data: range basis `U` (d x k), whitener `V` (k x k), the
/// combined map `W = U V` with `W^T Pairs W = I_k`, and its pseudo-inverse.
#[derive(Debug, Clone)]
pub struct WhiteningMap {
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    w: DMatrix<f64>,
    w_pinv: DMatrix<f64>,
    residual: f64,
}

impl WhiteningMap {
    fn assemble(u: DMatrix<f64>, v: DMatrix<f64>, pairs_action: MatrixAction) -> Self {
        let w = &u * &v;
        let gram = w.transpose() * &w;
        let w_pinv = gram
            .try_inverse()
            .expect("W^T W invertible by construction")
            * w.transpose();
        let wtpw = w.transpose() * apply_columns(pairs_action, &w);
        let residual = spectral_norm(&(wtpw - DMatrix::identity(w.ncols(), w.ncols())));
        Self { u, v, w, w_pinv, residual }
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `W^+ = (W^T W)^{-1} W^T`.
    pub fn w_pinv(&self) -> &DMatrix<f64> {
        &self.w_pinv
    }

    /// `|W^T Pairs W - I|` recorded at construction.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    /// Back-projection `(W^+)^T lambda` of a whitened vector.
    pub fn reconstruct(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.w_pinv.transpose() * lambda
    }

    /// The orthogonal projector `W (W^T W)^{-1} W^T` onto Range(W).
    pub fn projector(&self) -> DMatrix<f64> {
        &self.w * &self.w_pinv
    }
}

fn apply_columns(action: MatrixAction, m: &DMatrix<f64>) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = m.column_iter().map(|c| action(&c.into_owned())).collect();
    DMatrix::from_columns(&cols)
}

pub(crate) fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// A uniformly random unit vector.
pub fn unit_sphere_vector(k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Max sine of the principal angles between the column spans of `a` and `b`,
/// computed as `|(I - Qa Qa^T) Qb|` so small angles stay resolvable.
pub fn max_principal_angle_sine(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    spectral_norm(&residual)
}

/// Indices of `values` sorted descending (ties broken by index).
fn descending_order(values: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite singular values"));
    order
}

fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let order = descending_order(&svd.singular_values);
    let smax = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > RANK_EPS * smax.max(f64::MIN_POSITIVE))
        .count()
        .max(1);
    let cols: Vec<DVector<f64>> =
        order[..rank].iter().map(|&i| u.column(i).into_owned()).collect();
    DMatrix::from_columns(&cols)
}

/// Finds a column-orthonormal `U` (d x k) with Range(U) = Range(Pairs) almost
/// surely, by orthonormalizing the product of `Pairs` with a standard normal
/// test matrix. Fails with `RankCollapse` when the sketch has numerical rank
/// below k.
pub fn randomized_range(
    pairs_action: MatrixAction,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if k == 0 || k > d {
        return Err(Error::DimensionMismatch(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = standard_normal_matrix(d, k, &mut rng);
    let sketch = apply_columns(pairs_action, &theta);
    let svd = sketch.svd(true, false);
    let u = svd.u.expect("u requested");
    let order = descending_order(&svd.singular_values);
    let smax = svd.singular_values[order[0]];
    let rank = if smax <= 0.0 || !smax.is_finite() {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > RANK_EPS * smax).count()
    };
    if rank < k {
        return Err(Error::RankCollapse { rank, k });
    }
    let cols: Vec<DVector<f64>> = order[..k].iter().map(|&i| u.column(i).into_owned()).collect();
    Ok(DMatrix::from_columns(&cols))
}

/// Whitens the projected pairs: finds `V` with `V^T (U^T Pairs U) V = I` via a
/// symmetric eigendecomposition and returns the combined map `W = U V`.
pub fn whiten(pairs: &PairsOperator, u: &DMatrix<f64>) -> Result<WhiteningMap> {
    let action = |v: &DVector<f64>| pairs.apply(v);
    whiten_action(&action, u)
}

/// [`whiten`] over a raw action oracle.
pub fn whiten_action(pairs_action: MatrixAction, u: &DMatrix<f64>) -> Result<WhiteningMap> {
    let projected = u.transpose() * apply_columns(pairs_action, u);
    let sym = (&projected + projected.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let lam_max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let lam_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lam_max <= 0.0 || lam_min <= WHITEN_EIG_TOL * lam_max {
        return Err(Error::SingularProjectedPairs {
            ratio: if lam_max > 0.0 { lam_min / lam_max } else { 0.0 },
        });
    }
    let k = u.ncols();
    let mut v = eig.eigenvectors.clone();
    for j in 0..k {
        v.column_mut(j).scale_mut(1.0 / eig.eigenvalues[j].sqrt());
    }
    Ok(WhiteningMap::assemble(u.clone(), v, pairs_action))
}

/// Whitening through the truncated SVD of the pairs matrix itself:
/// `W = A Sigma^{-1/2}` with `A` the top-k left singular vectors. This is the
/// sampled-data path; it whitens the best rank-k approximation.
pub fn truncated_whiten(pairs: &DMatrix<f64>, k: usize) -> Result<WhiteningMap> {
    if k == 0 || k > pairs.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "need 1 <= k <= d, got k = {k}, d = {}",
            pairs.nrows()
        )));
    }
    let svd = pairs.clone().svd(true, false);
    let u_full = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let smax = svd.singular_values[order[0]];
    let sk = svd.singular_values[order[k - 1]];
    if smax <= 0.0 || sk <= WHITEN_EIG_TOL * smax {
        return Err(Error::InsufficientRank { k, ratio: if smax > 0.0 { sk / smax } else { 0.0 } });
    }
    let mut a = DMatrix::zeros(pairs.nrows(), k);
    let mut v = DMatrix::zeros(k, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        a.set_column(j, &u_full.column(idx));
        v[(j, j)] = 1.0 / svd.singular_values[idx].sqrt();
    }
    let action = |x: &DVector<f64>| pairs * x;
    Ok(WhiteningMap::assemble(a, v, &action))
}

/// [`truncated_whiten`] for an operator accessed only by action, via a
/// randomized range sketch with oversampling.
pub fn truncated_whiten_action(
    pairs_action: MatrixAction,
    d: usize,
    k: usize,
    seed: u64,
) -> Result<WhiteningMap> {
    if k == 0 || k > d {
        return Err(Error::DimensionMismatch(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let oversample = (k + 8).min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = standard_normal_matrix(d, oversample, &mut rng);
    let mut sketch = apply_columns(pairs_action, &theta);
    // Subspace iterations sharpen the sketch when the spectrum has a noise
    // tail; the operator is symmetric so plain re-application suffices.
    for _ in 0..2 {
        sketch = apply_columns(pairs_action, &orthonormal_basis(&sketch));
    }
    let svd = sketch.svd(true, false);
    let q_full = svd.u.expect("u requested");
    let order0 = descending_order(&svd.singular_values);
    let smax = svd.singular_values[order0[0]];
    let rank = if smax <= 0.0 {
        0
    } else {
        svd.singular_values.iter().filter(|&&s| s > RANK_EPS * smax).count()
    };
    if rank < k {
        return Err(Error::InsufficientRank { k, ratio: 0.0 });
    }
    let q_cols: Vec<DVector<f64>> =
        order0[..rank].iter().map(|&i| q_full.column(i).into_owned()).collect();
    let q = DMatrix::from_columns(&q_cols);
    let projected = q.transpose() * apply_columns(pairs_action, &q);
    let sym = (&projected + projected.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..rank).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite eigenvalues")
    });
    let lam_max = eig.eigenvalues[order[0]];
    let lam_k = eig.eigenvalues[order[k - 1]];
    if lam_max <= 0.0 || lam_k <= WHITEN_EIG_TOL * lam_max {
        return Err(Error::InsufficientRank {
            k,
            ratio: if lam_max > 0.0 { lam_k / lam_max } else { 0.0 },
        });
    }
    let mut a = DMatrix::zeros(d, k);
    let mut v = DMatrix::zeros(k, k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        a.set_column(j, &(&q * eig.eigenvectors.column(idx)));
        v[(j, j)] = 1.0 / eig.eigenvalues[idx].sqrt();
    }
    Ok(WhiteningMap::assemble(a, v, pairs_action))
}

/// How an extraction terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtractionStatus {
    /// Dense factorization, no iteration involved.
    Direct,
    Converged { iterations: usize },
    NotConverged { iterations: usize },
}

/// Singular vectors with values sorted descending and a per-vector flag
/// telling whether the value is isolated from every other by more than
/// `gap_tol * sigma_max`.
#[derive(Debug, Clone)]
pub struct SvdExtraction {
    pub vectors: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub uniqueness: Vec<bool>,
    pub gap_tol: f64,
    pub status: ExtractionStatus,
}

impl SvdExtraction {
    /// Adjacent gaps of the sorted values.
    pub fn gaps(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[0] - w[1]).collect()
    }

    /// Smallest pairwise separation relative to the largest value.
    pub fn min_relative_gap(&self) -> f64 {
        let smax = self.values.first().copied().unwrap_or(0.0);
        if smax <= 0.0 {
            return 0.0;
        }
        self.gaps().iter().cloned().fold(f64::INFINITY, f64::min) / smax
    }

    pub fn unique_count(&self) -> usize {
        self.uniqueness.iter().filter(|&&u| u).count()
    }
}

fn uniqueness_mask(values: &[f64], gap_tol: f64) -> Vec<bool> {
    let smax = values.iter().cloned().fold(0.0f64, f64::max);
    let threshold = gap_tol * smax;
    values
        .iter()
        .enumerate()
        .map(|(i, &vi)| {
            smax > 0.0
                && values
                    .iter()
                    .enumerate()
                    .all(|(j, &vj)| i == j || (vi - vj).abs() > threshold)
        })
        .collect()
}

/// Full SVD of a small matrix with uniqueness flags at relative tolerance
/// `gap_tol`. An empty uniqueness set is a valid outcome (tied spectrum).
pub fn unique_singular_vectors(t: &DMatrix<f64>, gap_tol: f64) -> SvdExtraction {
    let k = t.nrows();
    let svd = t.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .expect("finite singular values")
    });
    let mut vectors = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &idx in &order {
        vectors.push(oriented(u.column(idx).into_owned()));
        values.push(svd.singular_values[idx]);
    }
    let uniqueness = uniqueness_mask(&values, gap_tol);
    SvdExtraction { vectors, values, uniqueness, gap_tol, status: ExtractionStatus::Direct }
}

/// Simultaneous power iteration: repeatedly applies the operator action to a
/// random orthonormal basis and re-orthonormalizes, until the largest
/// per-vector angle change falls below `conv_tol` or `max_iter` is reached.
/// The action receives the current iterate, so quadratic (tensor-style)
/// updates are expressed by the caller closing over its own operator.
pub fn power_iteration_svd(
    action: MatrixAction,
    k: usize,
    seed: u64,
    max_iter: usize,
    conv_tol: f64,
    gap_tol: f64,
) -> SvdExtraction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = standard_normal_matrix(k, k, &mut rng);
    let mut basis = init.qr().q();
    let mut status = ExtractionStatus::NotConverged { iterations: max_iter };
    for iter in 0..max_iter {
        let updated_cols: Vec<DVector<f64>> =
            basis.column_iter().map(|c| action(&c.into_owned())).collect();
        let updated = DMatrix::from_columns(&updated_cols);
        if updated.iter().any(|x| !x.is_finite()) || updated.norm() < 1e-300 {
            status = ExtractionStatus::NotConverged { iterations: iter };
            break;
        }
        let next = updated.qr().q();
        let mut delta = 0.0f64;
        for j in 0..k {
            let dot = basis.column(j).dot(&next.column(j)).abs().min(1.0);
            delta = delta.max((1.0 - dot * dot).sqrt());
        }
        basis = next;
        if delta < conv_tol {
            status = ExtractionStatus::Converged { iterations: iter + 1 };
            break;
        }
    }
    // Rayleigh-type values through the same action; order by magnitude.
    let mut scored: Vec<(f64, DVector<f64>)> = basis
        .column_iter()
        .map(|c| {
            let v = c.into_owned();
            let value = v.dot(&action(&v));
            (value, v)
        })
        .collect();
    scored.sort_by(|a, b| b.0.abs().partial_cmp(&a.0.abs()).expect("finite values"));
    let values: Vec<f64> = scored.iter().map(|(s, _)| s.abs()).collect();
    let vectors: Vec<DVector<f64>> = scored.into_iter().map(|(_, v)| oriented(v)).collect();
    let uniqueness = uniqueness_mask(&values, gap_tol);
    SvdExtraction { vectors, values, uniqueness, gap_tol, status }
}
