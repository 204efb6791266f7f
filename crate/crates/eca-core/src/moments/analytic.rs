//! Closed-form moment constructors for the independent-factor, single-topic
//! and Dirichlet models, plus the `alpha0`-modified moments.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{MomentSet, QuadFn, TriplesFn};
use crate::error::{Error, Result};
use crate::model::{DirichletParams, FactorSpec, TopicMatrix};

fn check_eta(d: usize, eta: &DVector<f64>) -> Result<()> {
    if eta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "eta has length {}, expected {d}",
            eta.len()
        )));
    }
    Ok(())
}

fn check_factors(o: &TopicMatrix, f: &FactorSpec) -> Result<()> {
    if f.k() != o.k() {
        return Err(Error::DimensionMismatch(format!(
            "factor spec has k = {}, topic matrix has k = {}",
            f.k(),
            o.k()
        )));
    }
    Ok(())
}

/// Central pairwise moment `O diag(sigma_1^2, ..., sigma_k^2) O^T`.
pub fn exact_pairs(o: &TopicMatrix, f: &FactorSpec) -> Result<DMatrix<f64>> {
    check_factors(o, f)?;
    Ok(scaled_cross(o.entries(), &f.variances(), o.entries()))
}

/// Central third-moment contraction `O diag(O^T eta) diag(mu_3) O^T`.
pub fn exact_triples_contract(
    o: &TopicMatrix,
    f: &FactorSpec,
    eta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_factors(o, f)?;
    check_eta(o.d(), eta)?;
    let proj = o.entries().transpose() * eta;
    let scale = proj.component_mul(&f.third_moments());
    Ok(scaled_cross(o.entries(), &scale, o.entries()))
}

/// Gaussian-corrected fourth-moment contraction
/// `O diag(O^T eta) diag(O^T eta') diag(mu_4 - 3 sigma^4) O^T`.
pub fn exact_quad_contract(
    o: &TopicMatrix,
    f: &FactorSpec,
    eta: &DVector<f64>,
    eta2: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    check_factors(o, f)?;
    check_eta(o.d(), eta)?;
    check_eta(o.d(), eta2)?;
    let p1 = o.entries().transpose() * eta;
    let p2 = o.entries().transpose() * eta2;
    let excess = DVector::from_iterator(
        f.k(),
        f.factors().iter().map(|m| m.fourth_central - 3.0 * m.variance * m.variance),
    );
    let scale = p1.component_mul(&p2).component_mul(&excess);
    Ok(scaled_cross(o.entries(), &scale, o.entries()))
}

/// `A diag(s) B^T`.
fn scaled_cross(a: &DMatrix<f64>, s: &DVector<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (j, &v) in s.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * b.transpose()
}

/// Central moment set for an independent-factor model: mean `O E[h]` (zero when
/// the factor means are unspecified), central pairs, and central third and
/// fourth contraction oracles.
pub fn central_moment_set(o: &TopicMatrix, f: &FactorSpec) -> Result<MomentSet> {
    check_factors(o, f)?;
    let mean = match f.mean() {
        Some(m) => o.entries() * m,
        None => DVector::zeros(o.d()),
    };
    let pairs = exact_pairs(o, f)?;
    let (oc, fc) = (o.clone(), f.clone());
    let triples: TriplesFn = Arc::new(move |eta| {
        exact_triples_contract(&oc, &fc, eta).expect("dimensions checked at construction")
    });
    let (oq, fq) = (o.clone(), f.clone());
    let quad: QuadFn = Arc::new(move |eta, eta2| {
        exact_quad_contract(&oq, &fq, eta, eta2).expect("dimensions checked at construction")
    });
    MomentSet::analytic(mean, pairs, triples, Some(quad))
}

/// Closed-form raw Dirichlet moments on the simplex:
/// `E[h]`, `E[h h^T]` and the contraction `v -> E[(h ⊗ h) <v, h>]`.
pub struct DirichletRawMoments {
    pub mean: DVector<f64>,
    pub second: DMatrix<f64>,
    alpha: DVector<f64>,
    alpha0: f64,
}

impl DirichletRawMoments {
    /// `E[(h ⊗ h) <v, h>]`, the five-term closed form.
    pub fn third_contract(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let k = self.alpha.len();
        if v.len() != k {
            panic!("third_contract: v has length {}, expected {k}", v.len());
        }
        let a = &self.alpha;
        let a0 = self.alpha0;
        let va = v.dot(a);
        let av = a.component_mul(v); // diag(alpha) v
        let mut m = a * a.transpose() * va;
        m += av.clone() * a.transpose(); // diag(alpha) v alpha^T
        m += a * av.transpose(); // alpha v^T diag(alpha)
        for i in 0..k {
            m[(i, i)] += va * a[i] + 2.0 * v[i] * a[i];
        }
        m / ((a0 + 2.0) * (a0 + 1.0) * a0)
    }
}

/// Raw moments of the Dirichlet latent state per the closed forms
/// `E[h] = alpha/alpha0` and `E[h ⊗ h] = (diag(alpha) + alpha alpha^T) / ((alpha0+1) alpha0)`.
pub fn dirichlet_raw_moments(p: &DirichletParams) -> DirichletRawMoments {
    let a = p.alpha();
    let a0 = p.alpha0();
    let mean = &a / a0;
    let mut second = &a * a.transpose();
    for i in 0..p.k() {
        second[(i, i)] += a[i];
    }
    second /= (a0 + 1.0) * a0;
    DirichletRawMoments { mean, second, alpha: a, alpha0: a0 }
}

/// Raw (non-central) observable moments of the LDA model: `E[x1] = O E[h]`,
/// `E[x1 x2^T] = O E[h h^T] O^T` and the raw third-moment contraction.
pub fn lda_raw_moment_set(o: &TopicMatrix, p: &DirichletParams) -> Result<MomentSet> {
    if p.k() != o.k() {
        return Err(Error::DimensionMismatch(format!(
            "prior has k = {}, topic matrix has k = {}",
            p.k(),
            o.k()
        )));
    }
    let raw = dirichlet_raw_moments(p);
    let mean = o.entries() * &raw.mean;
    let pairs = o.entries() * &raw.second * o.entries().transpose();
    let oc = o.clone();
    let triples: TriplesFn = Arc::new(move |eta| {
        let v = oc.entries().transpose() * eta;
        oc.entries() * raw.third_contract(&v) * oc.entries().transpose()
    });
    MomentSet::analytic(mean, pairs, triples, None)
}

/// Raw moments of the pure single-topic model (the `alpha0 -> 0` limit): the
/// hidden state is `e_i` with probability `w_i`.
pub fn single_topic_moment_set(o: &TopicMatrix, weights: &DVector<f64>) -> Result<MomentSet> {
    if weights.len() != o.k() {
        return Err(Error::DimensionMismatch(format!(
            "weights have length {}, topic matrix has k = {}",
            weights.len(),
            o.k()
        )));
    }
    if weights.iter().any(|&w| w < 0.0) || (weights.sum() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(
            "single-topic weights must be a probability vector".into(),
        ));
    }
    let mean = o.entries() * weights;
    let pairs = scaled_cross(o.entries(), weights, o.entries());
    let (oc, w) = (o.clone(), weights.clone());
    let triples: TriplesFn = Arc::new(move |eta| {
        let proj = oc.entries().transpose() * eta;
        let scale = proj.component_mul(&w);
        scaled_cross(oc.entries(), &scale, oc.entries())
    });
    MomentSet::analytic(mean, pairs, triples, None)
}

/// The modified second moment `E[x1 x2^T] - alpha0/(alpha0+1) mu mu^T`.
///
/// At `alpha0 = 0` this is the raw moment unchanged; as `alpha0 -> infinity`
/// it approaches the central moment.
pub fn modified_pairs(raw: &MomentSet, alpha0: f64) -> Result<DMatrix<f64>> {
    if alpha0 < 0.0 {
        return Err(Error::NegativeAlpha0(alpha0));
    }
    let pairs = raw.pairs_dense().ok_or_else(|| {
        Error::InvalidParameter("modified_pairs requires a dense pairs matrix".into())
    })?;
    let mu = raw.mean();
    Ok(pairs - (alpha0 / (alpha0 + 1.0)) * mu * mu.transpose())
}

/// The modified third-moment contraction, the four-term combination
/// `E[x1 x2^T <eta,x3>]
///  - alpha0/(alpha0+2) (P eta mu^T + mu eta^T P + <eta,mu> P)
///  + 2 alpha0^2/((alpha0+2)(alpha0+1)) <eta,mu> mu mu^T`
/// with `P = E[x1 x2^T]`.
pub fn modified_triples_contract(
    raw: &MomentSet,
    alpha0: f64,
    eta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if alpha0 < 0.0 {
        return Err(Error::NegativeAlpha0(alpha0));
    }
    check_eta(raw.dim(), eta)?;
    let pairs = raw.pairs_dense().ok_or_else(|| {
        Error::InvalidParameter("modified_triples_contract requires a dense pairs matrix".into())
    })?;
    let mu = raw.mean();
    let mut t = raw.triples_contract(eta);
    let c1 = alpha0 / (alpha0 + 2.0);
    let c2 = 2.0 * alpha0 * alpha0 / ((alpha0 + 2.0) * (alpha0 + 1.0));
    let p_eta = pairs * eta;
    let eta_mu = eta.dot(mu);
    t -= c1 * (&p_eta * mu.transpose() + mu * p_eta.transpose() + eta_mu * pairs);
    t += c2 * eta_mu * mu * mu.transpose();
    Ok(t)
}

/// Central moments derived from raw exchangeable moments:
/// `Pairs = P - mu mu^T` and
/// `Triples(eta) = T(eta) - [P eta mu^T + mu eta^T P + <eta,mu> P] + 2 <eta,mu> mu mu^T`.
pub fn central_from_raw(raw: &MomentSet) -> Result<MomentSet> {
    let pairs_raw = raw
        .pairs_dense()
        .ok_or_else(|| Error::InvalidParameter("central_from_raw requires dense pairs".into()))?
        .clone();
    let mu = raw.mean().clone();
    let central_pairs = &pairs_raw - &mu * mu.transpose();
    let d = raw.dim();
    let raw_oracle = raw_triples_handle(raw);
    let mu_c = mu.clone();
    let triples: TriplesFn = Arc::new(move |eta| {
        let mut t = raw_oracle(eta);
        let p_eta = &pairs_raw * eta;
        let eta_mu = eta.dot(&mu_c);
        t -= &p_eta * mu_c.transpose() + &mu_c * p_eta.transpose() + eta_mu * &pairs_raw;
        t += 2.0 * eta_mu * &mu_c * mu_c.transpose();
        t
    });
    let mean_out = DVector::zeros(d);
    MomentSet::analytic(mean_out, central_pairs, triples, None)
}

/// A 'static handle evaluating the raw third-moment contraction of `raw`.
fn raw_triples_handle(raw: &MomentSet) -> TriplesFn {
    match &raw.triples {
        super::TriplesRep::Oracle(f) => Arc::clone(f),
        super::TriplesRep::DocBacked(d) => {
            let d = Arc::clone(d);
            Arc::new(move |eta| d.triples_contract(eta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FactorMoments, TopicMode};
    use approx::assert_relative_eq;

    fn topic(entries: DMatrix<f64>) -> TopicMatrix {
        TopicMatrix::new(entries, TopicMode::Raw, 1e-12).unwrap()
    }

    fn factors(var: &[f64], mu3: &[f64], mu4: &[f64]) -> FactorSpec {
        FactorSpec::new(
            var.iter()
                .zip(mu3)
                .zip(mu4)
                .map(|((&v, &m3), &m4)| FactorMoments {
                    variance: v,
                    third_central: m3,
                    fourth_central: m4,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn exact_pairs_identity_and_diagonal() {
        let o = topic(DMatrix::identity(2, 2));
        let f = factors(&[1.0, 1.0], &[0.0, 0.0], &[3.0, 3.0]);
        assert_relative_eq!(exact_pairs(&o, &f).unwrap(), DMatrix::identity(2, 2), epsilon = 1e-15);

        let f = factors(&[4.0, 9.0], &[0.0, 0.0], &[48.0, 243.0]);
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[4.0, 9.0]));
        assert_relative_eq!(exact_pairs(&o, &f).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn exact_pairs_rotated_case() {
        let s = 1.0 / 2.0_f64.sqrt();
        let o = topic(DMatrix::from_row_slice(2, 2, &[s, s, s, -s]));
        let f = factors(&[1.0, 2.0], &[0.0, 0.0], &[3.0, 12.0]);
        let got = exact_pairs(&o, &f).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn exact_triples_zero_eta_and_basis_eta() {
        let o = topic(DMatrix::identity(2, 2));
        let f = factors(&[1.0, 1.0], &[1.0, 1.0], &[3.0, 3.0]);
        let zero = exact_triples_contract(&o, &f, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(zero, DMatrix::zeros(2, 2), epsilon = 1e-15);

        let e1 = DVector::from_column_slice(&[1.0, 0.0]);
        let got = exact_triples_contract(&o, &f, &e1).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 0.0]));
        assert_relative_eq!(got, expected, epsilon = 1e-15);
    }

    #[test]
    fn exact_triples_bernoulli_values_vs_monte_carlo() {
        // Central third moments of Bernoulli(0.2) and Bernoulli(0.8) are
        // +-0.096; cross-checked here by direct simulation.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n = 10_000_000usize;
        for &p in &[0.2f64, 0.8] {
            let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
            for _ in 0..n {
                let x = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
                let z = x - p;
                let z3 = z * z * z;
                sum += z3;
                sumsq += z3 * z3;
            }
            let mc = sum / n as f64;
            let var = (sumsq / n as f64 - mc * mc).max(0.0);
            let se = (var / n as f64).sqrt();
            let analytic = p * (1.0 - p) * (1.0 - 2.0 * p);
            assert!(
                (analytic - mc).abs() <= 3.0 * se,
                "p={p}: analytic {analytic} vs mc {mc} (3se = {})",
                3.0 * se
            );
        }

        let o = topic(DMatrix::identity(2, 2));
        let f = factors(&[0.16, 0.16], &[0.096, -0.096], &[0.16 * (1.0 - 0.48); 2]);
        let eta = DVector::from_column_slice(&[1.0, 1.0]);
        let got = exact_triples_contract(&o, &f, &eta).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.096, -0.096]));
        assert_relative_eq!(got, expected, epsilon = 1e-15);
    }

    #[test]
    fn exact_quad_rademacher_and_gaussian() {
        let o = topic(DMatrix::identity(2, 2));
        // Rademacher: sigma^2 = 1, mu4 = 1 so mu4 - 3 sigma^4 = -2.
        let f = factors(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0]);
        let eta = DVector::from_column_slice(&[1.0, 1.0]);
        let zero = exact_quad_contract(&o, &f, &DVector::zeros(2), &eta).unwrap();
        assert_relative_eq!(zero, DMatrix::zeros(2, 2), epsilon = 1e-15);
        let got = exact_quad_contract(&o, &f, &eta, &eta).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_column_slice(&[-2.0, -2.0]));
        assert_relative_eq!(got, expected, epsilon = 1e-14);

        // Gaussian factors: excess kurtosis vanishes for every eta, eta2.
        let g = factors(&[2.0, 0.5], &[0.0, 0.0], &[12.0, 0.75]);
        let e2 = DVector::from_column_slice(&[0.3, -1.1]);
        let gz = exact_quad_contract(&o, &g, &eta, &e2).unwrap();
        assert_relative_eq!(gz, DMatrix::zeros(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn dirichlet_raw_moment_values() {
        let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let m = dirichlet_raw_moments(&p);
        assert_relative_eq!(m.mean, DVector::from_column_slice(&[0.5, 0.5]), epsilon = 1e-15);
        assert_relative_eq!(m.second[(0, 0)], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.second[(0, 1)], 1.0 / 6.0, epsilon = 1e-15);

        let p21 = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let m21 = dirichlet_raw_moments(&p21);
        assert_relative_eq!(m21.mean[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m21.second[(0, 0)], 0.5, epsilon = 1e-15);

        // Degenerate simplex: k = 1 makes every raw moment 1.
        let p1 = DirichletParams::new(vec![0.7]).unwrap();
        let m1 = dirichlet_raw_moments(&p1);
        assert_relative_eq!(m1.mean[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(m1.second[(0, 0)], 1.0, epsilon = 1e-15);
        let third = m1.third_contract(&DVector::from_column_slice(&[1.0]));
        assert_relative_eq!(third[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn dirichlet_third_moments_match_univariate_closed_forms() {
        let p = DirichletParams::new(vec![0.4, 1.3, 2.1]).unwrap();
        let a = p.alpha();
        let a0 = p.alpha0();
        let m = dirichlet_raw_moments(&p);
        // E[h_i^2 h_j] = (alpha_i + 1) alpha_i alpha_j / ((a0+2)(a0+1)a0) for i != j
        // and E[h_i^3] = (alpha_i+2)(alpha_i+1)alpha_i / ((a0+2)(a0+1)a0); both are
        // entries of the contraction with basis vectors.
        for l in 0..3 {
            let e_l = DVector::from_fn(3, |i, _| if i == l { 1.0 } else { 0.0 });
            let t = m.third_contract(&e_l);
            for i in 0..3 {
                for j in 0..3 {
                    let num = if i == j && j == l {
                        (a[i] + 2.0) * (a[i] + 1.0) * a[i]
                    } else if i == j {
                        (a[i] + 1.0) * a[i] * a[l]
                    } else if i == l || j == l {
                        (a[l] + 1.0) * a[l] * a[if i == l { j } else { i }]
                    } else {
                        a[i] * a[j] * a[l]
                    };
                    let expected = num / ((a0 + 2.0) * (a0 + 1.0) * a0);
                    assert_relative_eq!(t[(i, j)], expected, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn modified_pairs_limits_and_closed_form_value() {
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::ProbabilityColumns, 1e-12)
            .unwrap();
        let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let raw = lda_raw_moment_set(&o, &p).unwrap();

        // alpha0 = 0 leaves the raw moment untouched, exactly.
        let at_zero = modified_pairs(&raw, 0.0).unwrap();
        assert_eq!(at_zero, raw.pairs_dense().unwrap().clone());

        // At the true alpha0 the closed form O diag(alpha) O^T / ((a0+1)a0) holds.
        let at_true = modified_pairs(&raw, 2.0).unwrap();
        assert_relative_eq!(at_true, DMatrix::identity(2, 2) / 6.0, epsilon = 1e-14);

        // alpha0 -> infinity approaches central moments.
        let central = central_from_raw(&raw).unwrap();
        let at_inf = modified_pairs(&raw, 1e8).unwrap();
        let diff = (&at_inf - central.pairs_dense().unwrap()).norm()
            / central.pairs_dense().unwrap().norm();
        assert!(diff < 1e-6, "relative deviation {diff}");
    }

    #[test]
    fn modified_triples_limits_and_closed_form_value() {
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::ProbabilityColumns, 1e-12)
            .unwrap();
        let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let raw = lda_raw_moment_set(&o, &p).unwrap();
        let eta = DVector::from_column_slice(&[1.0, 0.0]);

        let zero_eta = modified_triples_contract(&raw, 2.0, &DVector::zeros(2)).unwrap();
        assert_relative_eq!(zero_eta, DMatrix::zeros(2, 2), epsilon = 1e-15);

        let at_zero = modified_triples_contract(&raw, 0.0, &eta).unwrap();
        assert_relative_eq!(at_zero, raw.triples_contract(&eta), epsilon = 1e-15);

        // Closed form: 2/((a0+2)(a0+1)a0) O diag(O^T eta) diag(alpha) O^T
        // = diag(1/12, 0) here; the four-term definition must agree to 1e-12.
        let got = modified_triples_contract(&raw, 2.0, &eta).unwrap();
        let expected =
            DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0 / 12.0, 0.0]));
        assert_relative_eq!(got, expected, epsilon = 1e-12);

        // Asymmetric prior so the central third moment is nonzero and the
        // relative alpha0 -> infinity comparison is well posed.
        let pa = DirichletParams::new(vec![2.0, 1.0]).unwrap();
        let raw_a = lda_raw_moment_set(&o, &pa).unwrap();
        let central = central_from_raw(&raw_a).unwrap();
        let at_inf = modified_triples_contract(&raw_a, 1e8, &eta).unwrap();
        let c = central.triples_contract(&eta);
        assert!(c.norm() > 1e-4, "test instance must have nonzero central triples");
        assert!((&at_inf - &c).norm() / c.norm() < 1e-6);
    }

    #[test]
    fn modified_moment_closed_forms_random_instance() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let (d, k) = (7, 3);
        let mut entries = DMatrix::from_fn(d, k, |_, _| rng.gen::<f64>());
        for j in 0..k {
            let s: f64 = entries.column(j).iter().sum();
            entries.column_mut(j).scale_mut(1.0 / s);
        }
        let o = TopicMatrix::new(entries, TopicMode::ProbabilityColumns, 1e-12).unwrap();
        let p = DirichletParams::new(vec![0.5, 1.5, 0.9]).unwrap();
        let a0 = p.alpha0();
        let raw = lda_raw_moment_set(&o, &p).unwrap();

        let got_pairs = modified_pairs(&raw, a0).unwrap();
        let expected_pairs =
            scaled_cross(o.entries(), &(p.alpha() / ((a0 + 1.0) * a0)), o.entries());
        assert!((got_pairs - expected_pairs).norm() < 1e-10);

        let eta = DVector::from_fn(d, |i, _| ((i + 1) as f64 * 0.37).sin());
        let got_t = modified_triples_contract(&raw, a0, &eta).unwrap();
        let proj = o.entries().transpose() * &eta;
        let scale = (2.0 / ((a0 + 2.0) * (a0 + 1.0) * a0)) * proj.component_mul(&p.alpha());
        let expected_t = scaled_cross(o.entries(), &scale, o.entries());
        assert!((got_t - expected_t).norm() < 1e-10);
    }

    #[test]
    fn single_topic_matches_lda_limit() {
        let o = TopicMatrix::new(
            DMatrix::from_row_slice(3, 2, &[0.7, 0.1, 0.2, 0.3, 0.1, 0.6]),
            TopicMode::ProbabilityColumns,
            1e-12,
        )
        .unwrap();
        let w = DVector::from_column_slice(&[0.4, 0.6]);
        let st = single_topic_moment_set(&o, &w).unwrap();
        // Tiny-alpha0 Dirichlet with alpha = a0 * w approaches the same moments.
        let eps = 1e-7;
        let p = DirichletParams::new(vec![eps * 0.4, eps * 0.6]).unwrap();
        let lda = lda_raw_moment_set(&o, &p).unwrap();
        assert!((st.pairs_dense().unwrap() - lda.pairs_dense().unwrap()).norm() < 1e-6);
        let eta = DVector::from_column_slice(&[0.2, -0.5, 1.0]);
        assert!((st.triples_contract(&eta) - lda.triples_contract(&eta)).norm() < 1e-6);
    }

    #[test]
    fn triples_linearity_in_eta() {
        let o = topic(DMatrix::from_row_slice(4, 2, &[1.0, 0.2, 0.4, 1.0, -0.3, 0.5, 0.0, 0.9]));
        let f = factors(&[1.0, 2.0], &[0.5, -0.2], &[4.0, 15.0]);
        let ms = central_moment_set(&o, &f).unwrap();
        let e1 = DVector::from_column_slice(&[0.3, -1.0, 0.5, 0.2]);
        let e2 = DVector::from_column_slice(&[1.1, 0.0, -0.7, 0.4]);
        let lhs = ms.triples_contract(&(2.0 * &e1 - 3.0 * &e2));
        let rhs = 2.0 * ms.triples_contract(&e1) - 3.0 * ms.triples_contract(&e2);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn negative_alpha0_rejected() {
        let o = TopicMatrix::new(DMatrix::identity(2, 2), TopicMode::ProbabilityColumns, 1e-12)
            .unwrap();
        let p = DirichletParams::new(vec![1.0, 1.0]).unwrap();
        let raw = lda_raw_moment_set(&o, &p).unwrap();
        assert!(matches!(modified_pairs(&raw, -0.5), Err(Error::NegativeAlpha0(_))));
    }
}
