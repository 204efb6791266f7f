//! Ground-truth generators for every supported model: LDA corpora,
//! independent-factor observations under Gaussian or Poisson noise,
//! multi-view samples, and the three-timestep factorial HMM embedded as a
//! multi-view instance. Each generator's empirical moments converge to the
//! matching analytic constructor; tests hold them to that contract.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    Corpus, DirichletParams, Document, FactorMoments, FactorSpec, TopicMatrix, TopicMode,
};

/// A samplable latent-factor distribution with closed-form central moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FactorDistribution {
    /// Values {0, 1} with P(1) = p.
    Bernoulli { p: f64 },
    /// Values {-1, +1} with P(+1) = plus_prob.
    TwoPoint { plus_prob: f64 },
    /// Uniform on [-half_width, half_width].
    UniformSymmetric { half_width: f64 },
    Gaussian { mean: f64, variance: f64 },
}

impl FactorDistribution {
    pub fn rademacher() -> Self {
        FactorDistribution::TwoPoint { plus_prob: 0.5 }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            FactorDistribution::Bernoulli { p } => p,
            FactorDistribution::TwoPoint { plus_prob } => 2.0 * plus_prob - 1.0,
            FactorDistribution::UniformSymmetric { .. } => 0.0,
            FactorDistribution::Gaussian { mean, .. } => mean,
        }
    }

    pub fn moments(&self) -> FactorMoments {
        match *self {
            FactorDistribution::Bernoulli { p } => {
                let q = 1.0 - p;
                FactorMoments {
                    variance: p * q,
                    third_central: p * q * (1.0 - 2.0 * p),
                    fourth_central: p * q * (1.0 - 3.0 * p * q),
                }
            }
            FactorDistribution::TwoPoint { plus_prob: pi } => {
                let q = 1.0 - pi;
                FactorMoments {
                    variance: 4.0 * pi * q,
                    third_central: 8.0 * pi * q * (1.0 - 2.0 * pi),
                    fourth_central: 16.0 * pi * q * (q * q * q + pi * pi * pi),
                }
            }
            FactorDistribution::UniformSymmetric { half_width: w } => FactorMoments {
                variance: w * w / 3.0,
                third_central: 0.0,
                fourth_central: w.powi(4) / 5.0,
            },
            FactorDistribution::Gaussian { variance, .. } => FactorMoments {
                variance,
                third_central: 0.0,
                fourth_central: 3.0 * variance * variance,
            },
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            FactorDistribution::Bernoulli { p } => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            FactorDistribution::TwoPoint { plus_prob } => {
                if rng.gen::<f64>() < plus_prob {
                    1.0
                } else {
                    -1.0
                }
            }
            FactorDistribution::UniformSymmetric { half_width } => {
                rng.gen_range(-half_width..=half_width)
            }
            FactorDistribution::Gaussian { mean, variance } => {
                mean + variance.sqrt() * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            FactorDistribution::Bernoulli { p } => (0.0..=1.0).contains(&p),
            FactorDistribution::TwoPoint { plus_prob } => (0.0..=1.0).contains(&plus_prob),
            FactorDistribution::UniformSymmetric { half_width } => half_width > 0.0,
            FactorDistribution::Gaussian { variance, .. } => variance >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad factor distribution {self:?}")))
        }
    }
}

/// The factor spec implied by a list of distributions, mean vector included.
pub fn factor_spec_of(dists: &[FactorDistribution]) -> Result<FactorSpec> {
    for d in dists {
        d.validate()?;
    }
    let spec = FactorSpec::new(dists.iter().map(FactorDistribution::moments).collect())?;
    spec.with_mean(DVector::from_iterator(dists.len(), dists.iter().map(|d| d.mean())))
}

/// One draw from Dirichlet(alpha) via normalized Gamma variates; handles
/// k = 1 (always 1.0) and sub-unit shapes.
pub fn sample_dirichlet(p: &DirichletParams, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let k = p.k();
    if k == 1 {
        return DVector::from_element(1, 1.0);
    }
    loop {
        let mut draws = DVector::zeros(k);
        let mut total = 0.0;
        for (i, &a) in p.alpha_slice().iter().enumerate() {
            let g = Gamma::new(a, 1.0).expect("alpha validated positive").sample(rng);
            draws[i] = g;
            total += g;
        }
        if total > 0.0 {
            return draws / total;
        }
        // all-zero draw possible only for extreme sub-unit shapes; redraw
    }
}

fn sample_categorical(cumulative: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    match cumulative.iter().position(|&c| u < c) {
        Some(i) => i,
        None => cumulative.len() - 1,
    }
}

/// Samples an LDA corpus: per document draw the topic mixture from the prior,
/// then `doc_len` tokens by topic-then-word sampling.
pub fn generate_lda_corpus(
    topics: &TopicMatrix,
    prior: &DirichletParams,
    n_docs: usize,
    doc_len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Corpus> {
    if topics.mode() != TopicMode::ProbabilityColumns {
        return Err(Error::InvalidParameter("LDA topics must be probability columns".into()));
    }
    if prior.k() != topics.k() {
        return Err(Error::DimensionMismatch(format!(
            "prior has k = {}, topics have k = {}",
            prior.k(),
            topics.k()
        )));
    }
    if doc_len < 3 {
        return Err(Error::InvalidParameter("doc_len must be >= 3".into()));
    }
    let d = topics.d();
    let k = topics.k();
    // per-topic cumulative word distributions
    let word_cdfs: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut acc = 0.0;
            topics
                .entries()
                .column(j)
                .iter()
                .map(|&p| {
                    acc += p;
                    acc
                })
                .collect()
        })
        .collect();
    let mut docs = Vec::with_capacity(n_docs);
    let mut mixture_cdf = vec![0.0f64; k];
    for _ in 0..n_docs {
        let h = sample_dirichlet(prior, rng);
        let mut acc = 0.0;
        for i in 0..k {
            acc += h[i];
            mixture_cdf[i] = acc;
        }
        let tokens: Vec<u32> = (0..doc_len)
            .map(|_| {
                let topic = sample_categorical(&mixture_cdf, rng);
                sample_categorical(&word_cdfs[topic], rng) as u32
            })
            .collect();
        docs.push(Document::from_tokens(tokens));
    }
    Corpus::new(d, docs)
}

/// Observation noise for the independent-factor generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Additive isotropic Gaussian noise with the given standard deviation.
    Gaussian { sigma: f64 },
    /// Each coordinate is a Poisson count with rate `[O h]_j`.
    Poisson,
}

/// Draws `n` samples of `views` conditionally independent observations from
/// the independent-factor model `E[x_v | h] = O h`. Poisson noise requires
/// every rate `[O h]_j` to be nonnegative; a negative rate is a construction
/// error, not a rejected sample.
pub fn generate_independent_factor_samples(
    topics: &TopicMatrix,
    dists: &[FactorDistribution],
    noise: NoiseModel,
    n: usize,
    views: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<DVector<f64>>>> {
    if dists.len() != topics.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} factor distributions for k = {}",
            dists.len(),
            topics.k()
        )));
    }
    if !(3..=4).contains(&views) {
        return Err(Error::InvalidParameter("views must be 3 or 4".into()));
    }
    for d in dists {
        d.validate()?;
    }
    let k = topics.k();
    let d = topics.d();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let h = DVector::from_iterator(k, dists.iter().map(|f| f.sample(rng)));
        let mean = topics.entries() * &h;
        let mut sample_views = Vec::with_capacity(views);
        for _ in 0..views {
            let x = match noise {
                NoiseModel::Gaussian { sigma } => {
                    if sigma == 0.0 {
                        mean.clone()
                    } else {
                        let noise_vec =
                            DVector::from_fn(d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
                        &mean + noise_vec
                    }
                }
                NoiseModel::Poisson => {
                    let mut x = DVector::zeros(d);
                    for j in 0..d {
                        let rate = mean[j];
                        if rate < 0.0 {
                            return Err(Error::NegativeRate { index: j, rate });
                        }
                        x[j] = if rate == 0.0 {
                            0.0
                        } else {
                            Poisson::new(rate)
                                .map_err(|_| Error::NegativeRate { index: j, rate })?
                                .sample(rng)
                        };
                    }
                    x
                }
            };
            sample_views.push(x);
        }
        out.push(sample_views);
    }
    Ok(out)
}

/// Draws three-view samples with per-view matrices and shared factors,
/// `x_v = O_v h + noise`.
pub fn generate_multiview(
    o1: &TopicMatrix,
    o2: &TopicMatrix,
    o3: &TopicMatrix,
    dists: &[FactorDistribution],
    noise_sigma: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[DVector<f64>; 3]>> {
    let k = o1.k();
    if o2.k() != k || o3.k() != k || dists.len() != k {
        return Err(Error::DimensionMismatch("views disagree on k".into()));
    }
    for d in dists {
        d.validate()?;
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let h = DVector::from_iterator(k, dists.iter().map(|f| f.sample(rng)));
        let views = [o1, o2, o3].map(|o| {
            let mean = o.entries() * &h;
            if noise_sigma == 0.0 {
                mean
            } else {
                mean + DVector::from_fn(o.d(), |_, _| {
                    noise_sigma * rng.sample::<f64, _>(StandardNormal)
                })
            }
        });
        out.push(views);
    }
    Ok(out)
}

/// One independently evolving two-state factor of the factorial HMM, with
/// states {-1, +1}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorChain {
    /// P(-1 -> +1).
    pub up: f64,
    /// P(+1 -> -1).
    pub down: f64,
    /// Initial P(+1) for frozen chains (up = down = 0); moving chains start
    /// at their stationary distribution.
    pub frozen_plus: Option<f64>,
}

impl FactorChain {
    pub fn new(up: f64, down: f64) -> Self {
        Self { up, down, frozen_plus: None }
    }

    /// A chain that never moves, pinned at P(+1) = plus_prob.
    pub fn frozen(plus_prob: f64) -> Self {
        Self { up: 0.0, down: 0.0, frozen_plus: Some(plus_prob) }
    }

    /// Symmetric chain that flips state with the given probability.
    pub fn symmetric(flip_prob: f64) -> Self {
        Self::new(flip_prob, flip_prob)
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.up) || !(0.0..=1.0).contains(&self.down) {
            return Err(Error::InvalidTransition(format!(
                "transition probabilities ({}, {}) outside [0, 1]",
                self.up, self.down
            )));
        }
        if self.up + self.down == 0.0 {
            match self.frozen_plus {
                Some(p) if (0.0..=1.0).contains(&p) => Ok(()),
                _ => Err(Error::InvalidTransition(
                    "frozen chain needs an initial P(+1) in [0, 1]".into(),
                )),
            }
        } else {
            Ok(())
        }
    }

    /// Stationary P(+1).
    fn stationary_plus(&self) -> f64 {
        if self.up + self.down == 0.0 {
            self.frozen_plus.expect("validated")
        } else {
            self.up / (self.up + self.down)
        }
    }

    /// One-step correlation: `E[h_{t+1} | h_t] - m = b (h_t - m)` with
    /// `b = 1 - up - down`.
    fn decay(&self) -> f64 {
        1.0 - self.up - self.down
    }

    fn step(&self, state: f64, rng: &mut ChaCha8Rng) -> f64 {
        let flip = if state > 0.0 { self.down } else { self.up };
        if rng.gen::<f64>() < flip {
            -state
        } else {
            state
        }
    }
}

/// The three-timestep factorial HMM embedded as a multi-view model
/// conditioned on the middle hidden state: after subtracting the stationary
/// means, `E[x_t | h_2] = O_t (h_2 - m)` with `O_1 = O_3 = O diag(b)` and
/// `O_2 = O`, where `b_i` is the per-factor one-step correlation. Chains start
/// at their stationary distribution so the time reversal shares the same
/// transition law.
pub struct HmmEmbedding {
    pub o1: TopicMatrix,
    pub o2: TopicMatrix,
    pub o3: TopicMatrix,
    /// The common observation shift `O m` subtracted from every view.
    pub shift: DVector<f64>,
    /// Central moments of the centered conditioning state `h_2 - m`.
    pub factors: FactorSpec,
    observation: TopicMatrix,
    chains: Vec<FactorChain>,
    noise_sigma: f64,
}

/// Builds the multi-view embedding of a factorial HMM with per-factor
/// transition chains and observation map `E[x_t | h_t] = O h_t`.
pub fn embed_factorial_hmm(
    chains: &[FactorChain],
    observation: &TopicMatrix,
    noise_sigma: f64,
) -> Result<HmmEmbedding> {
    if chains.len() != observation.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} chains for k = {}",
            chains.len(),
            observation.k()
        )));
    }
    for c in chains {
        c.validate()?;
    }
    let k = chains.len();
    let decay = DVector::from_iterator(k, chains.iter().map(FactorChain::decay));
    let stationary_mean = DVector::from_iterator(
        k,
        chains.iter().map(|c| 2.0 * c.stationary_plus() - 1.0),
    );
    let mut side = observation.entries().clone();
    for j in 0..k {
        side.column_mut(j).scale_mut(decay[j]);
    }
    let o1 = TopicMatrix::new(side.clone(), TopicMode::Raw, 1e-12)?;
    let o3 = TopicMatrix::new(side, TopicMode::Raw, 1e-12)?;
    let o2 = TopicMatrix::new(observation.entries().clone(), TopicMode::Raw, 1e-12)?;
    let shift = observation.entries() * &stationary_mean;
    let factors = factor_spec_of(
        &chains
            .iter()
            .map(|c| FactorDistribution::TwoPoint { plus_prob: c.stationary_plus() })
            .collect::<Vec<_>>(),
    )?;
    // centered factors have mean zero
    let factors = FactorSpec::new(factors.factors().to_vec())?
        .with_mean(DVector::zeros(k))?;
    Ok(HmmEmbedding {
        o1,
        o2,
        o3,
        shift,
        factors,
        observation: observation.clone(),
        chains: chains.to_vec(),
        noise_sigma,
    })
}

/// Hidden trajectory `(h_1, h_2, h_3)` paired with its centered views.
pub type HmmDraw = ([DVector<f64>; 3], [DVector<f64>; 3]);

impl HmmEmbedding {
    /// Centered three-view samples `(x_1 - O m, x_2 - O m, x_3 - O m)`.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<[DVector<f64>; 3]> {
        self.sample_detailed(n, rng).into_iter().map(|(_, views)| views).collect()
    }

    /// Sampling that also exposes the hidden trajectories, for conditional
    /// verification.
    pub fn sample_detailed(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<HmmDraw> {
        let k = self.chains.len();
        let d = self.observation.d();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let h1 = DVector::from_iterator(
                k,
                self.chains.iter().map(|c| {
                    if rng.gen::<f64>() < c.stationary_plus() {
                        1.0
                    } else {
                        -1.0
                    }
                }),
            );
            let h2 = DVector::from_iterator(
                k,
                self.chains.iter().zip(h1.iter()).map(|(c, &s)| c.step(s, rng)),
            );
            let h3 = DVector::from_iterator(
                k,
                self.chains.iter().zip(h2.iter()).map(|(c, &s)| c.step(s, rng)),
            );
            let states = [h1, h2, h3];
            let views = [0, 1, 2].map(|t| {
                let mut x = self.observation.entries() * &states[t] - &self.shift;
                if self.noise_sigma > 0.0 {
                    for j in 0..d {
                        x[j] += self.noise_sigma * rng.sample::<f64, _>(StandardNormal);
                    }
                }
                x
            });
            out.push((states, views));
        }
        out
    }

    /// Analytic multi-view moments of the centered samples.
    pub fn multiview_moments(&self) -> Result<crate::algorithms::MultiViewMoments> {
        crate::algorithms::MultiViewMoments::analytic(&self.o1, &self.o2, &self.o3, &self.factors)
    }
}

/// Which ground-truth model a generator draws from.
pub enum GeneratorModel {
    Lda {
        topics: TopicMatrix,
        prior: DirichletParams,
        n_docs: usize,
        doc_len: usize,
    },
    /// Gaussian observations over hypercube factors h_i in {0, 1}.
    GaussianHypercube {
        topics: TopicMatrix,
        bernoulli_p: Vec<f64>,
        noise_sigma: f64,
        n: usize,
        views: usize,
    },
    PoissonFactors {
        topics: TopicMatrix,
        dists: Vec<FactorDistribution>,
        n: usize,
        views: usize,
    },
    MultiView {
        o1: TopicMatrix,
        o2: TopicMatrix,
        o3: TopicMatrix,
        dists: Vec<FactorDistribution>,
        noise_sigma: f64,
        n: usize,
    },
    FactorialHmm {
        chains: Vec<FactorChain>,
        observation: TopicMatrix,
        noise_sigma: f64,
        n: usize,
    },
}

/// A seeded ground-truth generator.
pub struct GeneratorSpec {
    pub model: GeneratorModel,
    pub seed: u64,
}

/// What a generator produces.
pub enum GeneratedData {
    Corpus(Corpus),
    /// Per-sample list of views.
    Views(Vec<Vec<DVector<f64>>>),
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<GeneratedData> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match &self.model {
            GeneratorModel::Lda { topics, prior, n_docs, doc_len } => Ok(GeneratedData::Corpus(
                generate_lda_corpus(topics, prior, *n_docs, *doc_len, &mut rng)?,
            )),
            GeneratorModel::GaussianHypercube { topics, bernoulli_p, noise_sigma, n, views } => {
                let dists: Vec<FactorDistribution> =
                    bernoulli_p.iter().map(|&p| FactorDistribution::Bernoulli { p }).collect();
                Ok(GeneratedData::Views(generate_independent_factor_samples(
                    topics,
                    &dists,
                    NoiseModel::Gaussian { sigma: *noise_sigma },
                    *n,
                    *views,
                    &mut rng,
                )?))
            }
            GeneratorModel::PoissonFactors { topics, dists, n, views } => {
                Ok(GeneratedData::Views(generate_independent_factor_samples(
                    topics,
                    dists,
                    NoiseModel::Poisson,
                    *n,
                    *views,
                    &mut rng,
                )?))
            }
            GeneratorModel::MultiView { o1, o2, o3, dists, noise_sigma, n } => {
                let samples = generate_multiview(o1, o2, o3, dists, *noise_sigma, *n, &mut rng)?;
                Ok(GeneratedData::Views(samples.into_iter().map(|v| v.to_vec()).collect()))
            }
            GeneratorModel::FactorialHmm { chains, observation, noise_sigma, n } => {
                let emb = embed_factorial_hmm(chains, observation, *noise_sigma)?;
                let samples = emb.sample(*n, &mut rng);
                Ok(GeneratedData::Views(samples.into_iter().map(|v| v.to_vec()).collect()))
            }
        }
    }
}

/// Column-stochastic topics whose mass concentrates on per-topic word blocks,
/// `concentration` on the block and the rest uniform. Well conditioned at any
/// d, unlike fully random simplex columns.
pub fn concentrated_topics(d: usize, k: usize, concentration: f64) -> Result<TopicMatrix> {
    if !(0.0..1.0).contains(&concentration) || d < k || k == 0 {
        return Err(Error::InvalidParameter("need 0 <= conc < 1 and d >= k >= 1".into()));
    }
    let block = d / k;
    let mut m = DMatrix::from_element(d, k, (1.0 - concentration) / d as f64);
    for j in 0..k {
        let start = j * block;
        let len = if j == k - 1 { d - start } else { block };
        for i in start..start + len {
            m[(i, j)] += concentration / len as f64;
        }
    }
    for j in 0..k {
        let s: f64 = m.column(j).iter().sum();
        m.column_mut(j).scale_mut(1.0 / s);
    }
    TopicMatrix::new(m, TopicMode::ProbabilityColumns, 1e-12)
}

/// Column-stochastic topics from normalized uniform draws, rejected until the
/// singular value ratio clears `min_sv_ratio`.
pub fn random_probability_topics(
    d: usize,
    k: usize,
    min_sv_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TopicMatrix> {
    for _ in 0..200 {
        let mut m = DMatrix::from_fn(d, k, |_, _| rng.gen::<f64>());
        for j in 0..k {
            let s: f64 = m.column(j).iter().sum();
            m.column_mut(j).scale_mut(1.0 / s);
        }
        if let Ok(t) = TopicMatrix::new(m, TopicMode::ProbabilityColumns, 1e-10) {
            if t.sigma_min() / t.sigma_max() >= min_sv_ratio {
                return Ok(t);
            }
        }
    }
    Err(Error::InvalidParameter(format!(
        "no {d}x{k} stochastic draw reached sigma ratio {min_sv_ratio} in 200 tries"
    )))
}

/// Standard normal topic matrix, rejected until the singular value ratio
/// clears `min_sv_ratio`.
pub fn random_gaussian_topics(
    d: usize,
    k: usize,
    min_sv_ratio: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TopicMatrix> {
    for _ in 0..200 {
        let m = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(t) = TopicMatrix::new(m, TopicMode::Raw, 1e-10) {
            if t.sigma_min() / t.sigma_max() >= min_sv_ratio {
                return Ok(t);
            }
        }
    }
    Err(Error::InvalidParameter(format!(
        "no {d}x{k} gaussian draw reached sigma ratio {min_sv_ratio} in 200 tries"
    )))
}
