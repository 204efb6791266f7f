//! Excess correlation analysis (ECA): spectral, moment-based parameter
//! recovery for exchangeable and multi-view latent variable models.
//!
//! The method whitens a pairwise moment matrix and then diagonalizes a
//! contracted higher-order moment with a second SVD, both on k x k matrices.
//! It recovers the conditional-mean matrix `O` (topic matrix) in canonical
//! form for independent skewed or kurtotic factors, the probability columns
//! and prior of latent Dirichlet allocation from low-order moments, and the
//! view matrices of multi-view models after a symmetrization step.
//!
//! Modules:
//! - [`model`]: shared domain types (topic matrices, factor specs, corpora).
//! - [`moments`]: analytic and empirical moment sets and contraction oracles.
//! - [`spectral`]: range finding, whitening, SVD extraction, power iteration.
//! - [`algorithms`]: the exact-moment recovery algorithms.
//! - [`pipeline`]: the sampled-data LDA fitting path.
//! - [`synthetic`]: ground-truth generators for every supported model.
//! - [`eval`]: column alignment, error metrics and the sample-complexity sweep.
//! - [`io`]: UCI bag-of-words files, topic TSVs and run records.

pub mod algorithms;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod moments;
pub mod pipeline;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use model::{
    Corpus, Diagnostics, DirichletParams, Document, FactorMoments, FactorSpec, RecoveryResult,
    RecoveryStatus, TopicMatrix, TopicMode,
};
pub use moments::{MomentAccumulator, MomentOptions, MomentSet, Provenance};

/// Stable seed mixing for deriving independent substream seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over the xored pair
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
