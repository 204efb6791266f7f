use thiserror::Error;

/// Errors produced by moment construction, whitening, recovery and corpus I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rank deficient matrix: sigma_k/sigma_1 = {ratio:.3e} below tolerance {tol:.3e}")]
    RankDeficient { ratio: f64, tol: f64 },

    #[error("column {col} is not a probability column: {reason}")]
    BadColumnNormalization { col: usize, reason: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("alpha0 must be nonnegative, got {0}")]
    NegativeAlpha0(f64),

    #[error("no document satisfies the moment preconditions")]
    EmptyCorpus,

    #[error("accumulators were built over different dimensions or options")]
    OptionsMismatch,

    #[error("accumulator holds no documents")]
    EmptyAccumulator,

    #[error("range finder collapsed: numerical rank {rank} < requested k = {k}")]
    RankCollapse { rank: usize, k: usize },

    #[error("projected pairs matrix is numerically singular (eigenvalue ratio {ratio:.3e})")]
    SingularProjectedPairs { ratio: f64 },

    #[error("pairs matrix has numerical rank below k = {k} (singular value ratio {ratio:.3e})")]
    InsufficientRank { k: usize, ratio: f64 },

    #[error("projected cross moment stayed ill conditioned after {retries} attempts")]
    SingularProjection { retries: usize },

    #[error("column has no mass left after clipping")]
    AllZeroAfterClip,

    #[error("negative Poisson rate {rate:.3e} at coordinate {index}")]
    NegativeRate { index: usize, rate: f64 },

    #[error("invalid transition specification: {0}")]
    InvalidTransition(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed bag-of-words header: {0}")]
    MalformedHeader(String),

    #[error("{what} {value} outside declared range [1, {max}] at line {line}")]
    IndexOutOfRange {
        what: &'static str,
        value: i64,
        max: usize,
        line: usize,
    },

    #[error("count {value} is not positive at line {line}")]
    CountNonPositive { value: i64, line: usize },

    #[error("vocabulary has {got} entries, expected {expected}")]
    VocabLengthMismatch { got: usize, expected: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
