use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not enough samples: basis size {basis} exceeds sample count {samples}")]
    InsufficientSamples { basis: usize, samples: usize },

    #[error("feature matrix is rank deficient: numerical rank {rank} < basis size {basis}")]
    RankDeficient { rank: usize, basis: usize },

    #[error("singular value decomposition failed to converge")]
    SvdFailed,

    #[error("eigendecomposition failed to converge")]
    EigenFailed,

    #[error("matrix logarithm undefined: eigenvalue {index} has modulus {modulus:e}")]
    SingularLog { index: usize, modulus: f64 },

    #[error("eigenvector matrix too ill-conditioned for functional calculus (condition number {0:e})")]
    IllConditioned(f64),

    #[error("non-finite state at step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },

    #[error("quadrature cross-check disagrees: |exact - quadrature| = {0:e}")]
    QuadratureMismatch(f64),

    #[error("unknown system `{0}`")]
    UnknownSystem(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
