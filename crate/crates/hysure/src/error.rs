use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("unsupported wavelet: Daubechies with {0} taps (supported: 2, 4, 6, 8, 10)")]
    UnsupportedWavelet(usize),

    #[error("signal length {len} is not divisible by 2^{levels}")]
    NotDyadic { len: usize, levels: usize },

    #[error(
        "noise regression ill-posed: n = {n} pixels <= p = {p} bands; \
         decimate the scene or supply a noise file"
    )]
    IllPosedRegression { n: usize, p: usize },

    #[error("non-positive noise variance at band {0}")]
    NonPositiveVariance(usize),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("invalid model id {0} (expected 1..=7)")]
    InvalidModelId(usize),

    #[error("model {0} is low-rank and requires a rank argument")]
    MissingRank(usize),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("endmember generation failed: could not satisfy pairwise angle >= {min_deg} degrees after {attempts} attempts")]
    EndmemberDistinctness { min_deg: f64, attempts: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
