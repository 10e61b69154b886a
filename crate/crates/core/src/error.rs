use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cloud has {len} points but capacity is {k_max}")]
    CloudTooLarge { len: usize, k_max: usize },
    #[error("point {index} has coordinate {value} outside [-1, 1]")]
    CoordinateOutOfRange { index: usize, value: f64 },
    #[error("cannot truncate {n_max} outputs to {n_tilde}")]
    TruncationTooLong { n_tilde: usize, n_max: usize },
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("auction did not converge within {0} bids")]
    NonConvergence(usize),
    #[error("assignment plan does not match its inputs: {0}")]
    PlanMismatch(String),
    #[error("group {0} has no points")]
    EmptyGroup(usize),
    #[error("frame {0} has no points")]
    NoPoints(usize),
    #[error("unknown velocity field `{0}`")]
    UnknownField(String),
    #[error("need at least 3 frames, got {0}")]
    InsufficientFrames(usize),
    #[error("architecture mismatch: {0}")]
    ArchMismatch(String),
    #[error("trace does not match gradient: {0}")]
    TraceMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("invalid dimension {0}, expected 2 or 3")]
    InvalidDimension(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
