use thiserror::Error;

/// Errors produced by stream loading, detector management and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv parse error: {0}")]
    Csv(String),

    #[error("empty stream: {0}")]
    EmptyStream(String),

    #[error("bad input at row {row}: {msg}")]
    BadRow { row: usize, msg: String },

    #[error("batch size must be >= 2, got {0}")]
    BatchSizeTooSmall(usize),

    #[error("stream of length {len} too short for batch size {batch_size}: {msg}")]
    StreamTooShort {
        len: usize,
        batch_size: usize,
        msg: String,
    },

    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),

    #[error("bad generator spec: {0}")]
    BadGeneratorSpec(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("invalid hyperparameter for {family}: {msg}")]
    InvalidHyperparam { family: String, msg: String },

    #[error("batch of {len} points too short: architecture {family} needs {needed}")]
    BatchTooShortForWarmup {
        len: usize,
        family: String,
        needed: usize,
    },

    #[error("dimension mismatch: model expects {expected}, batch has {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("score vectors too short for rank statistics: {len} < {min}")]
    ScoresTooShort { len: usize, min: usize },

    #[error("need at least {min} score vectors, got {got}")]
    TooFewVectors { got: usize, min: usize },

    #[error("unknown model id {0}")]
    UnknownModel(crate::ModelId),

    #[error("representative set is empty")]
    EmptyRepresentatives,

    #[error("representative {0} has no score vector")]
    MissingRepresentativeScores(crate::ModelId),

    #[error("power iteration did not converge after {0} iterations")]
    NonConvergence(usize),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
