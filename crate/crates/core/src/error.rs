use std::path::PathBuf;

/// Errors produced by the rewriting engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("text is empty after trimming")]
    EmptyText,
    #[error("source text has zero tokens")]
    EmptySource,
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in vector")]
    NonFinite,
    #[error("remote service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("no embedding for text (fingerprint {0})")]
    UnknownText(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("style pool is empty")]
    EmptyPool,
    #[error("need at least {needed} nodes, pool has {actual}")]
    TooFewNodes { needed: usize, actual: usize },
    #[error("need at least {needed} samples, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("reward weights must be non-negative and sum to 1 (sum = {0})")]
    WeightsNotNormalized(f64),
    #[error("candidate set is empty")]
    EmptySet,
    #[error("mock rewrite rule failed: {0}")]
    MockRuleError(String),
    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),
    #[error("no pair has source entities")]
    AllPairsEmpty,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("snapshot version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("no records left after filtering")]
    EmptyAfterFiltering,
    #[error("pool is locked by another run: {}", .0.display())]
    Locked(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
