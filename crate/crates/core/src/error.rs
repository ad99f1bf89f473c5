use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {x} outside spline span [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed file: {0}")]
    MalformedFile(String),

    #[error("checksum mismatch: stored {stored}, computed {computed}")]
    ChecksumFailure { stored: String, computed: String },

    #[error("feature `{0}` is constant in the training data")]
    ConstantFeature(String),

    #[error("index {index} out of range for {len} categories")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("too few records: {0}")]
    TooFewRecords(String),

    #[error("only one class present")]
    SingleClass,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("class too small: {0}")]
    ClassTooSmall(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("line search failed after {0} trials")]
    LineSearchFailure(usize),

    #[error("requested size {requested} exceeds available {available}")]
    SizeExceedsData { requested: usize, available: usize },

    #[error("empty search space")]
    EmptySearchSpace,

    #[error("could not reach class balance within {0} candidates")]
    BalanceUnreachable(usize),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("empty background set")]
    EmptyBackground,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
