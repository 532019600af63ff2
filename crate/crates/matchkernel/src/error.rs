use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative activation {value} at flat index {index} (pass allow_negative to accept)")]
    NegativeActivation { index: usize, value: f32 },

    #[error("non-finite value {value} at flat index {index}")]
    NonFiniteValue { index: usize, value: f32 },

    #[error("sample rank {rank} is below the requested output dimension {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("sample of {sample} vectors is too small, need at least {required}")]
    SampleTooSmall { sample: usize, required: usize },

    #[error("visual word {word} out of range for codebook of size {kappa}")]
    WordOutOfRange { word: u32, kappa: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("zero aggregate: {0}")]
    ZeroAggregate(&'static str),

    #[error("duplicate image id {0}")]
    DuplicateImageId(u32),

    #[error("duplicate entry `{0}` in ranking")]
    DuplicateRankingEntry(String),

    #[error("no usable queries: {0}")]
    NoUsableQueries(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("unsupported format version {got}, expected {expected}")]
    BadVersion { expected: u32, got: u32 },

    #[error("truncated file while reading {0}")]
    Truncated(&'static str),

    #[error("malformed data: {0}")]
    FormatViolation(String),

    #[error("line {line}: {msg}")]
    TextFormat { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
