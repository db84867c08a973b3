use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("operator order {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),

    #[error("row count {rows} out of range 1..={max}")]
    RowCountOutOfRange { rows: usize, max: usize },

    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("location map entry {index} is out of range or not strictly increasing (row count {rows})")]
    BadLocationMap { index: usize, rows: usize },

    #[error("value {0} does not fit a signed 16-bit payload")]
    PayloadOutOfRange(i64),

    #[error("insertion levels {0} out of range 1..=16")]
    BadLevels(u32),

    #[error("chunk {chunk} is invalid for {levels} insertion levels")]
    BadChunk { chunk: i64, levels: u32 },

    #[error("eligible prediction error {0} needs a chunk")]
    MissingChunk(i64),

    #[error("marked value {0} overflows signed 32 bits")]
    Overflow(i64),

    #[error("threshold {threshold} exceeds the overflow-safe limit {limit} for {levels} levels")]
    UnsafeThreshold { threshold: u32, limit: u32, levels: u32 },

    #[error("measurement stream is empty")]
    EmptyStream,

    #[error("inconsistent stream: {0}")]
    Inconsistent(String),

    #[error("key material must be at least 16 bytes, got {0}")]
    ShortKey(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver diverged at iteration {0}")]
    Diverged(usize),

    #[error("malformed stream file: {0}")]
    Format(String),

    #[error("checksum mismatch: stored {stored:#010x}, recovered {recovered:#010x} (wrong key or threshold?)")]
    Checksum { stored: u32, recovered: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
