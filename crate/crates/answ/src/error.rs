use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("symbol {symbol} at index {index} is out of range for alphabet size {alphabet_size}")]
    SymbolOutOfRange {
        index: usize,
        symbol: usize,
        alphabet_size: usize,
    },

    #[error("alphabet size {0} must lie in 1..=256")]
    InvalidAlphabet(usize),

    #[error("entropy is undefined for a distribution with zero total count")]
    EmptyDistribution,

    #[error("symbol {0} has zero probability; the rate-gap bound diverges")]
    ZeroProbability(usize),

    #[error("table size {table_size} cannot hold {symbols} distinct symbols")]
    TableTooSmall { symbols: usize, table_size: usize },

    #[error("table size {0} must be a power of two in 2..=4096")]
    InvalidTableSize(usize),

    #[error("bin count {0} must be an odd integer in 3..=255")]
    InvalidBins(usize),

    #[error("percentile {0} must lie in (0, 100]")]
    InvalidPercentile(f64),

    #[error("cannot derive a positive scale: all weights are zero")]
    DegenerateScale,

    #[error("tensor has no elements")]
    EmptyTensor,

    #[error("stream has no symbols")]
    EmptyStream,

    #[error("symbol {0} is not present in the encode table")]
    UnencodableSymbol(u8),

    #[error("corrupt stream: {0}")]
    CorruptStream(&'static str),

    #[error("stream {index}: {source}")]
    StreamDecode {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("requested {requested} symbols but stream holds {actual}")]
    SymbolCountMismatch { requested: usize, actual: usize },

    #[error("shape {shape:?} does not describe {count} elements")]
    ShapeMismatch { shape: Vec<usize>, count: usize },

    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },

    #[error(
        "target entropy {target_bits} bits is outside the achievable range \
         [{min_bits}, {max_bits}] bits"
    )]
    InfeasibleTarget {
        target_bits: f64,
        min_bits: f64,
        max_bits: f64,
    },

    #[error("no entropy table entry for {bins} bins")]
    MissingEntropyEntry { bins: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),

    #[error("bad magic: not an ANSW archive")]
    BadMagic,

    #[error("unsupported archive version {0}")]
    UnsupportedVersion(u16),

    #[error("archive truncated while reading {0}")]
    Truncated(&'static str),

    #[error("invalid table: frequencies sum to {sum}, expected {expected}")]
    InvalidFreqSum { sum: u64, expected: u64 },

    #[error("invalid archive: {0}")]
    InvalidArchive(String),

    #[error("duplicate layer name {0:?}")]
    DuplicateLayer(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("tensor file {path}: expected {expected} bytes, found {actual}")]
    LengthMismatch {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that mean the archive bytes themselves are damaged,
    /// as opposed to bad caller input. The CLI maps these to a distinct
    /// exit code.
    pub fn is_corrupt_data(&self) -> bool {
        matches!(
            self,
            Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::Truncated(_)
                | Error::InvalidFreqSum { .. }
                | Error::InvalidArchive(_)
                | Error::CorruptStream(_)
                | Error::StreamDecode { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
