use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid LFSR seed: register state must be nonzero")]
    InvalidSeed,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("time base {time_base} Hz below Nyquist for {f_max} Hz modulation")]
    Aliasing { time_base: f64, f_max: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("symbol {symbol} does not carry reference pilots")]
    NotAPilotSymbol { symbol: usize },

    #[error("representation mismatch: {0}")]
    RepresentationMismatch(String),

    #[error("bad bit character {0:?}: expected '0' or '1'")]
    BadBitChar(char),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse config: {0}")]
    ConfigParse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
