use crate::model::Domain;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch on axis `{axis}`: expected {expected}, got {got}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("waveform is in the {got:?} domain, expected {expected:?}")]
    WrongDomain { expected: Domain, got: Domain },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point is off the manifold (max relative modulus deviation {deviation:e})")]
    OffManifold { deviation: f64 },

    #[error("retraction produced a zero entry at index {index}")]
    ZeroEntry { index: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("dense oracle size {n} exceeds cap {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
