use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for ambient dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in trajectory at t = {t}: {what}")]
    NonFinite { t: f64, what: String },

    #[error("ODE step size underflow at r = {last_good_r}")]
    StepUnderflow { last_good_r: f64 },

    #[error("maximizer hit bracket edge R = {edge} twice")]
    BracketEdge { edge: f64 },

    #[error("lambda profile is not unimodal: local maxima near {0:?}")]
    Multimodal(Vec<f64>),

    #[error("too few usable points: need {needed}, have {have}")]
    TooFewPoints { needed: usize, have: usize },

    #[error("checkpoint grid too coarse: ratio {ratio} exceeds {max}")]
    GridTooCoarse { ratio: f64, max: f64 },

    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
