use thiserror::Error;

/// Errors raised by the fitting and evaluation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// All mass sits on the uniform component, so no Kato-Jones component can be recovered.
    #[error("degenerate mixture: {0}")]
    Degenerate(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("empty sample")]
    EmptySample,

    /// Kato-Jones density with gamma = 0 is uniform and has no unique mode.
    #[error("no unique mode: density is uniform")]
    NoUniqueMode,

    #[error("rejection envelope exceeded: density {density} > envelope {envelope}")]
    EnvelopeFailure { density: f64, envelope: f64 },

    /// The objective produced NaN or an infinity.
    #[error("non-finite objective value {value} at {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    /// A mixture component lost all of its responsibility mass.
    #[error("component {component} died at iteration {iteration} (responsibility mass {mass:e})")]
    DeadComponent {
        component: usize,
        iteration: usize,
        mass: f64,
    },

    #[error("unbounded concentration: mean resultant length {0} >= 1")]
    UnboundedConcentration(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("all {0} optimizer starts failed")]
    AllStartsFailed(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data; `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
