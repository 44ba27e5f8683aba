use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("two marked points share the position {0:?}")]
    DuplicatePosition(Vec<f64>),
    #[error("zero velocity at position {0:?}")]
    ZeroVelocity(Vec<f64>),
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown symbol `{symbol}` at byte {offset}")]
    UnknownSymbol { offset: usize, symbol: String },
    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {error:e})")]
    QuadratureFailure { tolerance: f64, error: f64 },
    #[error("moment of order {0} diverges over the full velocity space")]
    DivergentMoment(u32),
    #[error("enumeration over {size} points exceeds the budget of {limit}")]
    BudgetExceeded { size: usize, limit: usize },
    #[error("truncation bound {bound:e} exceeds requested tolerance {tolerance:e}")]
    TruncationTooLoose { bound: f64, tolerance: f64 },
    #[error("phase boxes {0} and {1} overlap")]
    OverlappingBoxes(usize, usize),
    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: usize, message: String },
}
