use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty interval [{t1}, {t2}]")]
    EmptyInterval { t1: f64, t2: f64 },

    #[error("pulse has zero weight on [{t1}, {t2}]")]
    ZeroWeight { t1: f64, t2: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimate {estimate}, error {error}")]
    Quadrature {
        a: f64,
        b: f64,
        estimate: f64,
        error: f64,
    },

    #[error("root bracketing failed on [{a}, {b}] ({detail})")]
    RootBracketing { a: f64, b: f64, detail: String },

    #[error("fixed point did not converge after {iterations} iterations (last iterates {previous}, {last})")]
    FixedPoint {
        iterations: usize,
        previous: f64,
        last: f64,
    },

    #[error("all endpoint derivatives vanish up to order {cap}")]
    TaylorOrder { cap: usize },

    #[error("unsupported order n = {0}")]
    UnsupportedOrder(usize),

    #[error("constraint violated at t = {t}: denominator {denominator}")]
    ConstraintViolated { t: f64, denominator: f64 },

    #[error("step size collapsed at t = {t} (h = {h})")]
    StepSizeCollapse { t: f64, h: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
