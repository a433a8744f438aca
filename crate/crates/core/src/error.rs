use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not reach tolerance (estimate {estimate:e}, error {error:e} after {intervals} intervals)")]
    QuadratureNonConvergence {
        estimate: f64,
        error: f64,
        intervals: usize,
    },

    #[error("divergent Laplace exponent: {0}")]
    Divergence(String),

    #[error("projection is not linear in x (relative residual {residual:e})")]
    Nonlinearity { residual: f64 },

    #[error("sum-of-powers fit failed: relative residual {residual:e} with {terms} terms")]
    FitFailure { residual: f64, terms: usize },

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("inconsistent scaling relations: {0}")]
    Inconsistent(String),

    #[error("ratio looks rational: {p}/{q}")]
    IrrationalitySuspect { p: i64, q: i64 },

    #[error("integrator step underflow at v = {at}")]
    StepUnderflow { at: f64 },

    #[error("argument {requested} outside solved grid [0, {v_max}]")]
    OutOfGrid { requested: f64, v_max: f64 },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("decode error: {0}")]
    Decode(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
