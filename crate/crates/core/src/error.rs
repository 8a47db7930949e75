use thiserror::Error;

use crate::forms::Grade;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("operands live on different grids")]
    GridMismatch,

    #[error("Helmholtz problem with F = 0 is unsolvable: mean(mu) = {mean:e}, |mu| = {norm:e}")]
    Solvability { mean: f64, norm: f64 },

    #[error("exterior derivative of a top-degree form ({0:?})")]
    TopGrade(Grade),

    #[error("interior product is undefined on a 0-form")]
    InteriorOfScalar,

    #[error("unsupported operand: {0}")]
    Unsupported(String),

    #[error("operation requires a {required}D grid, got {found}D")]
    Dimension { required: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("vector field is not divergence free: residual {residual:e} > {tolerance:e}")]
    NotDivergenceFree { residual: f64, tolerance: f64 },

    #[error("noise basis mismatch: {0}")]
    Basis(String),

    #[error("point {0:?} cannot be evaluated: non-finite coordinate")]
    Interpolation([f64; 3]),

    #[error("non-finite state at t = {time}; last finite state at t = {last_good_time}")]
    Blowup { time: f64, last_good_time: f64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
