use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("operator is not block diagonal: cross-sector element {value:e} at ({row}, {col})")]
    Structure { row: usize, col: usize, value: f64 },
    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },
    #[error("cutoff convergence failed at cutoff {cutoff} (worst overlap deficit {worst_deficit:e})")]
    Convergence { cutoff: usize, worst_deficit: f64 },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("observable undefined: {0}")]
    Undefined(String),
    #[error("symmetry violation: <x_{mode}> = {value:e}")]
    Symmetry { mode: char, value: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("trajectory norm collapsed to {norm:e} at t = {time}; increase the cutoff")]
    Truncation { norm: f64, time: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    #[error("steady state is not unique: null space of dimension {0}")]
    Degenerate(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
